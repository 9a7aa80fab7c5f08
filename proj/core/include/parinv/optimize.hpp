#pragma once

#include "parinv/linalg.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace parinv {

struct OptimizerConfig {
  std::size_t n_starts = 30;
  std::size_t max_evals = 3000;
  double local_tol = 1e-6;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Objective over a box; return +inf for infeasible points.
using BoxObjective = std::function<double(const Vector& x)>;
/// Feasibility test used to screen start points. Empty means "whole box".
using FeasibleSet = std::function<bool(const Vector& x)>;

struct LocalResult {
  Vector x;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead in box-normalized coordinates (each axis scaled to [0, 1]).
/// Points outside the box are infeasible (+inf). Stops when both the spread
/// of simplex values (relative) and the simplex diameter fall below `tol`,
/// or when `max_evals` is reached.
LocalResult nelder_mead(const BoxObjective& f, const Vector& lower, const Vector& upper,
                        const Vector& start, double tol, std::size_t max_evals,
                        double initial_step = 0.05);

struct MultistartResult {
  Vector x;
  double value = 0.0;
  std::size_t evaluations = 0;
  std::size_t starts_run = 0;
  /// No restart met the tolerance; x is the best point seen.
  bool budget_exhausted = false;
  std::vector<LocalResult> restarts;
};

/// Latin-hypercube restarts, each followed by Nelder-Mead with an equal share
/// of the evaluations still unspent out of `max_evals`. Injected starts replace the first LHS points. Ties keep the
/// first-found point. Deterministic in config.seed.
MultistartResult multistart_minimize(const BoxObjective& f, const Vector& lower,
                                     const Vector& upper, const OptimizerConfig& config,
                                     const FeasibleSet& feasible = {},
                                     const std::vector<Vector>& injected_starts = {});

/// n points of a Latin hypercube on [lower, upper].
std::vector<Vector> latin_hypercube(const Vector& lower, const Vector& upper, std::size_t n,
                                    std::uint64_t seed);

}  // namespace parinv
