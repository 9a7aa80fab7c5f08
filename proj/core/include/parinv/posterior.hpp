#pragma once

#include "parinv/linalg.hpp"
#include "parinv/rng.hpp"

#include <atomic>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace parinv {

/// Builds A_m for a nonlinear parameter m. Must be deterministic and safe to
/// call concurrently.
using OperatorFactory = std::function<ForwardOperator(const Vector& m)>;

struct ProblemDefinition {
  Vector data;  // u
  OperatorFactory make_operator;
  RegularizerGram gram = RegularizerGram::identity(1);
  Index q = 1;

  Index n() const noexcept { return data.size(); }
  Index p() const noexcept { return gram.p(); }

  /// Throws std::invalid_argument on an empty factory, q < 1 or u == 0.
  void validate() const;
};

/// Uniform prior over a box in (m, log10 alpha), optionally cut down by a
/// support predicate on m.
struct PriorSpec {
  Vector m_lower;
  Vector m_upper;
  double log10_alpha_lower = -5.0;
  double log10_alpha_upper = 0.0;
  std::function<bool(const Vector& m)> support;  // empty means "whole box"

  Index q() const noexcept { return m_lower.size(); }
  Index dim() const noexcept { return q() + 1; }

  bool contains(const Vector& m, double log10_alpha) const;
  /// State is m followed by log10 alpha.
  bool contains_state(const Vector& state) const;
  /// 0 inside the support, -inf outside (densities are non-normalized).
  double log_density(const Vector& m, double log10_alpha) const;
  /// One uniform draw from the box, ignoring the predicate.
  Vector sample_box(StreamRng& rng) const;
  /// Box lower/upper corners in state coordinates.
  Vector state_lower() const;
  Vector state_upper() const;

  void validate() const;
};

struct LogDensityValue {
  double log_value = -std::numeric_limits<double>::infinity();
  double sigma_max_sq = 0.0;
  double misfit = 0.0;
  double logdet = 0.0;
  bool in_support = false;
  bool misfit_clamped = false;
};

/// A non-normalized log density over states x = (m, log10 alpha) together with
/// its prior. This is what the samplers consume.
class LogTarget {
 public:
  virtual ~LogTarget() = default;
  virtual const PriorSpec& prior() const = 0;
  /// -inf outside the prior support. May throw FactorizationFailure.
  virtual double log_density(const Vector& state) const = 0;
  Index dim() const { return prior().dim(); }
};

/// The sigma-marginalized posterior
///
///   log R(m, alpha) = -1/2 log det B - n/2 log(u' B^{-1} u) + log prior(m, alpha)
///
/// with B = I_n + alpha^{-1} A_m K^{-1} A_m'. Immutable after construction and
/// safe for concurrent evaluation.
class PosteriorEvaluator final : public LogTarget {
 public:
  PosteriorEvaluator(ProblemDefinition problem, PriorSpec prior);

  const ProblemDefinition& problem() const noexcept { return problem_; }
  const PriorSpec& prior() const override { return prior_; }

  LogDensityValue evaluate(const Vector& m, double alpha) const;
  LogDensityValue evaluate_state(const Vector& state) const;
  double log_density(const Vector& state) const override;

  /// Same as evaluate() but without the support short-circuit; used by the
  /// optimizers and grids that want the density outside the prior box.
  LogDensityValue evaluate_unconstrained(const Vector& m, double alpha) const;

  /// Number of evaluations whose misfit was clamped away from zero.
  std::uint64_t clamp_events() const noexcept { return clamp_events_.load(); }

 private:
  LogDensityValue evaluate_linear_part(const Vector& m, double alpha) const;

  ProblemDefinition problem_;
  PriorSpec prior_;
  mutable std::atomic<std::uint64_t> clamp_events_{0};
};

/// Free-function form of PosteriorEvaluator::evaluate.
LogDensityValue log_posterior(const ProblemDefinition& problem, const PriorSpec& prior,
                              const Vector& m, double alpha);

/// sigma^2_max = (alpha |g_min|_K^2 + |u - A g_min|^2) / n.
double sigma_max(const ProblemDefinition& problem, const Vector& m, double alpha);

/// log rho(u | sigma, m, alpha) with g integrated out under the scaled
/// Gaussian prior:
///   -n/2 log(2 pi sigma^2) - 1/2 log det B - misfit / (2 sigma^2).
double log_marginal_likelihood(const ProblemDefinition& problem, const Vector& m, double alpha,
                               double sigma);

/// Brute-force table of log R over a tensor grid of m points and log10 alpha values.
struct PosteriorGrid {
  std::vector<Vector> m_points;
  std::vector<double> log10_alpha;
  Matrix log_values;  // rows: m points, cols: alpha values
  /// Per-node error text; empty when the node evaluated cleanly.
  std::vector<std::string> errors;

  std::size_t failures() const;
};

PosteriorGrid posterior_grid(const PosteriorEvaluator& evaluator, std::vector<Vector> m_points,
                             std::vector<double> log10_alpha);

/// Trapezoid-quadrature marginals of a grid over scalar m. Both are
/// normalized densities on their own axis.
struct GridMarginals {
  std::vector<double> m_axis;
  std::vector<double> m_density;
  std::vector<double> alpha_axis;
  std::vector<double> alpha_density;
};

GridMarginals grid_marginals(const PosteriorGrid& grid);

/// Trapezoid integral of samples y over the strictly increasing abscissae x.
double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace parinv
