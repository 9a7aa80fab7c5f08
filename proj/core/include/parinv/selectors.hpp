#pragma once

// Classical regularization-parameter selectors, evaluated jointly over
// (m, alpha), and the multistart search used to minimize them.

#include "parinv/optimize.hpp"
#include "parinv/posterior.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace parinv {

enum class Criterion { gcv, ml, cls };

std::string_view to_string(Criterion c);

struct SelectorScore {
  Criterion criterion = Criterion::gcv;
  double value = 0.0;
  double alpha = 0.0;
  Vector m;
};

/// |B^{-1} u|^2 / tr(B^{-1})^2 with B = I + alpha^{-1} A K^{-1} A'.
double gcv_score(const ProblemDefinition& problem, const Vector& m, double alpha);
/// u' B^{-1} u / det(B^{-1})^{1/n}, evaluated as exp(log(u'B^{-1}u) + logdet(B)/n).
double ml_score(const ProblemDefinition& problem, const Vector& m, double alpha);
/// |u - A g_min|^2 computed as |B^{-1} u|^2.
double cls_residual(const ProblemDefinition& problem, const Vector& m, double alpha);

SelectorScore score(Criterion c, const ProblemDefinition& problem, const Vector& m, double alpha);

struct SelectorFit {
  Criterion criterion = Criterion::gcv;
  Vector m;
  double log10_alpha = 0.0;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
};

/// Minimizes GCV or ML over (m, log10 alpha) inside the prior box and support.
/// `start` (m followed by log10 alpha) is injected as the first restart when given.
SelectorFit minimize_selector(const ProblemDefinition& problem, Criterion criterion,
                              const PriorSpec& prior, const OptimizerConfig& config,
                              const std::optional<Vector>& start = std::nullopt);

struct ClsFit {
  double alpha = 0.0;
  Vector m;
  double value = 0.0;  // profiled objective |A g - u|^2 + alpha |g|_K^2 at the minimizer
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
};

/// For each fixed alpha, minimizes the profiled Tikhonov functional over m.
std::vector<ClsFit> cls_fixed_alpha_fit(const ProblemDefinition& problem,
                                        const std::vector<double>& alphas,
                                        const PriorSpec& prior, const OptimizerConfig& config);

}  // namespace parinv
