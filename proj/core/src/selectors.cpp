#include "parinv/selectors.hpp"

#include "parinv/errors.hpp"

#include <cmath>
#include <limits>

namespace parinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LowRankFactor factor_at(const ProblemDefinition& problem, const Vector& m, double alpha) {
  const ForwardOperator op = problem.make_operator(m);
  return factorize_low_rank(op, problem.gram, alpha);
}

BoxObjective guarded(const PriorSpec& prior, std::function<double(const Vector&)> f) {
  return [&prior, f = std::move(f)](const Vector& x) -> double {
    if (!prior.contains_state(x)) return kInf;
    try {
      return f(x);
    } catch (const FactorizationFailure&) {
      return kInf;
    }
  };
}

}  // namespace

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::gcv: return "GCV";
    case Criterion::ml: return "ML";
    case Criterion::cls: return "CLS";
  }
  return "?";
}

double gcv_score(const ProblemDefinition& problem, const Vector& m, double alpha) {
  const LowRankFactor f = factor_at(problem, m, alpha);
  const Matrix hat_complement = f.inverse();
  const double num = (hat_complement * problem.data).squaredNorm();
  const double tr = hat_complement.trace();
  return num / (tr * tr);
}

double ml_score(const ProblemDefinition& problem, const Vector& m, double alpha) {
  const LowRankFactor f = factor_at(problem, m, alpha);
  const double n = static_cast<double>(problem.n());
  return std::exp(std::log(f.quadratic(problem.data)) + f.logdet / n);
}

double cls_residual(const ProblemDefinition& problem, const Vector& m, double alpha) {
  // u - A g_min = B^{-1} u
  return factor_at(problem, m, alpha).solve(problem.data).squaredNorm();
}

SelectorScore score(Criterion c, const ProblemDefinition& problem, const Vector& m, double alpha) {
  SelectorScore s;
  s.criterion = c;
  s.alpha = alpha;
  s.m = m;
  switch (c) {
    case Criterion::gcv: s.value = gcv_score(problem, m, alpha); break;
    case Criterion::ml: s.value = ml_score(problem, m, alpha); break;
    case Criterion::cls: s.value = cls_residual(problem, m, alpha); break;
  }
  return s;
}

SelectorFit minimize_selector(const ProblemDefinition& problem, Criterion criterion,
                              const PriorSpec& prior, const OptimizerConfig& config,
                              const std::optional<Vector>& start) {
  if (criterion == Criterion::cls) {
    throw std::invalid_argument("minimize_selector: CLS is fitted at fixed alpha values");
  }
  problem.validate();
  prior.validate();
  const Index q = prior.q();
  auto objective = guarded(prior, [&](const Vector& x) {
    const double alpha = std::pow(10.0, x[q]);
    const Vector m = x.head(q);
    return criterion == Criterion::gcv ? gcv_score(problem, m, alpha) : ml_score(problem, m, alpha);
  });

  std::vector<Vector> injected;
  if (start) {
    if (start->size() != prior.dim()) throw DimensionMismatch("selector start dimension");
    injected.push_back(*start);
  }
  const MultistartResult r =
      multistart_minimize(objective, prior.state_lower(), prior.state_upper(), config,
                          [&prior](const Vector& x) { return prior.contains_state(x); }, injected);

  SelectorFit fit;
  fit.criterion = criterion;
  fit.m = r.x.head(q);
  fit.log10_alpha = r.x[q];
  fit.value = r.value;
  fit.evaluations = r.evaluations;
  fit.budget_exhausted = r.budget_exhausted;
  return fit;
}

std::vector<ClsFit> cls_fixed_alpha_fit(const ProblemDefinition& problem,
                                        const std::vector<double>& alphas,
                                        const PriorSpec& prior, const OptimizerConfig& config) {
  if (alphas.empty()) throw std::invalid_argument("cls_fixed_alpha_fit: empty alpha list");
  problem.validate();
  prior.validate();

  std::vector<ClsFit> fits;
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) throw std::invalid_argument("cls_fixed_alpha_fit: alpha must be positive");
    auto objective = [&](const Vector& m) -> double {
      if (!prior.support || prior.support(m)) {
        try {
          return factor_at(problem, m, alpha).quadratic(problem.data);
        } catch (const FactorizationFailure&) {
          return kInf;
        }
      }
      return kInf;
    };
    auto feasible = [&prior](const Vector& m) { return !prior.support || prior.support(m); };
    const MultistartResult r =
        multistart_minimize(objective, prior.m_lower, prior.m_upper, config, feasible);
    ClsFit fit;
    fit.alpha = alpha;
    fit.m = r.x;
    fit.value = r.value;
    fit.evaluations = r.evaluations;
    fit.budget_exhausted = r.budget_exhausted;
    fits.push_back(std::move(fit));
  }
  return fits;
}

}  // namespace parinv
