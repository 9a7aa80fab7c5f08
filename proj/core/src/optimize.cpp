#include "parinv/optimize.hpp"

#include "parinv/errors.hpp"
#include "parinv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace parinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void OptimizerConfig::validate() const {
  if (n_starts < 1) throw ConfigError("optimizer: n_starts must be >= 1");
  if (max_evals < n_starts) throw ConfigError("optimizer: max_evals must be >= n_starts");
  if (!(local_tol > 0.0)) throw ConfigError("optimizer: local_tol must be positive");
}

LocalResult nelder_mead(const BoxObjective& f, const Vector& lower, const Vector& upper,
                        const Vector& start, double tol, std::size_t max_evals,
                        double initial_step) {
  const Index d = lower.size();
  if (upper.size() != d || start.size() != d) throw DimensionMismatch("nelder_mead: bounds");
  const Vector width = upper - lower;

  // Work in unit-box coordinates; degenerate axes stay fixed.
  auto to_box = [&](const Vector& y) -> Vector { return lower + y.cwiseProduct(width); };
  std::size_t evals = 0;
  auto value = [&](const Vector& y) -> double {
    ++evals;
    if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) return kInf;
    const double v = f(to_box(y));
    return std::isnan(v) ? kInf : v;
  };

  Vector y0 = (start - lower).cwiseQuotient(width.unaryExpr([](double w) { return w > 0 ? w : 1.0; }));
  for (Index i = 0; i < d; ++i) {
    if (width[i] <= 0.0) y0[i] = 0.0;
  }

  std::vector<Vector> simplex;
  std::vector<double> fv;
  simplex.push_back(y0);
  fv.push_back(value(y0));
  LocalResult out;
  if (max_evals < static_cast<std::size_t>(d) + 1) {
    // Not enough budget for a simplex: report the start point.
    out.x = start;
    out.value = fv.front();
    out.evaluations = evals;
    return out;
  }
  for (Index i = 0; i < d; ++i) {
    Vector y = y0;
    if (width[i] > 0.0) {
      // Step inward if the vertex would leave the box.
      y[i] += (y0[i] + initial_step <= 1.0) ? initial_step : -initial_step;
    }
    simplex.push_back(y);
    fv.push_back(value(y));
  }

  std::vector<std::size_t> order(simplex.size());
  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (const Vector& y : simplex) diameter = std::max(diameter, (y - simplex[best]).lpNorm<Eigen::Infinity>());
    const double spread = fv[worst] - fv[best];
    const bool flat = std::isfinite(spread) && spread <= tol * (std::abs(fv[best]) + 1e-300);
    if ((flat || spread == 0.0) && diameter <= tol) {
      out.converged = true;
      break;
    }
    // One iteration costs at most d + 2 evaluations (reflect, contract, shrink).
    if (evals + static_cast<std::size_t>(d) + 2 > max_evals) break;

    Vector centroid = Vector::Zero(d);
    for (std::size_t i : order) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(d);

    const Vector reflected = centroid + (centroid - simplex[worst]);
    const double fr = value(reflected);
    if (fr < fv[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = value(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        fv[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = reflected;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Vector contracted = outside ? Vector(centroid + 0.5 * (reflected - centroid))
                                      : Vector(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = value(contracted);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = contracted;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      fv[i] = value(simplex[i]);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  out.x = to_box(simplex[best]);
  out.value = fv[best];
  out.evaluations = evals;
  return out;
}

std::vector<Vector> latin_hypercube(const Vector& lower, const Vector& upper, std::size_t n,
                                    std::uint64_t seed) {
  const Index d = lower.size();
  std::vector<Vector> pts(n, Vector(d));
  std::vector<std::size_t> perm(n);
  for (Index i = 0; i < d; ++i) {
    StreamRng rng(seed, static_cast<std::uint64_t>(i), 0, StreamTag::restart);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Fisher-Yates with the keyed stream so the layout is platform independent.
    for (std::size_t k = n; k > 1; --k) {
      const auto r = static_cast<std::size_t>(rng() % k);
      std::swap(perm[k - 1], perm[r]);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double cell = (static_cast<double>(perm[k]) + rng.uniform()) / static_cast<double>(n);
      pts[k][i] = lower[i] + cell * (upper[i] - lower[i]);
    }
  }
  return pts;
}

MultistartResult multistart_minimize(const BoxObjective& f, const Vector& lower,
                                     const Vector& upper, const OptimizerConfig& config,
                                     const FeasibleSet& feasible,
                                     const std::vector<Vector>& injected_starts) {
  config.validate();
  std::vector<Vector> starts = latin_hypercube(lower, upper, config.n_starts, config.seed);
  for (std::size_t i = 0; i < injected_starts.size() && i < starts.size(); ++i) {
    starts[i] = injected_starts[i];
  }
  // Infeasible LHS points are replaced by rejection draws from the box.
  if (feasible) {
    StreamRng rng(config.seed, 0, 1, StreamTag::restart);
    for (std::size_t i = injected_starts.size(); i < starts.size(); ++i) {
      std::size_t tries = 0;
      while (!feasible(starts[i]) && tries++ < 1'000'000) {
        for (Index c = 0; c < lower.size(); ++c) {
          starts[i][c] = lower[c] + (upper[c] - lower[c]) * rng.uniform();
        }
      }
      if (!feasible(starts[i])) throw EmptySupport("no feasible start point found");
    }
  }

  MultistartResult out;
  out.value = kInf;
  bool any_converged = false;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    // Evaluations left unused by earlier restarts carry over to later ones.
    const std::size_t left = config.max_evals > out.evaluations ? config.max_evals - out.evaluations : 0;
    const std::size_t share = left / (starts.size() - i);
    LocalResult local = nelder_mead(f, lower, upper, starts[i], config.local_tol, share);
    out.evaluations += local.evaluations;
    ++out.starts_run;
    any_converged = any_converged || local.converged;
    if (local.value < out.value || out.x.size() == 0) {
      out.x = local.x;
      out.value = local.value;
    }
    out.restarts.push_back(std::move(local));
  }
  out.budget_exhausted = !any_converged;
  return out;
}

}  // namespace parinv
