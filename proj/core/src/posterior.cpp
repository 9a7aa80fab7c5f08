#include "parinv/posterior.hpp"

#include "parinv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace parinv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

void ProblemDefinition::validate() const {
  if (!make_operator) throw std::invalid_argument("problem has no operator factory");
  if (q < 1) throw std::invalid_argument("problem needs q >= 1");
  if (data.size() < 1) throw std::invalid_argument("problem has no data");
  if (!data.allFinite()) throw std::invalid_argument("data contains non-finite values");
  if (data.squaredNorm() == 0.0) throw std::invalid_argument("data vector must be non-zero");
}

// ---------------------------------------------------------------------------
// PriorSpec

void PriorSpec::validate() const {
  if (m_lower.size() < 1 || m_lower.size() != m_upper.size()) {
    throw std::invalid_argument("prior box bounds have inconsistent sizes");
  }
  if ((m_upper.array() < m_lower.array()).any()) {
    throw std::invalid_argument("prior box has upper < lower");
  }
  if (!(log10_alpha_upper >= log10_alpha_lower)) {
    throw std::invalid_argument("prior log10(alpha) range is empty");
  }
}

bool PriorSpec::contains(const Vector& m, double log10_alpha) const {
  if (m.size() != q()) throw DimensionMismatch("prior: m has wrong dimension");
  if (!(log10_alpha >= log10_alpha_lower && log10_alpha <= log10_alpha_upper)) return false;
  for (Index i = 0; i < q(); ++i) {
    if (!(m[i] >= m_lower[i] && m[i] <= m_upper[i])) return false;
  }
  return !support || support(m);
}

bool PriorSpec::contains_state(const Vector& state) const {
  if (state.size() != dim()) throw DimensionMismatch("prior: state has wrong dimension");
  return contains(state.head(q()), state[q()]);
}

double PriorSpec::log_density(const Vector& m, double log10_alpha) const {
  return contains(m, log10_alpha) ? 0.0 : kNegInf;
}

Vector PriorSpec::sample_box(StreamRng& rng) const {
  Vector x(dim());
  const Vector lo = state_lower();
  const Vector hi = state_upper();
  for (Index i = 0; i < dim(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
  return x;
}

Vector PriorSpec::state_lower() const {
  Vector x(dim());
  x << m_lower, log10_alpha_lower;
  return x;
}

Vector PriorSpec::state_upper() const {
  Vector x(dim());
  x << m_upper, log10_alpha_upper;
  return x;
}

// ---------------------------------------------------------------------------
// PosteriorEvaluator

PosteriorEvaluator::PosteriorEvaluator(ProblemDefinition problem, PriorSpec prior)
    : problem_(std::move(problem)), prior_(std::move(prior)) {
  problem_.validate();
  prior_.validate();
  if (prior_.q() != problem_.q) throw DimensionMismatch("prior and problem disagree on q");
}

LogDensityValue PosteriorEvaluator::evaluate_linear_part(const Vector& m, double alpha) const {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  const ForwardOperator op = problem_.make_operator(m);
  if (op.n() != problem_.n() || op.p() != problem_.p()) {
    throw DimensionMismatch("operator factory returned an operator of the wrong shape");
  }
  const LowRankFactor factor = factorize_low_rank(coupling_matrix(op, problem_.gram), alpha);

  LogDensityValue out;
  out.in_support = true;
  out.logdet = factor.logdet;
  out.misfit = factor.quadratic(problem_.data);
  if (!(out.misfit > 0.0)) {
    out.misfit = std::numeric_limits<double>::epsilon() * problem_.data.squaredNorm();
    out.misfit_clamped = true;
    clamp_events_.fetch_add(1, std::memory_order_relaxed);
  }
  const double n = static_cast<double>(problem_.n());
  out.sigma_max_sq = out.misfit / n;
  out.log_value = -0.5 * out.logdet - 0.5 * n * std::log(out.misfit);
  return out;
}

LogDensityValue PosteriorEvaluator::evaluate(const Vector& m, double alpha) const {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  const double log_prior = prior_.log_density(m, std::log10(alpha));
  if (log_prior == kNegInf) return {};
  LogDensityValue out = evaluate_linear_part(m, alpha);
  out.log_value += log_prior;
  return out;
}

LogDensityValue PosteriorEvaluator::evaluate_unconstrained(const Vector& m, double alpha) const {
  if (m.size() != problem_.q) throw DimensionMismatch("m has wrong dimension");
  return evaluate_linear_part(m, alpha);
}

LogDensityValue PosteriorEvaluator::evaluate_state(const Vector& state) const {
  if (state.size() != prior_.dim()) throw DimensionMismatch("state has wrong dimension");
  const double a = state[problem_.q];
  if (!prior_.contains(state.head(problem_.q), a)) return {};
  // Flat prior inside the support: log prior = 0.
  return evaluate_linear_part(state.head(problem_.q), std::pow(10.0, a));
}

double PosteriorEvaluator::log_density(const Vector& state) const {
  return evaluate_state(state).log_value;
}

LogDensityValue log_posterior(const ProblemDefinition& problem, const PriorSpec& prior,
                              const Vector& m, double alpha) {
  return PosteriorEvaluator(problem, prior).evaluate(m, alpha);
}

double sigma_max(const ProblemDefinition& problem, const Vector& m, double alpha) {
  problem.validate();
  const ForwardOperator op = problem.make_operator(m);
  const LowRankFactor factor = factorize_low_rank(op, problem.gram, alpha);
  return factor.quadratic(problem.data) / static_cast<double>(problem.n());
}

double log_marginal_likelihood(const ProblemDefinition& problem, const Vector& m, double alpha,
                               double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  problem.validate();
  const ForwardOperator op = problem.make_operator(m);
  const LowRankFactor factor = factorize_low_rank(op, problem.gram, alpha);
  const double n = static_cast<double>(problem.n());
  const double s2 = sigma * sigma;
  return -0.5 * n * std::log(2.0 * std::numbers::pi * s2) - 0.5 * factor.logdet -
         factor.quadratic(problem.data) / (2.0 * s2);
}

// ---------------------------------------------------------------------------
// Grids

std::size_t PosteriorGrid::failures() const {
  return static_cast<std::size_t>(
      std::count_if(errors.begin(), errors.end(), [](const std::string& e) { return !e.empty(); }));
}

PosteriorGrid posterior_grid(const PosteriorEvaluator& evaluator, std::vector<Vector> m_points,
                             std::vector<double> log10_alpha) {
  if (m_points.empty() || log10_alpha.empty()) {
    throw std::invalid_argument("posterior_grid: grids must be non-empty");
  }
  PosteriorGrid grid;
  grid.m_points = std::move(m_points);
  grid.log10_alpha = std::move(log10_alpha);
  const auto rows = static_cast<Index>(grid.m_points.size());
  const auto cols = static_cast<Index>(grid.log10_alpha.size());
  grid.log_values = Matrix::Constant(rows, cols, kNegInf);
  grid.errors.assign(static_cast<std::size_t>(rows * cols), {});

  Vector state(evaluator.prior().dim());
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      state << grid.m_points[static_cast<std::size_t>(i)], grid.log10_alpha[static_cast<std::size_t>(j)];
      try {
        grid.log_values(i, j) = evaluator.log_density(state);
      } catch (const std::exception& e) {
        grid.errors[static_cast<std::size_t>(i * cols + j)] = e.what();
      }
    }
  }
  return grid;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionMismatch("trapezoid: size mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

GridMarginals grid_marginals(const PosteriorGrid& grid) {
  for (const auto& m : grid.m_points) {
    if (m.size() != 1) throw std::invalid_argument("grid_marginals needs scalar m");
  }
  const Index rows = grid.log_values.rows();
  const Index cols = grid.log_values.cols();
  if (rows < 2 || cols < 2) throw std::invalid_argument("grid_marginals needs at least 2x2 nodes");

  const double peak = grid.log_values.maxCoeff();
  if (!std::isfinite(peak)) throw std::invalid_argument("grid has no finite density values");
  const Matrix dens = (grid.log_values.array() - peak).exp().matrix();

  GridMarginals out;
  for (const auto& m : grid.m_points) out.m_axis.push_back(m[0]);
  out.alpha_axis = grid.log10_alpha;

  out.m_density.resize(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) {
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (Index j = 0; j < cols; ++j) row[static_cast<std::size_t>(j)] = dens(i, j);
    out.m_density[static_cast<std::size_t>(i)] = trapezoid(out.alpha_axis, row);
  }
  out.alpha_density.resize(static_cast<std::size_t>(cols));
  for (Index j = 0; j < cols; ++j) {
    std::vector<double> col(static_cast<std::size_t>(rows));
    for (Index i = 0; i < rows; ++i) col[static_cast<std::size_t>(i)] = dens(i, j);
    out.alpha_density[static_cast<std::size_t>(j)] = trapezoid(out.m_axis, col);
  }
  const double zm = trapezoid(out.m_axis, out.m_density);
  const double za = trapezoid(out.alpha_axis, out.alpha_density);
  for (double& v : out.m_density) v /= zm;
  for (double& v : out.alpha_density) v /= za;
  return out;
}

}  // namespace parinv
