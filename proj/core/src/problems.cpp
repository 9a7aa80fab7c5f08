#include "parinv/problems.hpp"

#include "parinv/rng.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace parinv {

namespace {

void add_noise(SyntheticProblem& sp, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0)) throw std::invalid_argument("noise fraction must be >= 0");
  sp.sigma = fraction * sp.u_free.lpNorm<Eigen::Infinity>();
  StreamRng rng(seed, 0, 0, StreamTag::noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector eps(sp.u_free.size());
  for (Index i = 0; i < eps.size(); ++i) eps[i] = sp.sigma * normal(rng);
  sp.problem.data = sp.u_free + eps;
  const double base = sp.u_free.norm();
  sp.realized_relative_error = base > 0.0 ? eps.norm() / base : 0.0;
}

}  // namespace

Matrix toy_kernel(Index n, Index p, double width) {
  if (n < 1 || p < 1) throw std::invalid_argument("toy_kernel: empty shape");
  if (!(width > 0.0)) throw std::invalid_argument("toy_kernel: width must be positive");
  Matrix a(n, p);
  const double h = 1.0 / static_cast<double>(p);
  for (Index k = 0; k < p; ++k) {
    const double y = (static_cast<double>(k) + 0.5) * h;
    for (Index i = 0; i < n; ++i) {
      const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      a(i, k) = h * width / ((x - y) * (x - y) + width * width);
    }
  }
  return a;
}

SyntheticProblem make_toy_scalar(const ToyScalarConfig& config) {
  if (!(config.m_lower > 0.0 && config.m_lower < config.m_upper)) {
    throw std::invalid_argument("toy problem: need 0 < m_lower < m_upper");
  }
  SyntheticProblem sp;
  sp.m_true = Vector::Constant(1, config.m_true);
  sp.g_true.resize(config.p);
  for (Index k = 0; k < config.p; ++k) {
    const double y = (static_cast<double>(k) + 0.5) / static_cast<double>(config.p);
    sp.g_true[k] = std::exp(-0.5 * std::pow((y - 0.4) / 0.1, 2));
  }
  sp.u_free = toy_kernel(config.n, config.p, config.m_true) * sp.g_true;

  sp.problem.gram = RegularizerGram::identity(config.p);
  sp.problem.q = 1;
  sp.problem.make_operator = [n = config.n, p = config.p](const Vector& m) {
    return ForwardOperator(toy_kernel(n, p, m[0]));
  };
  add_noise(sp, config.noise_fraction, config.seed);

  sp.prior.m_lower = Vector::Constant(1, config.m_lower);
  sp.prior.m_upper = Vector::Constant(1, config.m_upper);
  return sp;
}

SyntheticProblem make_dense_random(const DenseRandomConfig& config) {
  if (config.n < 1 || config.p < 1) throw std::invalid_argument("dense problem: empty shape");
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.p));
  auto gaussian = [&](Index rows, Index cols, std::uint64_t stream) {
    StreamRng rng(config.seed, stream, 0, StreamTag::instance);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
    }
    return out;
  };
  const Matrix a0 = gaussian(config.n, config.p, 0) * scale;
  const Matrix a1 = gaussian(config.n, config.p, 1) * scale;

  SyntheticProblem sp;
  sp.m_true = Vector::Constant(1, config.m_true);
  sp.g_true = gaussian(config.p, 1, 2).col(0);
  sp.u_free = (a0 + config.m_true * a1) * sp.g_true;
  sp.problem.gram = RegularizerGram::identity(config.p);
  sp.problem.q = 1;
  sp.problem.make_operator = [a0, a1](const Vector& m) { return ForwardOperator(a0 + m[0] * a1); };
  add_noise(sp, config.noise_fraction, config.seed);

  sp.prior.m_lower = Vector::Constant(1, -1.0);
  sp.prior.m_upper = Vector::Constant(1, 1.0);
  return sp;
}

}  // namespace parinv
