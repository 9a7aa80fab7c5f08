#include "parinv/validation.hpp"

#include "parinv/linalg.hpp"
#include "parinv/posterior.hpp"
#include "parinv/rng.hpp"
#include "parinv/samplers.hpp"
#include "parinv/selectors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace parinv {

namespace {

struct Instance {
  Matrix a;
  SparseMatrix k;
  RegularizerGram gram = RegularizerGram::identity(1);
  Vector u;
  double alpha = 1.0;
};

Instance random_instance(StreamRng& rng, bool identity_gram) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> n_dist(1, 8);
  std::uniform_int_distribution<int> p_dist(1, 12);
  Instance in;
  const Index n = n_dist(rng);
  const Index p = p_dist(rng);
  in.a.resize(n, p);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) in.a(i, j) = normal(rng);
  }
  in.u.resize(n);
  for (Index i = 0; i < n; ++i) in.u[i] = normal(rng);
  in.alpha = std::pow(10.0, -6.0 + 8.0 * rng.uniform());
  if (identity_gram) {
    in.gram = RegularizerGram::identity(p);
    in.k = in.gram.matrix();
  } else {
    // Tridiagonal SPD: 2.5 on the diagonal, -1 off it.
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < p; ++i) {
      t.emplace_back(i, i, 2.5);
      if (i + 1 < p) {
        t.emplace_back(i, i + 1, -1.0);
        t.emplace_back(i + 1, i, -1.0);
      }
    }
    in.k.resize(p, p);
    in.k.setFromTriplets(t.begin(), t.end());
    in.gram = RegularizerGram::from_sparse(in.k);
  }
  return in;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

std::string fmt(const char* label, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s %.3e", label, v);
  return buf;
}

}  // namespace

std::vector<ValidationCheck> run_validation_suite(std::uint64_t seed, std::size_t instances) {
  StreamRng rng(seed, 0, 0, StreamTag::instance);
  double worst_det = 0.0;
  double worst_woodbury = 0.0;
  double worst_energy = 0.0;
  double worst_gcv = 0.0;
  double worst_ml = 0.0;
  double worst_cls = 0.0;
  double worst_sigma = 0.0;

  for (std::size_t t = 0; t < instances; ++t) {
    const Instance in = random_instance(rng, t % 2 == 0);
    const Index n = in.a.rows();
    const Index p = in.a.cols();
    const ForwardOperator op(in.a);
    const Matrix kd = Matrix(in.k);
    // Dense p x p side.
    const Matrix normal_matrix = in.a.transpose() * in.a + in.alpha * kd;
    const Eigen::LDLT<Matrix> normal_ldlt(normal_matrix);
    const Matrix hat_complement = Matrix::Identity(n, n) - in.a * normal_ldlt.solve(in.a.transpose());
    const Eigen::LLT<Matrix> kchol(kd);
    const Matrix kinv_at = kchol.solve(in.a.transpose());
    const Matrix b = Matrix::Identity(n, n) + in.a * kinv_at / in.alpha;
    const Matrix whitened_l = kchol.matrixL().solve(in.a.transpose());  // L^{-1} A'
    const double logdet_p =
        std::log((whitened_l * whitened_l.transpose() / in.alpha + Matrix::Identity(p, p)).determinant());

    const LowRankFactor f = factorize_low_rank(op, in.gram, in.alpha);
    worst_det = std::max(worst_det, std::abs(logdet_p - f.logdet) / std::max(1.0, std::abs(logdet_p)));
    worst_woodbury = std::max(worst_woodbury, (hat_complement - f.inverse()).cwiseAbs().maxCoeff() /
                                                  std::max(1.0, b.inverse().cwiseAbs().maxCoeff()));
    const Vector g = normal_ldlt.solve(in.a.transpose() * in.u);
    const double energy = (in.u - in.a * g).squaredNorm() + in.alpha * g.dot(kd * g);
    worst_energy = std::max(worst_energy, rel(energy, misfit_quadratic(op, in.gram, in.alpha, in.u)));

    ProblemDefinition prob;
    prob.data = in.u;
    prob.gram = in.gram;
    prob.q = 1;
    prob.make_operator = [&in](const Vector&) { return ForwardOperator(in.a); };
    const Vector m0 = Vector::Zero(1);
    const double tr = hat_complement.trace();
    const double gcv_dense = (hat_complement * in.u).squaredNorm() / (tr * tr);
    worst_gcv = std::max(worst_gcv, rel(gcv_dense, gcv_score(prob, m0, in.alpha)));
    const double ml_dense = in.u.dot(hat_complement * in.u) / std::pow(hat_complement.determinant(), 1.0 / static_cast<double>(n));
    worst_ml = std::max(worst_ml, rel(ml_dense, ml_score(prob, m0, in.alpha)));
    worst_cls = std::max(worst_cls, rel((in.u - in.a * g).squaredNorm(), cls_residual(prob, m0, in.alpha)));

    // The profiled marginal likelihood peaks at sigma_max.
    const double smax = std::sqrt(sigma_max(prob, m0, in.alpha));
    const double h = 1e-4 * smax;
    const double deriv = (log_marginal_likelihood(prob, m0, in.alpha, smax + h) -
                          log_marginal_likelihood(prob, m0, in.alpha, smax - h)) / (2.0 * h);
    worst_sigma = std::max(worst_sigma, std::abs(deriv) * smax / static_cast<double>(n));
  }

  // Transition matrix laws on random weights, zeros included.
  double worst_row = 0.0;
  bool entries_ok = true;
  double worst_mh = 0.0;
  std::normal_distribution<double> normal(0.0, 3.0);
  for (std::size_t t = 0; t < 20 * instances; ++t) {
    const std::size_t size = 2 + t % 9;
    std::vector<double> lw(size);
    for (double& w : lw) w = rng.uniform() < 0.2 ? -INFINITY : normal(rng);
    lw[0] = normal(rng);
    const TransitionMatrix tm = TransitionMatrix::build(lw);
    for (Index k = 0; k < tm.size(); ++k) {
      worst_row = std::max(worst_row, std::abs(tm.entries().row(k).sum() - 1.0));
    }
    entries_ok = entries_ok && (tm.entries().array() >= 0.0).all() && (tm.entries().array() <= 1.0).all();
    if (size == 2) {
      const double mh = std::min(1.0, std::exp(lw[1] - lw[0]));
      worst_mh = std::max(worst_mh, std::abs(tm(0, 1) - mh));
    }
  }

  std::vector<ValidationCheck> out;
  auto add = [&out](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  add("determinant identity", worst_det < 1e-9, fmt("max rel err", worst_det));
  add("woodbury inverse", worst_woodbury < 1e-10, fmt("max abs err", worst_woodbury));
  add("energy identity", worst_energy < 1e-8, fmt("max rel err", worst_energy));
  add("sigma_max stationarity", worst_sigma < 1e-6, fmt("max scaled derivative", worst_sigma));
  add("gcv score", worst_gcv < 1e-8, fmt("max rel err", worst_gcv));
  add("ml score", worst_ml < 1e-8, fmt("max rel err", worst_ml));
  add("cls residual", worst_cls < 1e-8, fmt("max rel err", worst_cls));
  add("transition rows", worst_row < 1e-12 && entries_ok, fmt("max row-sum err", worst_row));
  add("metropolis reduction", worst_mh < 1e-15, fmt("max err", worst_mh));
  return out;
}

}  // namespace parinv
