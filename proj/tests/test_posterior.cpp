#include "parinv/errors.hpp"
#include "parinv/posterior.hpp"
#include "parinv/problems.hpp"
#include "support/oracle.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <memory>

using namespace parinv;

namespace {

ProblemDefinition scalar_problem(double u0) {
  ProblemDefinition prob;
  prob.data = Vector::Constant(1, u0);
  prob.make_operator = [](const Vector&) { return ForwardOperator(Matrix::Ones(1, 1)); };
  prob.gram = RegularizerGram::identity(1);
  prob.q = 1;
  return prob;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return out;
}

}  // namespace

TEST(PriorSpec, BoxAndSupport) {
  PriorSpec prior = oracle::unit_prior();
  prior.support = [](const Vector& m) { return m[0] >= 0.0; };
  EXPECT_TRUE(prior.contains(Vector::Constant(1, 0.5), 0.0));
  EXPECT_FALSE(prior.contains(Vector::Constant(1, -0.5), 0.0));
  EXPECT_FALSE(prior.contains(Vector::Constant(1, 0.5), 4.0));
  EXPECT_FALSE(prior.contains(Vector::Constant(1, 1.5), 0.0));
  EXPECT_EQ(prior.log_density(Vector::Constant(1, 0.5), 0.0), 0.0);
  EXPECT_EQ(prior.log_density(Vector::Constant(1, -0.5), 0.0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(prior.state_lower(), (Vector(2) << -1.0, -7.0).finished());
  EXPECT_EQ(prior.state_upper(), (Vector(2) << 1.0, 3.0).finished());

  StreamRng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vector s = prior.sample_box(rng);
    EXPECT_GE(s[0], -1.0);
    EXPECT_LE(s[0], 1.0);
    EXPECT_GE(s[1], -7.0);
    EXPECT_LE(s[1], 3.0);
  }
}

TEST(PriorSpec, ValidateRejectsInvertedBox) {
  PriorSpec prior = oracle::unit_prior();
  prior.log10_alpha_lower = 5.0;
  EXPECT_ANY_THROW(prior.validate());
  PriorSpec bad = oracle::unit_prior();
  bad.m_upper = Vector::Constant(2, 1.0);
  EXPECT_ANY_THROW(bad.validate());
}

TEST(ProblemDefinition, ValidateRequiresNonzeroData) {
  ProblemDefinition prob = scalar_problem(0.0);
  EXPECT_THROW(prob.validate(), std::invalid_argument);
  prob.data[0] = 1.0;
  EXPECT_NO_THROW(prob.validate());
  prob.make_operator = nullptr;
  EXPECT_THROW(prob.validate(), std::invalid_argument);
}

TEST(LogPosterior, OutsideSupportBuildsNoOperator) {
  auto calls = std::make_shared<std::atomic<int>>(0);
  ProblemDefinition prob = scalar_problem(2.0);
  prob.make_operator = [calls](const Vector&) {
    ++*calls;
    return ForwardOperator(Matrix::Ones(1, 1));
  };
  PriorSpec prior = oracle::unit_prior();
  prior.support = [](const Vector& m) { return m[0] < 0.5; };
  const LogDensityValue v = log_posterior(prob, prior, Vector::Constant(1, 0.9), 1.0);
  EXPECT_EQ(v.log_value, -std::numeric_limits<double>::infinity());
  EXPECT_FALSE(v.in_support);
  const LogDensityValue w = log_posterior(prob, prior, Vector::Constant(1, 2.0), 1.0);
  EXPECT_EQ(w.log_value, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(calls->load(), 0);
  EXPECT_TRUE(std::isfinite(log_posterior(prob, prior, Vector::Constant(1, 0.0), 1.0).log_value));
  EXPECT_EQ(calls->load(), 1);
}

// n = 1 carries no information about alpha: log R = -log|u0| + const.
TEST(LogPosterior, ScalarCaseIsFlatInAlpha) {
  for (double u0 : {0.3, -2.0, 5.0}) {
    const ProblemDefinition prob = scalar_problem(u0);
    for (double alpha : {1e-5, 1e-2, 1.0, 50.0}) {
      const LogDensityValue v = log_posterior(prob, oracle::unit_prior(), Vector::Zero(1), alpha);
      EXPECT_NEAR(v.log_value, -std::log(std::abs(u0)), 1e-12);
      EXPECT_NEAR(v.sigma_max_sq, u0 * u0 * alpha / (1.0 + alpha), 1e-14 * u0 * u0);
    }
  }
}

TEST(LogPosterior, MatchesLiteralFormula) {
  StreamRng rng(31);
  oracle::Instance in;
  in.a = oracle::gaussian(4, 9, rng);
  in.gram = Matrix::Identity(9, 9);
  in.u = oracle::gaussian(4, 1, rng).col(0);
  const ProblemDefinition prob = oracle::fixed_problem(in, true);
  for (double la : {-4.0, -2.5, -1.0, 0.0, 1.5}) {
    in.alpha = std::pow(10.0, la);
    const LogDensityValue v = log_posterior(prob, oracle::unit_prior(), Vector::Zero(1), in.alpha);
    EXPECT_NEAR(v.log_value, static_cast<double>(oracle::log_r(in)), 1e-7);
    EXPECT_NEAR(v.log_value, -0.5 * v.logdet - 0.5 * 4.0 * std::log(v.misfit), 1e-12);
  }
}

TEST(LogPosterior, MatchesLiteralFormulaWithGram) {
  StreamRng rng(32);
  for (int t = 0; t < 30; ++t) {
    oracle::Instance in = oracle::random_instance(rng, 8, 12, -5, 1, false);
    const ProblemDefinition prob = oracle::fixed_problem(in, false);
    const LogDensityValue v = log_posterior(prob, oracle::unit_prior(), Vector::Zero(1), in.alpha);
    EXPECT_NEAR(v.log_value, static_cast<double>(oracle::log_r(in)), 1e-7 * std::max(1.0, std::abs(v.log_value)));
  }
}

TEST(LogPosterior, EvaluatorStateForm) {
  const ToyScalarConfig cfg;
  const SyntheticProblem sp = make_toy_scalar(cfg);
  const PosteriorEvaluator ev(sp.problem, sp.prior);
  const Vector state = (Vector(2) << 0.2, -2.0).finished();
  EXPECT_DOUBLE_EQ(ev.log_density(state), ev.evaluate(state.head(1), 1e-2).log_value);
  EXPECT_EQ(ev.log_density((Vector(2) << 0.9, -2.0).finished()), -std::numeric_limits<double>::infinity());
  // Unconstrained evaluation ignores the box.
  EXPECT_TRUE(std::isfinite(ev.evaluate_unconstrained(Vector::Constant(1, 0.9), 1e-2).log_value));
  EXPECT_THROW(ev.evaluate_state(Vector::Zero(3)), DimensionMismatch);
}

TEST(LogPosterior, OperatorFactoryIsDeterministic) {
  const SyntheticProblem sp = make_toy_scalar({});
  const Vector m = Vector::Constant(1, 0.31);
  EXPECT_EQ(sp.problem.make_operator(m).dense(), sp.problem.make_operator(m).dense());
}

TEST(SigmaMax, ScalarClosedForm) {
  const ProblemDefinition prob = scalar_problem(3.0);
  for (double alpha : {1e-3, 0.4, 9.0}) {
    EXPECT_NEAR(sigma_max(prob, Vector::Zero(1), alpha), 9.0 * alpha / (1.0 + alpha), 1e-13);
  }
}

TEST(SigmaMax, NoiselessDataDecreasesToZero) {
  StreamRng rng(33);
  oracle::Instance in;
  in.a = oracle::gaussian(3, 7, rng);
  in.gram = Matrix::Identity(7, 7);
  in.u = in.a * oracle::gaussian(7, 1, rng).col(0);
  const ProblemDefinition prob = oracle::fixed_problem(in, true);
  // u = A g gives u'B^{-1}u = alpha g'(...)g, linear in alpha as alpha -> 0.
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 12; ++k) {
    const double s = sigma_max(prob, Vector::Zero(1), std::pow(10.0, -k));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, previous);
    if (k >= 8) EXPECT_NEAR(previous / s, 10.0, 1e-3);
    previous = s;
  }
  EXPECT_LT(previous, 1e-10);
}

// The displayed likelihood in sigma is maximized at sigma_max.
TEST(SigmaMax, GridSearchOfLikelihood) {
  StreamRng rng(34);
  oracle::Instance in;
  in.a = oracle::gaussian(3, 7, rng);
  in.gram = Matrix::Identity(7, 7);
  in.u = oracle::gaussian(3, 1, rng).col(0);
  const ProblemDefinition prob = oracle::fixed_problem(in, true);
  const double alpha = 0.05;
  const double smax = std::sqrt(sigma_max(prob, Vector::Zero(1), alpha));
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  int nearest = 0;
  std::vector<double> sigmas;
  for (int i = 0; i < 200; ++i) {
    const double s = smax * std::pow(10.0, -1.0 + 2.0 * i / 199.0);
    sigmas.push_back(s);
    const double v = log_marginal_likelihood(prob, Vector::Zero(1), alpha, s);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
    if (std::abs(std::log(s / smax)) < std::abs(std::log(sigmas[static_cast<std::size_t>(nearest)] / smax))) {
      nearest = i;
    }
  }
  EXPECT_EQ(best, nearest);
  const double h = 1e-4 * smax;
  const double d = (log_marginal_likelihood(prob, Vector::Zero(1), alpha, smax + h) -
                    log_marginal_likelihood(prob, Vector::Zero(1), alpha, smax - h)) / (2.0 * h);
  EXPECT_LT(std::abs(d) * smax, 1e-6);
  EXPECT_THROW(log_marginal_likelihood(prob, Vector::Zero(1), alpha, 0.0), std::invalid_argument);
}

TEST(PosteriorGrid, SingleNode) {
  const SyntheticProblem sp = make_toy_scalar({});
  const PosteriorEvaluator ev(sp.problem, sp.prior);
  const PosteriorGrid grid = posterior_grid(ev, {Vector::Constant(1, 0.25)}, {-2.0});
  ASSERT_EQ(grid.log_values.rows(), 1);
  ASSERT_EQ(grid.log_values.cols(), 1);
  EXPECT_EQ(grid.log_values(0, 0), ev.evaluate(Vector::Constant(1, 0.25), 1e-2).log_value);
  EXPECT_EQ(grid.failures(), 0u);
}

TEST(PosteriorGrid, ToyMarginalsNormalize) {
  const SyntheticProblem sp = make_toy_scalar({});
  const PosteriorEvaluator ev(sp.problem, sp.prior);
  std::vector<Vector> ms;
  for (double m : linspace(0.05, 0.5, 101)) ms.push_back(Vector::Constant(1, m));
  const PosteriorGrid grid = posterior_grid(ev, ms, linspace(-5.0, 0.0, 51));
  const GridMarginals gm = grid_marginals(grid);
  ASSERT_EQ(gm.m_axis.size(), 101u);
  ASSERT_EQ(gm.alpha_axis.size(), 51u);
  EXPECT_NEAR(trapezoid(gm.m_axis, gm.m_density), 1.0, 1e-12);
  EXPECT_NEAR(trapezoid(gm.alpha_axis, gm.alpha_density), 1.0, 1e-12);
  for (double d : gm.m_density) EXPECT_GE(d, 0.0);
}

TEST(Trapezoid, ExactForLinear) {
  const std::vector<double> x{0.0, 0.5, 2.0};
  const std::vector<double> y{1.0, 2.0, 5.0};
  EXPECT_DOUBLE_EQ(trapezoid(x, y), 0.5 * 1.5 + 1.5 * 3.5);
}
