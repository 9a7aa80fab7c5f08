#include "parinv/samplers.hpp"

#include "parinv/errors.hpp"

#include <Eigen/Eigenvalues>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace parinv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxConsecutiveRejections = 1'000'000;
constexpr std::size_t kMinEvaluationsForIncidentRate = 100;

struct Evaluation {
  double log_density = kNegInf;
  bool incident = false;
};

Evaluation evaluate_guarded(const LogTarget& target, const Vector& state) {
  try {
    return {target.log_density(state), false};
  } catch (const FactorizationFailure&) {
    return {kNegInf, true};
  }
}

void check_incident_rate(const SamplerConfig& config, std::size_t incidents,
                         std::size_t evaluations) {
  if (incidents == 0 || evaluations < kMinEvaluationsForIncidentRate) return;
  const double rate = static_cast<double>(incidents) / static_cast<double>(evaluations);
  if (rate >= config.max_incident_rate) {
    throw NumericalFailure("factorization incidents at " + std::to_string(incidents) + " of " +
                           std::to_string(evaluations) + " evaluations exceed the allowed rate");
  }
}

double start_log_density(const LogTarget& target, const Vector& state) {
  const double lp = target.log_density(state);
  if (!std::isfinite(lp)) {
    throw EmptySupport("starting point has zero posterior density");
  }
  return lp;
}

}  // namespace

// ---------------------------------------------------------------------------
// SamplerConfig

double SamplerConfig::beta(std::size_t step) const {
  const double j = static_cast<double>(std::max<std::size_t>(step, 1));
  return std::min(beta_max, beta_rate / std::sqrt(j));
}

double SamplerConfig::scale_for(Index dim) const {
  return scale > 0.0 ? scale : 2.38 * 2.38 / static_cast<double>(dim);
}

void SamplerConfig::validate() const {
  if (!(cov_update_every > 1 && cov_update_every < n_steps)) {
    throw ConfigError("sampler: need 1 < cov_update_every < n_steps");
  }
  if (n_parallel < 1) throw ConfigError("sampler: n_parallel must be >= 1");
  if (burn_in_draws < 1) throw ConfigError("sampler: burn_in_draws must be >= 1");
  if (!(beta_max > 0.0 && beta_max < 1.0)) throw ConfigError("sampler: beta_max must be in (0,1)");
  if (!(beta_rate > 0.0)) throw ConfigError("sampler: beta_rate must be positive");
  if (!(max_incident_rate > 0.0 && max_incident_rate <= 1.0)) {
    throw ConfigError("sampler: max_incident_rate must be in (0,1]");
  }
}

// ---------------------------------------------------------------------------
// Covariance

CovarianceAccumulator::CovarianceAccumulator(Index dim)
    : mean_(Vector::Zero(dim)), scatter_(Matrix::Zero(dim, dim)) {}

void CovarianceAccumulator::add(const Vector& x) {
  ++count_;
  const Vector delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  scatter_.noalias() += delta * (x - mean_).transpose();
}

Matrix CovarianceAccumulator::covariance(double ridge) const {
  const Index d = mean_.size();
  if (count_ < 2) return ridge * Matrix::Identity(d, d);
  Matrix cov = scatter_ / static_cast<double>(count_ - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  cov.diagonal().array() += ridge;
  return cov;
}

Matrix update_covariance(const Matrix& samples) {
  if (samples.cols() < 2) throw std::invalid_argument("update_covariance needs >= 2 samples");
  CovarianceAccumulator acc(samples.rows());
  for (Index c = 0; c < samples.cols(); ++c) acc.add(samples.col(c));
  return acc.covariance(1e-10);
}

Matrix psd_sqrt(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cov + cov.transpose()));
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Starting point

StartPoint initial_point(const PriorSpec& prior, const SamplerConfig& config) {
  prior.validate();
  const std::size_t total = config.burn_in_draws * config.n_parallel;
  if (total < 1) throw ConfigError("initial_point: need at least one prior draw");

  StreamRng rng(config.seed, 0, 0, StreamTag::prior);
  CovarianceAccumulator acc(prior.dim());
  std::vector<Vector> draws;
  draws.reserve(total);
  std::size_t misses = 0;
  while (draws.size() < total) {
    Vector x = prior.sample_box(rng);
    if (!prior.contains_state(x)) {
      if (++misses >= kMaxConsecutiveRejections) {
        throw EmptySupport("prior support predicate rejected 1e6 consecutive draws");
      }
      continue;
    }
    misses = 0;
    acc.add(x);
    draws.push_back(std::move(x));
  }

  StartPoint out;
  out.cov0 = acc.covariance(0.0);
  out.state = acc.mean();
  if (!prior.contains_state(out.state)) {
    const Vector width = prior.state_upper() - prior.state_lower();
    const Vector inv_width =
        width.unaryExpr([](double w) { return w > 0.0 ? 1.0 / w : 0.0; });
    double best = std::numeric_limits<double>::infinity();
    for (const Vector& x : draws) {
      const double d = ((x - acc.mean()).cwiseProduct(inv_width)).squaredNorm();
      if (d < best) {
        best = d;
        out.state = x;
      }
    }
  }
  return out;
}

Vector propose(const Vector& current, const Matrix& sqrt_cov, const Matrix& sqrt_cov0, double beta,
               double scale, StreamRng& rng) {
  const Index d = current.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z1(d);
  Vector z2(d);
  for (Index i = 0; i < d; ++i) z1[i] = normal(rng);
  for (Index i = 0; i < d; ++i) z2[i] = normal(rng);
  const double s = std::sqrt(scale);
  return current + s * ((1.0 - beta) * (sqrt_cov * z1) + beta * (sqrt_cov0 * z2));
}

// ---------------------------------------------------------------------------
// TransitionMatrix

TransitionMatrix TransitionMatrix::build(std::span<const double> log_weights) {
  const auto size = static_cast<Index>(log_weights.size());
  if (size < 2) throw InvalidWeights("transition matrix needs at least one proposal");
  for (double lw : log_weights) {
    if (std::isnan(lw)) throw InvalidWeights("NaN weight");
    if (lw == std::numeric_limits<double>::infinity()) throw InvalidWeights("infinite weight");
  }
  if (log_weights[0] == kNegInf) throw InvalidWeights("current state has zero weight");

  const double inv_n = 1.0 / static_cast<double>(size - 1);
  TransitionMatrix t;
  t.entries_ = Matrix::Zero(size, size);
  for (Index k = 0; k < size; ++k) {
    const double lk = log_weights[static_cast<std::size_t>(k)];
    double off = 0.0;
    for (Index l = 0; l < size; ++l) {
      if (l == k) continue;
      const double ll = log_weights[static_cast<std::size_t>(l)];
      double ratio;
      if (lk == kNegInf) {
        ratio = 1.0;  // w_l / 0 with w_l >= 0: any move away from a zero-weight state
      } else {
        ratio = std::min(1.0, std::exp(ll - lk));
      }
      const double v = inv_n * ratio;
      t.entries_(k, l) = v;
      off += v;
    }
    t.entries_(k, k) = std::max(0.0, 1.0 - off);
  }
  return t;
}

Index TransitionMatrix::draw(Index row, double uniform01) const {
  double cumulative = 0.0;
  Index last_positive = row;
  for (Index l = 0; l < size(); ++l) {
    const double v = entries_(row, l);
    if (v <= 0.0) continue;
    cumulative += v;
    last_positive = l;
    if (uniform01 < cumulative) return l;
  }
  return last_positive;
}

// ---------------------------------------------------------------------------
// ChainHistory

void ChainHistory::append(std::size_t step, std::size_t slot, const Vector& state,
                          double log_density, bool accepted) {
  if (state.size() != dim_) throw DimensionMismatch("ChainHistory: state dimension");
  values_.insert(values_.end(), state.data(), state.data() + dim_);
  steps_.push_back(step);
  slots_.push_back(slot);
  log_densities_.push_back(log_density);
  accepted_.push_back(accepted ? 1 : 0);
}

Matrix ChainHistory::samples(std::size_t first) const {
  first = std::min(first, size());
  Matrix out(dim_, static_cast<Index>(size() - first));
  for (std::size_t i = first; i < size(); ++i) out.col(static_cast<Index>(i - first)) = state(i);
  return out;
}

// ---------------------------------------------------------------------------
// Drivers

ChainRun single_chain_run(const LogTarget& target, const SamplerConfig& config,
                          const StepObserver& observer) {
  config.validate();
  return single_chain_run(target, config, initial_point(target.prior(), config), observer);
}

ChainRun single_chain_run(const LogTarget& target, const SamplerConfig& config,
                          const StartPoint& start, const StepObserver& observer) {
  config.validate();
  if (config.n_parallel != 1) throw ConfigError("single_chain_run requires n_parallel == 1");
  const Index dim = target.dim();
  if (start.state.size() != dim) throw DimensionMismatch("start point dimension");
  const double scale = config.scale_for(dim);

  ChainRun run;
  run.history = ChainHistory(dim);
  run.start = start.state;

  Vector current = start.state;
  double lp = start_log_density(target, current);
  run.history.append(1, 0, current, lp, false);
  CovarianceAccumulator acc(dim);
  acc.add(current);

  Matrix cov = start.cov0;
  Matrix sqrt_cov = psd_sqrt(cov);
  const Matrix sqrt_cov0 = sqrt_cov;

  for (std::size_t j = 2; j <= config.n_steps; ++j) {
    if (j % config.cov_update_every == 0) {
      cov = acc.covariance(1e-10);
      sqrt_cov = psd_sqrt(cov);
    }
    StreamRng prop_rng(config.seed, j, 0, StreamTag::proposal);
    const Vector candidate = propose(current, sqrt_cov, sqrt_cov0, config.beta(j), scale, prop_rng);
    const Evaluation ev = evaluate_guarded(target, candidate);
    ++run.evaluations;
    if (ev.incident) ++run.incidents;
    check_incident_rate(config, run.incidents, run.evaluations);

    StreamRng accept_rng(config.seed, j, 0, StreamTag::metropolis);
    const double u = accept_rng.uniform();
    const bool accept = ev.log_density > kNegInf && std::log(u) < ev.log_density - lp;
    if (accept) {
      current = candidate;
      lp = ev.log_density;
      ++run.proposals_accepted;
    }
    ++run.proposals_total;
    run.history.append(j, 0, current, lp, accept);
    acc.add(current);
    if (observer) observer({j, 0, accept, lp, run.acceptance_rate()});
  }

  run.final_state.current = current;
  run.final_state.log_dens_current = {lp};
  run.final_state.adapted_cov = cov;
  run.final_state.cov0 = start.cov0;
  run.final_state.step = config.n_steps;
  return run;
}

ChainRun parallel_chain_run(const LogTarget& target, const SamplerConfig& config,
                            const StepObserver& observer) {
  config.validate();
  return parallel_chain_run(target, config, initial_point(target.prior(), config), observer);
}

ChainRun parallel_chain_run(const LogTarget& target, const SamplerConfig& config,
                            const StartPoint& start, const StepObserver& observer) {
  config.validate();
  const Index dim = target.dim();
  if (start.state.size() != dim) throw DimensionMismatch("start point dimension");
  const std::size_t n_par = config.n_parallel;
  const auto n_par_i = static_cast<Index>(n_par);
  const double scale = config.scale_for(dim);

  ChainRun run;
  run.history = ChainHistory(dim);
  run.start = start.state;

  Matrix current = start.state.replicate(1, n_par_i);
  const double lp0 = start_log_density(target, start.state);
  std::vector<double> lp(n_par, lp0);
  CovarianceAccumulator acc(dim);
  for (std::size_t k = 0; k < n_par; ++k) {
    run.history.append(1, k, current.col(static_cast<Index>(k)), lp0, false);
    acc.add(current.col(static_cast<Index>(k)));
  }

  Matrix cov = start.cov0;
  Matrix sqrt_cov = psd_sqrt(cov);
  const Matrix sqrt_cov0 = sqrt_cov;

  Matrix proposals(dim, n_par_i);
  std::vector<Evaluation> evals(n_par);
  std::vector<double> log_w(n_par + 1);
  Matrix next(dim, n_par_i);
  std::vector<double> next_lp(n_par);

  for (std::size_t j = 2; j <= config.n_steps; ++j) {
    if (j % config.cov_update_every == 0) {
      cov = acc.covariance(1e-10);
      sqrt_cov = psd_sqrt(cov);
    }
    const double beta = config.beta(j);
    for (std::size_t k = 0; k < n_par; ++k) {
      const Index anchor = config.anchor == AnchorMode::per_slot ? static_cast<Index>(k) : n_par_i - 1;
      StreamRng rng(config.seed, j, k, StreamTag::proposal);
      proposals.col(static_cast<Index>(k)) =
          propose(current.col(anchor), sqrt_cov, sqrt_cov0, beta, scale, rng);
    }

    tbb::parallel_for(std::size_t{0}, n_par, [&](std::size_t k) {
      evals[k] = evaluate_guarded(target, proposals.col(static_cast<Index>(k)));
    });

    for (const Evaluation& ev : evals) {
      ++run.evaluations;
      if (ev.incident) ++run.incidents;
    }
    check_incident_rate(config, run.incidents, run.evaluations);

    log_w[0] = lp[n_par - 1];
    for (std::size_t k = 0; k < n_par; ++k) log_w[k + 1] = evals[k].log_density;
    const TransitionMatrix t = TransitionMatrix::build(log_w);

    // Every new column is a draw from the current state's row of T.
    StreamRng pick_rng(config.seed, j, 0, StreamTag::transition);
    for (std::size_t c = 0; c < n_par; ++c) {
      const Index idx = t.draw(0, pick_rng.uniform());
      const bool accepted = idx != 0;
      if (accepted) {
        next.col(static_cast<Index>(c)) = proposals.col(idx - 1);
        next_lp[c] = evals[static_cast<std::size_t>(idx - 1)].log_density;
        ++run.proposals_accepted;
      } else {
        next.col(static_cast<Index>(c)) = current.col(n_par_i - 1);
        next_lp[c] = lp[n_par - 1];
      }
      ++run.proposals_total;
      run.history.append(j, c, next.col(static_cast<Index>(c)), next_lp[c], accepted);
      acc.add(next.col(static_cast<Index>(c)));
      if (observer) observer({j, c, accepted, next_lp[c], run.acceptance_rate()});
    }
    current.swap(next);
    lp.swap(next_lp);
  }

  run.final_state.current = current;
  run.final_state.log_dens_current = lp;
  run.final_state.adapted_cov = cov;
  run.final_state.cov0 = start.cov0;
  run.final_state.step = config.n_steps;
  return run;
}

}  // namespace parinv
