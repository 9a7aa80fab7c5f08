#pragma once

#include "parinv/posterior.hpp"
#include "parinv/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace parinv {

enum class AnchorMode {
  per_slot,     // proposal k is drawn around M_{j-1}(k)
  last_column,  // every proposal is drawn around M_{j-1}(N_par)
};

struct SamplerConfig {
  std::size_t n_steps = 50000;          // N
  std::size_t cov_update_every = 100;   // N'
  std::size_t n_parallel = 1;           // N_par
  std::size_t burn_in_draws = 500;      // N_burn
  std::uint64_t seed = 1;
  /// beta_j = min(beta_max, beta_rate / sqrt(j)).
  double beta_max = 0.9;
  double beta_rate = 5.0;
  /// Proposal scale; <= 0 selects (2.38)^2 / dim.
  double scale = 0.0;
  AnchorMode anchor = AnchorMode::per_slot;
  /// Abort once factorization incidents reach this fraction of evaluations.
  double max_incident_rate = 0.01;

  double beta(std::size_t step) const;
  double scale_for(Index dim) const;
  void validate() const;
};

/// Running mean/covariance over every stored column.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Index dim);

  void add(const Vector& x);
  std::size_t count() const noexcept { return count_; }
  const Vector& mean() const noexcept { return mean_; }
  /// Unbiased sample covariance, symmetrized, plus ridge * I. Needs >= 2 points.
  Matrix covariance(double ridge = 1e-10) const;

 private:
  std::size_t count_ = 0;
  Vector mean_;
  Matrix scatter_;
};

/// Adapted covariance from a set of samples (columns): unbiased, symmetrized,
/// plus 1e-10 * I.
Matrix update_covariance(const Matrix& samples);

/// Symmetric square root of a PSD matrix; negative eigenvalues from roundoff are clamped to 0.
Matrix psd_sqrt(const Matrix& cov);

struct StartPoint {
  Vector state;  // (m_1, log10 alpha_1)
  Matrix cov0;   // Sigma_0
};

/// Mean of N_burn * N_par prior draws (rejection-sampled through the support
/// predicate) and their sample covariance. If the mean falls outside the
/// support, the draw nearest to it (in prior-standardized coordinates) is used.
StartPoint initial_point(const PriorSpec& prior, const SamplerConfig& config);

/// current + (1 - beta) N(0, s Sigma) + beta N(0, s Sigma_0), with the matrix
/// square roots of Sigma and Sigma_0 supplied.
Vector propose(const Vector& current, const Matrix& sqrt_cov, const Matrix& sqrt_cov0, double beta,
               double scale, StreamRng& rng);

/// (N_par + 1) x (N_par + 1) row-stochastic matrix
///   T(k, l) = min(1, w_l / w_k) / N_par   for k != l,
///   T(k, k) = 1 - sum of the off-diagonal entries of row k.
class TransitionMatrix {
 public:
  /// Index 0 is the current state. Throws InvalidWeights if the current weight
  /// is zero or any weight is NaN.
  static TransitionMatrix build(std::span<const double> log_weights);

  Index size() const noexcept { return entries_.rows(); }
  double operator()(Index k, Index l) const { return entries_(k, l); }
  const Matrix& entries() const noexcept { return entries_; }

  /// Inverse-CDF draw from row k.
  Index draw(Index row, double uniform01) const;

 private:
  Matrix entries_;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t slot = 0;
  bool accepted = false;
  double log_density = 0.0;
  double acceptance_rate = 0.0;  // running, over all slots so far
};

using StepObserver = std::function<void(const StepRecord&)>;

/// Flat history of every stored column, in (step, slot) order.
class ChainHistory {
 public:
  ChainHistory() = default;
  explicit ChainHistory(Index dim) : dim_(dim) {}

  void append(std::size_t step, std::size_t slot, const Vector& state, double log_density,
              bool accepted);

  Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return steps_.size(); }
  Eigen::Map<const Vector> state(std::size_t i) const {
    return {values_.data() + static_cast<std::ptrdiff_t>(i) * dim_, dim_};
  }
  std::size_t step(std::size_t i) const { return steps_[i]; }
  std::size_t slot(std::size_t i) const { return slots_[i]; }
  double log_density(std::size_t i) const { return log_densities_[i]; }
  bool accepted(std::size_t i) const { return accepted_[i] != 0; }

  /// Columns are the states of records [first, size()).
  Matrix samples(std::size_t first = 0) const;

 private:
  Index dim_ = 0;
  std::vector<double> values_;
  std::vector<std::size_t> steps_;
  std::vector<std::size_t> slots_;
  std::vector<double> log_densities_;
  std::vector<char> accepted_;
};

/// State of the driver at the end of a run.
struct ChainState {
  Matrix current;                 // (q+1) x N_par, M_j
  std::vector<double> log_dens_current;
  Matrix adapted_cov;             // Sigma
  Matrix cov0;                    // Sigma_0
  std::size_t step = 0;
};

struct ChainRun {
  ChainHistory history;
  ChainState final_state;
  Vector start;
  std::size_t evaluations = 0;
  std::size_t incidents = 0;       // factorization failures treated as zero weight
  std::size_t proposals_accepted = 0;
  std::size_t proposals_total = 0;

  double acceptance_rate() const {
    return proposals_total == 0 ? 0.0
                                : static_cast<double>(proposals_accepted) /
                                      static_cast<double>(proposals_total);
  }
};

/// Single-processor adaptive Metropolis. Requires config.n_parallel == 1.
ChainRun single_chain_run(const LogTarget& target, const SamplerConfig& config,
                          const StepObserver& observer = {});

/// Multi-proposal sampler: N_par proposals per step evaluated concurrently and
/// combined through a TransitionMatrix.
ChainRun parallel_chain_run(const LogTarget& target, const SamplerConfig& config,
                            const StepObserver& observer = {});

/// Variant that starts from a given point and Sigma_0 instead of initial_point().
ChainRun parallel_chain_run(const LogTarget& target, const SamplerConfig& config,
                            const StartPoint& start, const StepObserver& observer = {});
ChainRun single_chain_run(const LogTarget& target, const SamplerConfig& config,
                          const StartPoint& start, const StepObserver& observer = {});

}  // namespace parinv
