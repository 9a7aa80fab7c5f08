#pragma once

// Experiment runner: declarative configuration, problem wiring, summary
// statistics and artifact files.

#include "parinv/config.hpp"
#include "parinv/faultsim.hpp"
#include "parinv/optimize.hpp"
#include "parinv/posterior.hpp"
#include "parinv/problems.hpp"
#include "parinv/samplers.hpp"
#include "parinv/selectors.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace parinv {

inline constexpr const char* kVersion = "0.1.0";

enum class ProblemKind { fault, toy_scalar, dense_random };

std::string_view to_string(ProblemKind kind);

struct SelectorSettings {
  bool gcv = true;
  bool ml = true;
  bool cls = true;
  /// Also run GCV and ML from the favorable start (fault problem only).
  bool favorable_start = true;
  OptimizerConfig optimizer;
  std::vector<double> cls_alphas{1e-4, 1e-3, 1e-2, 1e-1};

  bool any() const { return gcv || ml || cls; }
};

struct ReportSettings {
  double burn_in_fraction = 0.2;
  std::size_t bins = 60;
  std::size_t oracle_m_points = 101;
  std::size_t oracle_alpha_points = 51;
};

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::fault;
  /// Seeds the sampler, the noise realization and the optimizer restarts.
  std::uint64_t seed = 1;
  std::string noise_label = "low";
  double noise_fraction = 0.05;
  bool full_scale = false;
  fault::FaultProblemConfig fault;
  ToyScalarConfig toy;
  DenseRandomConfig dense;
  SamplerConfig sampler = default_sampler();
  bool run_sampler = true;
  SelectorSettings selectors;
  ReportSettings report;
  std::filesystem::path output_dir = "out";

  static SamplerConfig default_sampler();

  /// Defaults overridden by the given entries. Throws ConfigError.
  static ExperimentConfig from_entries(const std::vector<ConfigEntry>& entries);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  void set_seed(std::uint64_t s);
  void set_noise(std::string_view label);
  /// 101 x 101 lattice and 195 stations.
  void set_full_scale();
  /// Throws ConfigError.
  void validate() const;
  /// Every key with its resolved value, re-parseable by from_entries.
  std::string to_text() const;
};

/// A problem instance with its prior and the quantities known only because the
/// data are synthetic.
struct ExperimentProblem {
  ProblemKind kind = ProblemKind::fault;
  ProblemDefinition problem;
  PriorSpec prior;
  Vector m_true;
  double sigma = 0.0;
  double realized_relative_error = 0.0;
  std::optional<fault::FaultProblem> fault;
};

ExperimentProblem build_problem(const ExperimentConfig& config);

struct Histogram {
  double lower = 0.0;
  double upper = 1.0;
  std::vector<double> probabilities;  // sums to 1

  double bin_width() const { return (upper - lower) / static_cast<double>(probabilities.size()); }
};

/// Moments and marginals of the retained samples (columns).
struct SampleStatistics {
  std::size_t count = 0;
  Vector mean;
  Matrix covariance;  // unbiased
  Vector std_dev;
  Vector median;
  Vector quantile_05;
  Vector quantile_95;
  std::vector<Histogram> marginals;
};

/// Histogram ranges are the prior box edges in state coordinates.
SampleStatistics sample_statistics(const Matrix& samples, const Vector& lower, const Vector& upper,
                                   std::size_t bins);

/// Index of the first retained history record: records of the first
/// floor(fraction * N) steps are discarded.
std::size_t burn_in_cut(const ChainHistory& history, std::size_t n_steps, double fraction);

/// Gelman-Rubin potential scale reduction per coordinate, using the slots as
/// chains (a single slot is split in halves).
Vector potential_scale_reduction(const ChainHistory& history, std::size_t first);

struct DepthStatistics {
  fault::Lattice lattice{2};
  Vector mean;       // per node, over the samples
  Vector std_dev;    // population standard deviation
  Vector truth;
  Vector abs_error;  // |mean - truth|
};

/// Pushes every sample column of m through the (clipped) depth function.
DepthStatistics depth_statistics(const Matrix& m_samples, const fault::Lattice& lattice,
                                 const fault::FaultGeometry& truth);

/// g_min = (A'A + alpha R'R)^{-1} A'u at (m, alpha).
Vector reconstruct_slip(const ProblemDefinition& problem, const Vector& m, double alpha);

/// |g - g_true| / |g_true| over the nodes where g_true > 0.
double support_relative_error(const Vector& g, const Vector& g_true);

struct BaselineRow {
  std::string method;
  bool ok = false;
  std::string error;
  Vector m;
  double log10_alpha = 0.0;
  double value = 0.0;
  double distance = 0.0;  // |m - m_true|
  std::vector<bool> inside_envelope;  // |m_i - posterior mean_i| <= posterior std_i
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
};

/// GCV / ML free start, GCV / ML from the favorable point, and CLS at fixed
/// alphas. Failures are recorded per row. Envelope flags need the posterior.
std::vector<BaselineRow> compare_baselines(const ExperimentProblem& problem,
                                           const SelectorSettings& settings,
                                           const SampleStatistics* posterior = nullptr);

struct RunSummary {
  std::string problem;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  Vector m_true;
  double sigma = 0.0;
  double realized_relative_error = 0.0;

  bool sampled = false;
  std::size_t n_parallel = 0;
  std::size_t n_steps = 0;
  std::size_t burn_in_records = 0;
  SampleStatistics posterior;
  Vector rhat;
  double acceptance_rate = 0.0;
  std::size_t evaluations = 0;
  std::size_t incidents = 0;
  std::uint64_t clamp_events = 0;

  std::optional<DepthStatistics> depth;
  Vector slip_at_mean;
  double slip_relative_error = 0.0;

  std::vector<BaselineRow> baselines;
  double runtime_seconds = 0.0;

  bool any_budget_exhausted() const;
};

struct RunOptions {
  bool write_artifacts = true;
  /// Progress lines every this many steps (0 disables).
  std::size_t progress_every = 0;
  std::ostream* progress = nullptr;
};

/// Generate data, sample, summarize, run enabled baselines, write artifacts.
/// On failure a manifest with status "failed" is written before rethrowing.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Baselines only, using the same data realization as `run`. If the output
/// directory holds a summary from a previous run, its posterior mean and
/// standard deviation are used for the envelope flags.
RunSummary run_compare(const ExperimentConfig& config, const RunOptions& options = {});

/// Brute-force posterior on a tensor grid over the prior box (q = 1 only).
PosteriorGrid run_oracle(const ExperimentConfig& config, const RunOptions& options = {});

void write_chain_csv(const std::filesystem::path& path, const ChainHistory& history, Index q);
void write_summary_json(const std::filesystem::path& path, const RunSummary& summary);

}  // namespace parinv
