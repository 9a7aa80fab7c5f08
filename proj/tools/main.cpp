// parinv: run | oracle | compare | validate
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 budget exhausted.

#include "parinv/errors.hpp"
#include "parinv/experiment.hpp"
#include "parinv/validation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalFailure = 3;
constexpr int kBudgetExhausted = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> n_par;
  std::optional<std::size_t> steps;
  bool full_scale = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed (sampler, noise, restarts)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--n-par", f.n_par, "parallel proposals per step")->check(CLI::PositiveNumber);
  cmd->add_option("--steps", f.steps, "sampler steps N")->check(CLI::PositiveNumber);
  cmd->add_flag("--full-scale", f.full_scale, "101 x 101 lattice and 195 stations (585 x 10201)");
  cmd->add_flag("-q,--quiet", f.quiet, "no progress output");
}

parinv::ExperimentConfig resolve(const CommonFlags& f) {
  parinv::ExperimentConfig c;
  if (!f.config.empty()) c = parinv::ExperimentConfig::from_file(f.config);
  if (f.seed) c.set_seed(*f.seed);
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.n_par) c.sampler.n_parallel = *f.n_par;
  if (f.steps) c.sampler.n_steps = *f.steps;
  if (f.full_scale) c.set_full_scale();
  c.validate();
  return c;
}

void print_posterior(const parinv::RunSummary& s) {
  if (!s.sampled) return;
  const auto& p = s.posterior;
  std::cout << "retained samples " << p.count << ", acceptance " << s.acceptance_rate << "\n";
  for (parinv::Index i = 0; i < p.mean.size(); ++i) {
    const bool is_alpha = i == p.mean.size() - 1;
    std::cout << (is_alpha ? std::string("log10_alpha") : "m" + std::to_string(i + 1)) << "  mean "
              << p.mean[i] << "  std " << p.std_dev[i];
    if (!is_alpha) std::cout << "  true " << s.m_true[i];
    std::cout << "\n";
  }
}

void print_baselines(const parinv::RunSummary& s) {
  for (const auto& r : s.baselines) {
    std::cout << r.method << ": ";
    if (r.ok) {
      std::cout << "distance " << r.distance << "  log10_alpha " << r.log10_alpha
                << (r.budget_exhausted ? "  (budget exhausted)" : "") << "\n";
    } else {
      std::cout << "failed: " << r.error << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference of a nonlinear parameter and a regularization weight"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::uint64_t validate_seed = 1;
  std::size_t validate_instances = 200;

  auto* run = app.add_subcommand("run", "sample the posterior and write chain, summary and lattices");
  auto* oracle = app.add_subcommand("oracle", "brute-force grid posterior (scalar m problems)");
  auto* compare = app.add_subcommand("compare", "GCV / ML / CLS baselines on the same data");
  auto* validate = app.add_subcommand("validate", "identity and property suite");
  for (auto* cmd : {run, oracle, compare}) add_common(cmd, flags);
  validate->add_option("--seed", validate_seed, "instance seed");
  validate->add_option("--instances", validate_instances, "random instances")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (validate->parsed()) {
      const auto checks = parinv::run_validation_suite(validate_seed, validate_instances);
      bool all = true;
      for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  (" << c.detail << ")\n";
        all = all && c.passed;
      }
      return all ? kOk : kNumericalFailure;
    }

    const parinv::ExperimentConfig config = resolve(flags);
    parinv::RunOptions options;
    if (!flags.quiet) {
      options.progress = &std::cerr;
      options.progress_every = std::max<std::size_t>(1, config.sampler.n_steps / 20);
    }

    if (run->parsed()) {
      const parinv::RunSummary s = parinv::run_experiment(config, options);
      print_posterior(s);
      print_baselines(s);
      std::cout << "artifacts in " << config.output_dir.string() << "\n";
      return s.any_budget_exhausted() ? kBudgetExhausted : kOk;
    }
    if (oracle->parsed()) {
      const parinv::PosteriorGrid grid = parinv::run_oracle(config, options);
      std::cout << "grid " << grid.m_points.size() << " x " << grid.log10_alpha.size() << " written to "
                << config.output_dir.string() << "\n";
      return kOk;
    }
    if (compare->parsed()) {
      const parinv::RunSummary s = parinv::run_compare(config, options);
      print_baselines(s);
      return s.any_budget_exhausted() ? kBudgetExhausted : kOk;
    }
  } catch (const parinv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  }
  return kOk;
}
