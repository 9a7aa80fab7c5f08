// Runs the installed-style binary as a subprocess.

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = PARINV_CLI_PATH;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("parinv_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli.string() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

const char* kToy =
    "problem = toy_scalar\n"
    "sampler.n_steps = 800\n"
    "sampler.burn_in_draws = 40\n"
    "selectors.n_starts = 3\n"
    "selectors.max_evals = 400\n"
    "selectors.cls_alphas = 0.01\n";

}  // namespace

TEST(Cli, RunWritesArtifacts) {
  const fs::path dir = scratch("run");
  const fs::path cfg = write_config(dir, kToy);
  const fs::path out = dir / "out";
  ASSERT_EQ(run("run -q --config " + cfg.string() + " --seed 5 --n-par 3 --out " + out.string(), dir / "log"), 0)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(out / "chain.csv"));
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["n_parallel"], 3);
  EXPECT_EQ(j["n_steps"], 800);
  EXPECT_EQ(nlohmann::json::parse(slurp(out / "manifest.json"))["status"], "complete");

  // Same seed, same chain.
  const std::string chain = slurp(out / "chain.csv");
  ASSERT_EQ(run("run -q --config " + cfg.string() + " --seed 5 --n-par 3 --out " + out.string(), dir / "log"), 0);
  EXPECT_EQ(slurp(out / "chain.csv"), chain);
  ASSERT_EQ(run("run -q --config " + cfg.string() + " --seed 6 --n-par 3 --out " + out.string(), dir / "log"), 0);
  EXPECT_NE(slurp(out / "chain.csv"), chain);
  fs::remove_all(dir);
}

TEST(Cli, StepsFlagOverridesConfig) {
  const fs::path dir = scratch("steps");
  const fs::path cfg = write_config(dir, std::string(kToy) + "selectors.gcv = false\nselectors.ml = false\nselectors.cls = false\n");
  ASSERT_EQ(run("run -q --config " + cfg.string() + " --steps 300 --out " + (dir / "o").string(), dir / "log"), 0)
      << slurp(dir / "log");
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "o" / "summary.json"))["n_steps"], 300);
  fs::remove_all(dir);
}

TEST(Cli, UnknownKeyExitsWithConfigError) {
  const fs::path dir = scratch("unknown");
  const fs::path cfg = write_config(dir, "problem = toy_scalar\nsampler.nsteps = 10\n");
  EXPECT_EQ(run("run --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("sampler.nsteps"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, InvalidCovarianceUpdatePeriodExitsWithConfigError) {
  const fs::path dir = scratch("nprime");
  const fs::path cfg = write_config(dir, "problem = toy_scalar\nsampler.cov_update_every = 1\n");
  EXPECT_EQ(run("run --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "log"), 2);
  fs::remove_all(dir);
}

TEST(Cli, BadFlagsExitWithConfigError) {
  const fs::path dir = scratch("flags");
  EXPECT_EQ(run("run --bogus", dir / "log"), 2);
  EXPECT_EQ(run("run --n-par 0", dir / "log"), 2);
  EXPECT_EQ(run("", dir / "log"), 2);
  EXPECT_EQ(run("run --config " + (dir / "missing.cfg").string(), dir / "log"), 2);
  fs::remove_all(dir);
}

TEST(Cli, TinySelectorBudgetExitsWithFour) {
  const fs::path dir = scratch("budget");
  const fs::path cfg = write_config(
      dir, "problem = toy_scalar\nsampler.enabled = false\nselectors.n_starts = 2\nselectors.max_evals = 4\n");
  EXPECT_EQ(run("compare --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "log"), 4)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(dir / "o" / "baselines.csv"));
  fs::remove_all(dir);
}

TEST(Cli, OracleVerb) {
  const fs::path dir = scratch("oracle");
  const fs::path cfg = write_config(dir, "problem = toy_scalar\nreport.oracle_m_points = 11\nreport.oracle_alpha_points = 6\n");
  ASSERT_EQ(run("oracle -q --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "log"), 0)
      << slurp(dir / "log");
  EXPECT_TRUE(fs::exists(dir / "o" / "oracle_grid.csv"));
  // The fault problem has no brute-force grid.
  EXPECT_EQ(run("oracle -q --out " + (dir / "f").string(), dir / "log"), 2);
  fs::remove_all(dir);
}

TEST(Cli, ValidateVerb) {
  const fs::path dir = scratch("validate");
  ASSERT_EQ(run("validate --instances 20 --seed 3", dir / "log"), 0) << slurp(dir / "log");
  const std::string out = slurp(dir / "log");
  EXPECT_NE(out.find("PASS"), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
  fs::remove_all(dir);
}
