// Acceptance gate. One PASS/FAIL line per criterion; exit status 1 if any fail.
//
//   parinv_acceptance            all criteria
//   parinv_acceptance 3 9        selected criteria

#include "parinv/errors.hpp"
#include "parinv/experiment.hpp"
#include "parinv/faultsim.hpp"
#include "parinv/posterior.hpp"
#include "parinv/problems.hpp"
#include "parinv/samplers.hpp"
#include "parinv/selectors.hpp"
#include "support/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

using namespace parinv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome identities() {
  StreamRng rng(101);
  double det = 0.0;
  double wood = 0.0;
  double energy = 0.0;
  for (int t = 0; t < 200; ++t) {
    const bool identity = t % 2 == 0;
    const oracle::Instance in = oracle::random_instance(rng, 8, 12, -6, 2, identity);
    const ForwardOperator op(in.a);
    const RegularizerGram gram = oracle::make_gram(in.gram, identity);
    // n x n side from the library, p x p side from the oracle.
    det = std::max(det, oracle::rel_err(logdet_term(op, gram, in.alpha), oracle::logdet_p(in)));
    const LowRankFactor f = factorize_low_rank(op, gram, in.alpha);
    wood = std::max(wood, (f.inverse() - oracle::hat_complement(in)).cwiseAbs().maxCoeff());
    energy = std::max(energy, oracle::rel_err(misfit_quadratic(op, gram, in.alpha, in.u), oracle::energy(in)));
  }
  return {det <= 1e-9 && wood <= 1e-10 && energy <= 1e-8,
          fmt("determinant %.2e, woodbury %.2e, energy %.2e", det, wood, energy)};
}

Outcome sigma_marginalization() {
  StreamRng rng(102);
  int misses = 0;
  double worst_derivative = 0.0;
  for (int t = 0; t < 50; ++t) {
    const oracle::Instance in = oracle::random_instance(rng, 8, 12, -4, 1, t % 2 == 0);
    const ProblemDefinition prob = oracle::fixed_problem(in, t % 2 == 0);
    const Vector m = Vector::Zero(1);
    const double smax = std::sqrt(sigma_max(prob, m, in.alpha));
    int best = 0;
    int nearest = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    double nearest_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 200; ++i) {
      // Offset the grid so sigma_max is not a node.
      const double s = smax * std::pow(10.0, -1.0 + 2.0 * (i + 0.37) / 200.0);
      const double v = log_marginal_likelihood(prob, m, in.alpha, s);
      if (v > best_value) {
        best_value = v;
        best = i;
      }
      const double gap = std::abs(std::log(s / smax));
      if (gap < nearest_gap) {
        nearest_gap = gap;
        nearest = i;
      }
    }
    if (best != nearest) ++misses;
    const double h = 1e-4 * smax;
    const double d = (log_marginal_likelihood(prob, m, in.alpha, smax + h) -
                      log_marginal_likelihood(prob, m, in.alpha, smax - h)) / (2.0 * h);
    // d log L / d log sigma
    worst_derivative = std::max(worst_derivative, std::abs(d) * smax);
  }
  return {misses == 0 && worst_derivative < 1e-6,
          fmt("grid misses %.0f of 50, max relative derivative %.2e", misses, worst_derivative)};
}

std::vector<double> binned(const std::vector<double>& x, const std::vector<double>& d, int bins, int per) {
  std::vector<double> out(static_cast<std::size_t>(bins), 0.0);
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    for (int i = b * per; i < (b + 1) * per; ++i) {
      const auto k = static_cast<std::size_t>(i);
      out[static_cast<std::size_t>(b)] += 0.5 * (d[k] + d[k + 1]) * (x[k + 1] - x[k]);
    }
    total += out[static_cast<std::size_t>(b)];
  }
  for (double& v : out) v /= total;
  return out;
}

Outcome sampler_correctness() {
  const SyntheticProblem sp = make_toy_scalar({});
  const PosteriorEvaluator ev(sp.problem, sp.prior);
  const int bins = 40;
  const int per = 5;
  const int nodes = bins * per;
  const double m_lo = sp.prior.m_lower[0];
  const double m_hi = sp.prior.m_upper[0];
  const double a_lo = sp.prior.log10_alpha_lower;
  const double a_hi = sp.prior.log10_alpha_upper;
  std::vector<Vector> ms;
  std::vector<double> as;
  for (int i = 0; i <= nodes; ++i) {
    ms.push_back(Vector::Constant(1, m_lo + (m_hi - m_lo) * i / nodes));
    as.push_back(a_lo + (a_hi - a_lo) * i / nodes);
  }
  const GridMarginals gm = grid_marginals(posterior_grid(ev, ms, as));
  const std::vector<double> pm = binned(gm.m_axis, gm.m_density, bins, per);
  const std::vector<double> pa = binned(gm.alpha_axis, gm.alpha_density, bins, per);

  std::string detail;
  bool pass = true;
  for (AnchorMode anchor : {AnchorMode::per_slot, AnchorMode::last_column}) {
    SamplerConfig cfg;
    cfg.n_parallel = 8;
    cfg.n_steps = 31250;
    cfg.seed = 2024;
    cfg.anchor = anchor;
    const ChainRun run = parallel_chain_run(ev, cfg);
    const Matrix s = run.history.samples(burn_in_cut(run.history, cfg.n_steps, 0.2));
    const SampleStatistics st = sample_statistics(s, (Vector(2) << m_lo, a_lo).finished(),
                                                  (Vector(2) << m_hi, a_hi).finished(), bins);
    double tv_m = 0.0;
    double tv_a = 0.0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(bins); ++b) {
      tv_m += 0.5 * std::abs(st.marginals[0].probabilities[b] - pm[b]);
      tv_a += 0.5 * std::abs(st.marginals[1].probabilities[b] - pa[b]);
    }
    const bool ok = tv_m < 0.05 && tv_a < 0.05 && s.cols() >= 200000;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + (anchor == AnchorMode::per_slot ? "per_slot" : "last_column") +
              fmt(" retained %.0f, TV m %.4f, TV log10 alpha %.4f", static_cast<double>(s.cols()), tv_m, tv_a);
  }
  return {pass, detail};
}

Outcome transition_law() {
  StreamRng rng(104);
  double worst_row = 0.0;
  bool in_range = true;
  double worst_reduction = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n_par = 1 + rng() % 16;
    std::vector<double> lw(n_par + 1);
    lw[0] = 10.0 * (rng.uniform() - 0.5);
    for (std::size_t k = 1; k <= n_par; ++k) {
      lw[k] = rng.uniform() < 0.2 ? -std::numeric_limits<double>::infinity() : 10.0 * (rng.uniform() - 0.5);
    }
    const TransitionMatrix tm = TransitionMatrix::build(lw);
    for (Index r = 0; r < tm.size(); ++r) {
      // Rows of zero-weight proposals are never drawn from.
      double sum = 0.0;
      for (Index c = 0; c < tm.size(); ++c) {
        sum += tm(r, c);
        in_range = in_range && tm(r, c) >= 0.0 && tm(r, c) <= 1.0;
      }
      if (std::isfinite(lw[static_cast<std::size_t>(r)])) worst_row = std::max(worst_row, std::abs(sum - 1.0));
    }
    if (n_par == 1) {
      const double want = std::min(1.0, std::exp(lw[1] - lw[0]));
      worst_reduction = std::max(worst_reduction, std::abs(tm(0, 1) - want));
    }
  }
  return {worst_row <= 1e-12 && in_range && worst_reduction == 0.0,
          fmt("max row-sum error %.2e, entries in [0,1]: %.0f, N_par = 1 deviation %.2e", worst_row,
              in_range ? 1.0 : 0.0, worst_reduction)};
}

Outcome baseline_scores() {
  StreamRng rng(105);
  double worst = 0.0;
  const Vector m = Vector::Zero(1);
  for (int t = 0; t < 100; ++t) {
    const bool identity = t % 2 == 0;
    const oracle::Instance in = oracle::random_instance(rng, 12, 12, -4, 2, identity);
    const ProblemDefinition prob = oracle::fixed_problem(in, identity);
    worst = std::max(worst, oracle::rel_err(gcv_score(prob, m, in.alpha), oracle::gcv(in)));
    worst = std::max(worst, oracle::rel_err(ml_score(prob, m, in.alpha), oracle::ml(in)));
    worst = std::max(worst, oracle::rel_err(cls_residual(prob, m, in.alpha), oracle::residual(in)));
  }
  double scalar = 0.0;
  for (double u0 : {0.3, -1.1, 2.5, 7.0}) {
    oracle::Instance in;
    in.a = Matrix::Ones(1, 1);
    in.gram = Matrix::Identity(1, 1);
    in.u = Vector::Constant(1, u0);
    const ProblemDefinition prob = oracle::fixed_problem(in, true);
    for (double alpha : {1e-6, 1e-2, 1.0, 1e2}) {
      scalar = std::max(scalar, std::abs(gcv_score(prob, m, alpha) - u0 * u0) / (u0 * u0));
      scalar = std::max(scalar, std::abs(ml_score(prob, m, alpha) - u0 * u0) / (u0 * u0));
    }
  }
  return {worst <= 1e-8 && scalar <= 1e-12, fmt("dense max rel %.2e, scalar max rel %.2e", worst, scalar)};
}

Outcome fault_geometry() {
  using namespace parinv::fault;
  const FaultGeometry g = FaultGeometry::from_m(true_m());
  const auto& p = g.control_points();
  // Independent planes through three control points each.
  auto residual = [](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& x) {
    return std::abs((b - a).cross(c - a).normalized().dot(x - a));
  };
  const double r5 = residual(p[0], p[1], p[2], p[4]);
  const double r6 = residual(p[1], p[2], p[3], p[5]);
  double jump = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double x1 = kSquareMin + kSquareSide * (i + 0.5) / 100.0;
    const double x2 = g.edge_x2(x1);
    jump = std::max(jump, std::abs(g.plane(0).depth_at(x1, x2) - g.plane(1).depth_at(x1, x2)));
  }
  bool flat = true;
  for (double d : {-5.0, -40.0, -123.0}) {
    flat = flat && FaultGeometry::from_m((Vector(6) << d, 0.0, d, 0.0, d, d).finished()).cos_dihedral() == 1.0;
  }
  return {r5 < 1e-10 && r6 < 1e-10 && jump < 1e-10 && flat,
          fmt("P5 residual %.2e, P6 residual %.2e, edge jump %.2e, flat cos == 1: %.0f", r5, r6, jump, flat ? 1.0 : 0.0)};
}

// ---------------------------------------------------------------------------
// Fault runs shared by criteria 7 and 8.

constexpr std::uint64_t kFaultSeed = 7;

ExperimentConfig fault_config(const std::string& noise) {
  ExperimentConfig c;
  c.problem = ProblemKind::fault;
  c.set_seed(kFaultSeed);
  c.set_noise(noise);
  c.fault.grid_m = 41;
  c.fault.stations = 65;
  c.sampler.n_parallel = 8;
  c.sampler.n_steps = 12500;
  // Baselines are only compared on the high-noise data.
  c.selectors.gcv = c.selectors.ml = noise == "high";
  c.selectors.cls = false;
  c.selectors.favorable_start = false;
  return c;
}

std::map<std::string, RunSummary>& fault_runs() {
  static std::map<std::string, RunSummary> runs;
  return runs;
}

const RunSummary& fault_run(const std::string& noise) {
  auto& runs = fault_runs();
  auto it = runs.find(noise);
  if (it == runs.end()) {
    RunOptions opt;
    opt.write_artifacts = false;
    it = runs.emplace(noise, run_experiment(fault_config(noise), opt)).first;
  }
  return it->second;
}

Outcome desk_scale() {
  const RunSummary& low = fault_run("low");
  const RunSummary& high = fault_run("high");
  const Index q = low.m_true.size();
  bool inside = true;
  std::ostringstream detail;
  detail << "low noise |mean - true| / sd:";
  for (Index i = 0; i < q; ++i) {
    const double z = std::abs(low.posterior.mean[i] - low.m_true[i]) / low.posterior.std_dev[i];
    inside = inside && z <= 2.0;
    detail << ' ' << fmt("%.2f", z);
  }
  const double shift = high.posterior.median[q] - low.posterior.median[q];
  detail << fmt("; log10 alpha median low %.2f, high %.2f (shift %.2f)", low.posterior.median[q],
                high.posterior.median[q], shift);
  detail << fmt("; acceptance %.4f / %.4f", low.acceptance_rate, high.acceptance_rate);
  return {inside && shift > 0.5, detail.str()};
}

Outcome baseline_comparison() {
  const RunSummary& high = fault_run("high");
  const Index q = high.m_true.size();
  const double sampler = (high.posterior.mean.head(q) - high.m_true).norm();
  bool pass = true;
  std::string detail = fmt("posterior mean distance %.2f", sampler);
  int found = 0;
  for (const BaselineRow& r : high.baselines) {
    if (r.method != "gcv" && r.method != "ml") continue;
    ++found;
    if (!r.ok) {
      pass = false;
      detail += "; " + r.method + " failed: " + r.error;
      continue;
    }
    pass = pass && r.distance > sampler;
    detail += "; " + r.method + fmt(" distance %.2f", r.distance);
  }
  return {pass && found == 2, detail};
}

// ---------------------------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "parinv_acceptance_determinism";
  bool pass = true;
  std::string detail;
  for (std::size_t n_par : {std::size_t{1}, std::size_t{8}}) {
    std::string chains[2];
    for (int rep = 0; rep < 2; ++rep) {
      ExperimentConfig c;
      c.problem = ProblemKind::toy_scalar;
      c.set_seed(99);
      c.sampler.n_parallel = n_par;
      c.sampler.n_steps = 4000;
      c.selectors.gcv = c.selectors.ml = c.selectors.cls = false;
      c.output_dir = root / (std::to_string(n_par) + "_" + std::to_string(rep));
      fs::remove_all(c.output_dir);
      run_experiment(c);
      chains[rep] = read_file(c.output_dir / "chain.csv");
    }
    const bool same = !chains[0].empty() && chains[0] == chains[1];
    pass = pass && same;
    detail += std::string(detail.empty() ? "" : ", ") + "N_par " + std::to_string(n_par) +
              (same ? " identical" : " differ") + " (" + std::to_string(chains[0].size()) + " bytes)";
  }
  fs::remove_all(root);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, identities},       {2, sigma_marginalization}, {3, sampler_correctness},
      {4, transition_law},   {5, baseline_scores},       {6, fault_geometry},
      {7, desk_scale},       {8, baseline_comparison},   {9, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  bool all = true;
  for (const auto& [id, check] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
