#include "parinv/experiment.hpp"

#include "parinv/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace parinv {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config keys

struct KeySpec {
  const char* key;
  std::function<void(ExperimentConfig&, const ConfigEntry&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

using namespace config_value;

template <typename Int>
Int checked_count(const ConfigEntry& e, std::int64_t min) {
  const std::int64_t v = to_int(e);
  if (v < min) throw ConfigError(e.key + " must be >= " + std::to_string(min));
  return static_cast<Int>(v);
}

#define PARINV_DOUBLE_KEY(name, field)                                              \
  KeySpec {                                                                         \
    name, [](ExperimentConfig& c, const ConfigEntry& e) { c.field = to_double(e); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.field); }               \
  }
#define PARINV_BOOL_KEY(name, field)                                              \
  KeySpec {                                                                       \
    name, [](ExperimentConfig& c, const ConfigEntry& e) { c.field = to_bool(e); }, \
        [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); } \
  }
#define PARINV_COUNT_KEY(name, field, type, min)                                                  \
  KeySpec {                                                                                       \
    name, [](ExperimentConfig& c, const ConfigEntry& e) { c.field = checked_count<type>(e, min); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                         \
  }

// Keys applied before all others so that explicit settings win over presets.
bool is_preset(const std::string& key) {
  return key == "seed" || key == "noise.scenario" || key == "full_scale";
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"problem",
       [](ExperimentConfig& c, const ConfigEntry& e) {
         if (e.value == "fault") c.problem = ProblemKind::fault;
         else if (e.value == "toy_scalar") c.problem = ProblemKind::toy_scalar;
         else if (e.value == "dense_random") c.problem = ProblemKind::dense_random;
         else throw ConfigError("problem must be fault, toy_scalar or dense_random");
       },
       [](const ExperimentConfig& c) { return std::string(to_string(c.problem)); }},
      {"seed", [](ExperimentConfig& c, const ConfigEntry& e) { c.set_seed(to_uint(e)); },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      {"output_dir", [](ExperimentConfig& c, const ConfigEntry& e) { c.output_dir = e.value; },
       [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      {"full_scale",
       [](ExperimentConfig& c, const ConfigEntry& e) {
         if (to_bool(e)) c.set_full_scale();
       },
       [](const ExperimentConfig& c) { return std::string(c.full_scale ? "true" : "false"); }},
      {"noise.scenario", [](ExperimentConfig& c, const ConfigEntry& e) { c.set_noise(e.value); },
       [](const ExperimentConfig& c) { return c.noise_label; }},
      PARINV_DOUBLE_KEY("noise.fraction", noise_fraction),

      PARINV_COUNT_KEY("fault.grid_m", fault.grid_m, Index, 2),
      PARINV_COUNT_KEY("fault.stations", fault.stations, Index, 1),
      {"fault.layout_seed", [](ExperimentConfig& c, const ConfigEntry& e) { c.fault.layout_seed = to_uint(e); },
       [](const ExperimentConfig& c) { return std::to_string(c.fault.layout_seed); }},
      PARINV_COUNT_KEY("fault.synthesis_factor", fault.synthesis_factor, Index, 1),
      PARINV_DOUBLE_KEY("fault.bump.center_x1", fault.bump.center_x1),
      PARINV_DOUBLE_KEY("fault.bump.center_x2", fault.bump.center_x2),
      PARINV_DOUBLE_KEY("fault.bump.radius", fault.bump.radius),
      PARINV_DOUBLE_KEY("fault.bump.amplitude", fault.bump.amplitude),
      PARINV_DOUBLE_KEY("fault.bump.plateau", fault.bump.plateau),

      PARINV_COUNT_KEY("toy.n", toy.n, Index, 1),
      PARINV_COUNT_KEY("toy.p", toy.p, Index, 1),
      PARINV_DOUBLE_KEY("toy.m_true", toy.m_true),
      PARINV_DOUBLE_KEY("toy.m_lower", toy.m_lower),
      PARINV_DOUBLE_KEY("toy.m_upper", toy.m_upper),

      PARINV_COUNT_KEY("dense.n", dense.n, Index, 1),
      PARINV_COUNT_KEY("dense.p", dense.p, Index, 1),
      PARINV_DOUBLE_KEY("dense.m_true", dense.m_true),

      PARINV_BOOL_KEY("sampler.enabled", run_sampler),
      PARINV_COUNT_KEY("sampler.n_steps", sampler.n_steps, std::size_t, 1),
      PARINV_COUNT_KEY("sampler.cov_update_every", sampler.cov_update_every, std::size_t, 1),
      PARINV_COUNT_KEY("sampler.n_parallel", sampler.n_parallel, std::size_t, 1),
      PARINV_COUNT_KEY("sampler.burn_in_draws", sampler.burn_in_draws, std::size_t, 1),
      PARINV_DOUBLE_KEY("sampler.beta_max", sampler.beta_max),
      PARINV_DOUBLE_KEY("sampler.beta_rate", sampler.beta_rate),
      PARINV_DOUBLE_KEY("sampler.scale", sampler.scale),
      {"sampler.anchor",
       [](ExperimentConfig& c, const ConfigEntry& e) {
         if (e.value == "per_slot") c.sampler.anchor = AnchorMode::per_slot;
         else if (e.value == "last_column") c.sampler.anchor = AnchorMode::last_column;
         else throw ConfigError("sampler.anchor must be per_slot or last_column");
       },
       [](const ExperimentConfig& c) {
         return std::string(c.sampler.anchor == AnchorMode::per_slot ? "per_slot" : "last_column");
       }},
      PARINV_DOUBLE_KEY("sampler.max_incident_rate", sampler.max_incident_rate),

      PARINV_BOOL_KEY("selectors.gcv", selectors.gcv),
      PARINV_BOOL_KEY("selectors.ml", selectors.ml),
      PARINV_BOOL_KEY("selectors.cls", selectors.cls),
      PARINV_BOOL_KEY("selectors.favorable_start", selectors.favorable_start),
      PARINV_COUNT_KEY("selectors.n_starts", selectors.optimizer.n_starts, std::size_t, 1),
      PARINV_COUNT_KEY("selectors.max_evals", selectors.optimizer.max_evals, std::size_t, 1),
      PARINV_DOUBLE_KEY("selectors.local_tol", selectors.optimizer.local_tol),
      {"selectors.cls_alphas",
       [](ExperimentConfig& c, const ConfigEntry& e) { c.selectors.cls_alphas = to_double_list(e); },
       [](const ExperimentConfig& c) {
         std::string out;
         for (double a : c.selectors.cls_alphas) out += (out.empty() ? "" : ", ") + fmt_double(a);
         return out;
       }},

      PARINV_DOUBLE_KEY("report.burn_in_fraction", report.burn_in_fraction),
      PARINV_COUNT_KEY("report.bins", report.bins, std::size_t, 1),
      PARINV_COUNT_KEY("report.oracle_m_points", report.oracle_m_points, std::size_t, 2),
      PARINV_COUNT_KEY("report.oracle_alpha_points", report.oracle_alpha_points, std::size_t, 2),
  };
  return table;
}

#undef PARINV_DOUBLE_KEY
#undef PARINV_BOOL_KEY
#undef PARINV_COUNT_KEY

// ---------------------------------------------------------------------------
// Output helpers

json to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? json(v[i]) : json(nullptr));
  return a;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

Vector vector_from_json(const json& a) {
  Vector v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    v[static_cast<Index>(i)] = a[i].is_number() ? a[i].get<double>() : std::nan("");
  }
  return v;
}

std::vector<std::string> state_names(Index q) {
  std::vector<std::string> names;
  for (Index i = 1; i <= q; ++i) names.push_back("m" + std::to_string(i));
  names.emplace_back("log10_alpha");
  return names;
}

class ArtifactLog {
 public:
  explicit ArtifactLog(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name);
    if (!out) throw ConfigError("cannot write " + (dir_ / name).string());
    files_.push_back(name);
    return out;
  }
  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

  void write_manifest(const std::string& verb, const std::string& status, const std::string& error,
                      std::uint64_t seed, double runtime) {
    json m;
    m["verb"] = verb;
    m["status"] = status;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["runtime_seconds"] = runtime;
    m["files"] = files_;
    if (!error.empty()) m["error"] = error;
    std::ofstream out(dir_ / "manifest.json");
    if (out) out << m.dump(2) << '\n';
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("output directory " + dir.string() + " is not writable");
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_lattice_csv(std::ofstream& out, const fault::Lattice& lattice,
                       const std::vector<std::pair<std::string, const Vector*>>& columns) {
  out << "x1,x2";
  for (const auto& c : columns) out << ',' << c.first;
  out << '\n';
  for (Index k = 0; k < lattice.nodes(); ++k) {
    const fault::Vec2 x = lattice.node(k);
    out << fmt_double(x.x()) << ',' << fmt_double(x.y());
    for (const auto& c : columns) out << ',' << fmt_double((*c.second)[k]);
    out << '\n';
  }
}

Vector lattice_depths(const fault::FaultGeometry& geom, const fault::Lattice& lattice) {
  Vector d(lattice.nodes());
  for (Index k = 0; k < lattice.nodes(); ++k) {
    const fault::Vec2 x = lattice.node(k);
    d[k] = geom.depth(x.x(), x.y());
  }
  return d;
}

void write_baselines_csv(std::ofstream& out, const std::vector<BaselineRow>& rows, Index q) {
  out << "method,ok";
  for (const auto& n : state_names(q)) out << ',' << n;
  out << ",value,distance,inside_envelope,evaluations,budget_exhausted,error\n";
  for (const BaselineRow& r : rows) {
    out << r.method << ',' << (r.ok ? 1 : 0);
    for (Index i = 0; i < q; ++i) out << ',' << (r.ok ? fmt_double(r.m[i]) : "");
    out << ',' << (r.ok ? fmt_double(r.log10_alpha) : "") << ',' << (r.ok ? fmt_double(r.value) : "")
        << ',' << (r.ok ? fmt_double(r.distance) : "") << ',';
    for (bool b : r.inside_envelope) out << (b ? '1' : '0');
    out << ',' << r.evaluations << ',' << (r.budget_exhausted ? 1 : 0) << ",\"" << r.error << "\"\n";
  }
}

json baselines_json(const std::vector<BaselineRow>& rows) {
  json a = json::array();
  for (const BaselineRow& r : rows) {
    json j;
    j["method"] = r.method;
    j["ok"] = r.ok;
    if (r.ok) {
      j["m"] = to_json(r.m);
      j["log10_alpha"] = r.log10_alpha;
      j["value"] = std::isfinite(r.value) ? json(r.value) : json(nullptr);
      j["distance"] = r.distance;
      j["inside_envelope"] = r.inside_envelope;
    } else {
      j["error"] = r.error;
    }
    j["evaluations"] = r.evaluations;
    j["budget_exhausted"] = r.budget_exhausted;
    a.push_back(std::move(j));
  }
  return a;
}

void write_problem_artifacts(ArtifactLog& log, const ExperimentProblem& ep) {
  if (!ep.fault) return;
  const fault::FaultProblem& fp = *ep.fault;
  {
    std::ofstream out = log.open("stations.csv");
    out << "station,x1,x2,u1_free,u2_free,u3_free,u1,u2,u3\n";
    for (std::size_t j = 0; j < fp.stations.size(); ++j) {
      out << j << ',' << fmt_double(fp.stations[j].x()) << ',' << fmt_double(fp.stations[j].y());
      for (Index c = 0; c < 3; ++c) out << ',' << fmt_double(fp.data.u_free[3 * static_cast<Index>(j) + c]);
      for (Index c = 0; c < 3; ++c) out << ',' << fmt_double(fp.data.u[3 * static_cast<Index>(j) + c]);
      out << '\n';
    }
  }
  {
    std::ofstream out = log.open("truth_lattice.csv");
    const Vector depth = lattice_depths(fp.truth, fp.lattice);
    write_lattice_csv(out, fp.lattice, {{"depth", &depth}, {"slip", &fp.true_slip.values}});
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::fault: return "fault";
    case ProblemKind::toy_scalar: return "toy_scalar";
    case ProblemKind::dense_random: return "dense_random";
  }
  return "?";
}

SamplerConfig ExperimentConfig::default_sampler() {
  SamplerConfig s;
  s.n_parallel = 20;
  return s;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  sampler.seed = s;
  selectors.optimizer.seed = s;
}

void ExperimentConfig::set_noise(std::string_view label) {
  if (label == "low") {
    noise_fraction = 0.05;
  } else if (label == "high") {
    noise_fraction = 0.25;
  } else {
    throw ConfigError("noise.scenario must be low or high");
  }
  noise_label = std::string(label);
}

void ExperimentConfig::set_full_scale() {
  full_scale = true;
  fault.grid_m = 101;
  fault.stations = 195;
}

ExperimentConfig ExperimentConfig::from_entries(const std::vector<ConfigEntry>& entries) {
  ConfigBinder binder;
  ExperimentConfig config;
  for (const KeySpec& k : key_table()) {
    binder.bind(k.key, [&config, set = k.set](const ConfigEntry& e) { set(config, e); });
  }
  std::vector<ConfigEntry> ordered;
  for (const ConfigEntry& e : entries) {
    if (is_preset(e.key)) ordered.push_back(e);
  }
  for (const ConfigEntry& e : entries) {
    if (!is_preset(e.key)) ordered.push_back(e);
  }
  binder.apply(ordered);
  return config;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  return from_entries(parse_config_file(path));
}

void ExperimentConfig::validate() const {
  if (!(noise_fraction > 0.0)) throw ConfigError("noise.fraction must be positive");
  if (run_sampler) sampler.validate();
  if (!(report.burn_in_fraction >= 0.0 && report.burn_in_fraction < 1.0)) {
    throw ConfigError("report.burn_in_fraction must be in [0, 1)");
  }
  if (selectors.any()) {
    selectors.optimizer.validate();
    if (selectors.cls && selectors.cls_alphas.empty()) throw ConfigError("selectors.cls_alphas is empty");
    for (double a : selectors.cls_alphas) {
      if (!(a > 0.0)) throw ConfigError("selectors.cls_alphas must be positive");
    }
  }
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  switch (problem) {
    case ProblemKind::fault:
      if (fault.grid_m < 2 || fault.stations < 1) throw ConfigError("fault: grid_m >= 2, stations >= 1");
      break;
    case ProblemKind::toy_scalar:
      if (!(toy.m_lower > 0.0 && toy.m_lower < toy.m_upper)) {
        throw ConfigError("toy: need 0 < m_lower < m_upper");
      }
      if (!(toy.m_true >= toy.m_lower && toy.m_true <= toy.m_upper)) {
        throw ConfigError("toy: m_true outside [m_lower, m_upper]");
      }
      break;
    case ProblemKind::dense_random:
      if (!(dense.m_true >= -1.0 && dense.m_true <= 1.0)) throw ConfigError("dense: m_true outside [-1, 1]");
      break;
  }
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  for (const KeySpec& k : key_table()) out << k.key << " = " << k.get(*this) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Problems

ExperimentProblem build_problem(const ExperimentConfig& config) {
  ExperimentProblem ep;
  ep.kind = config.problem;
  switch (config.problem) {
    case ProblemKind::fault: {
      fault::FaultProblemConfig fc = config.fault;
      fc.scenario = {config.noise_label, config.noise_fraction, config.seed};
      fault::FaultProblem fp = fault::make_fault_problem(fc);
      ep.problem = fp.problem;
      ep.prior = fp.prior;
      ep.m_true = fault::true_m();
      ep.sigma = fp.data.sigma;
      ep.realized_relative_error = fp.data.realized_relative_error;
      ep.fault = std::move(fp);
      break;
    }
    case ProblemKind::toy_scalar:
    case ProblemKind::dense_random: {
      SyntheticProblem sp;
      if (config.problem == ProblemKind::toy_scalar) {
        ToyScalarConfig tc = config.toy;
        tc.noise_fraction = config.noise_fraction;
        tc.seed = config.seed;
        sp = make_toy_scalar(tc);
      } else {
        DenseRandomConfig dc = config.dense;
        dc.noise_fraction = config.noise_fraction;
        dc.seed = config.seed;
        sp = make_dense_random(dc);
      }
      ep.problem = std::move(sp.problem);
      ep.prior = std::move(sp.prior);
      ep.m_true = sp.m_true;
      ep.sigma = sp.sigma;
      ep.realized_relative_error = sp.realized_relative_error;
      break;
    }
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Statistics

SampleStatistics sample_statistics(const Matrix& samples, const Vector& lower, const Vector& upper,
                                   std::size_t bins) {
  const Index d = samples.rows();
  const Index n = samples.cols();
  if (n < 1) throw std::invalid_argument("sample_statistics: no samples");
  if (lower.size() != d || upper.size() != d) throw DimensionMismatch("sample_statistics: bounds");
  if (bins < 1) throw std::invalid_argument("sample_statistics: bins must be >= 1");

  SampleStatistics s;
  s.count = static_cast<std::size_t>(n);
  CovarianceAccumulator acc(d);
  for (Index c = 0; c < n; ++c) acc.add(samples.col(c));
  s.mean = acc.mean();
  s.covariance = acc.covariance(0.0);
  s.std_dev = s.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

  s.median.resize(d);
  s.quantile_05.resize(d);
  s.quantile_95.resize(d);
  std::vector<double> row(static_cast<std::size_t>(n));
  auto quantile = [&row](double prob) {
    // Linear interpolation between order statistics.
    const double pos = prob * static_cast<double>(row.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, row.size() - 1);
    return row[lo] + (pos - static_cast<double>(lo)) * (row[hi] - row[lo]);
  };
  for (Index i = 0; i < d; ++i) {
    for (Index c = 0; c < n; ++c) row[static_cast<std::size_t>(c)] = samples(i, c);
    std::sort(row.begin(), row.end());
    s.median[i] = quantile(0.5);
    s.quantile_05[i] = quantile(0.05);
    s.quantile_95[i] = quantile(0.95);

    Histogram h;
    h.lower = lower[i];
    h.upper = upper[i];
    h.probabilities.assign(bins, 0.0);
    const double width = h.upper - h.lower;
    for (double x : row) {
      auto b = width > 0.0 ? static_cast<std::ptrdiff_t>(std::floor((x - h.lower) / width * static_cast<double>(bins))) : 0;
      b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
      h.probabilities[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& p : h.probabilities) p /= static_cast<double>(n);
    s.marginals.push_back(std::move(h));
  }
  return s;
}

std::size_t burn_in_cut(const ChainHistory& history, std::size_t n_steps, double fraction) {
  const auto last_discarded = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_steps)));
  std::size_t i = 0;
  while (i < history.size() && history.step(i) <= last_discarded) ++i;
  return i;
}

Vector potential_scale_reduction(const ChainHistory& history, std::size_t first) {
  const Index d = history.dim();
  std::size_t n_slots = 0;
  for (std::size_t i = first; i < history.size(); ++i) n_slots = std::max(n_slots, history.slot(i) + 1);
  std::vector<std::vector<std::size_t>> chains;
  if (n_slots <= 1) {
    const std::size_t total = history.size() - first;
    std::vector<std::size_t> a;
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i < total; ++i) (i < total / 2 ? a : b).push_back(first + i);
    if (b.size() > a.size()) b.pop_back();
    chains = {a, b};
  } else {
    chains.resize(n_slots);
    for (std::size_t i = first; i < history.size(); ++i) chains[history.slot(i)].push_back(i);
  }
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());
  Vector rhat = Vector::Constant(d, std::nan(""));
  if (len < 2) return rhat;

  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(len);
  for (Index k = 0; k < d; ++k) {
    std::vector<double> means;
    double within = 0.0;
    for (const auto& c : chains) {
      double mean = 0.0;
      for (std::size_t t = 0; t < len; ++t) mean += history.state(c[t])[k];
      mean /= n;
      double var = 0.0;
      for (std::size_t t = 0; t < len; ++t) var += std::pow(history.state(c[t])[k] - mean, 2);
      within += var / (n - 1.0);
      means.push_back(mean);
    }
    within /= m;
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= m;
    double between = 0.0;
    for (double v : means) between += (v - grand) * (v - grand);
    between *= n / (m - 1.0);
    const double pooled = (n - 1.0) / n * within + between / n;
    rhat[k] = within > 0.0 ? std::sqrt(pooled / within) : std::nan("");
  }
  return rhat;
}

DepthStatistics depth_statistics(const Matrix& m_samples, const fault::Lattice& lattice,
                                 const fault::FaultGeometry& truth) {
  if (m_samples.cols() < 1) throw std::invalid_argument("depth_statistics: no samples");
  const Index p = lattice.nodes();
  DepthStatistics out;
  out.lattice = lattice;
  out.mean = Vector::Zero(p);
  Vector m2 = Vector::Zero(p);
  Vector depth(p);
  for (Index c = 0; c < m_samples.cols(); ++c) {
    const fault::FaultGeometry g = fault::FaultGeometry::from_m(m_samples.col(c));
    for (Index k = 0; k < p; ++k) {
      const fault::Vec2 x = lattice.node(k);
      depth[k] = g.depth(x.x(), x.y());
    }
    const Vector delta = depth - out.mean;
    out.mean += delta / static_cast<double>(c + 1);
    m2 += delta.cwiseProduct(depth - out.mean);
  }
  out.std_dev = (m2 / static_cast<double>(m_samples.cols())).cwiseMax(0.0).cwiseSqrt();
  out.truth = lattice_depths(truth, lattice);
  out.abs_error = (out.mean - out.truth).cwiseAbs();
  return out;
}

Vector reconstruct_slip(const ProblemDefinition& problem, const Vector& m, double alpha) {
  const ForwardOperator op = problem.make_operator(m);
  return solve_regularized(op, problem.gram, alpha, problem.data);
}

double support_relative_error(const Vector& g, const Vector& g_true) {
  if (g.size() != g_true.size()) throw DimensionMismatch("support_relative_error");
  double num = 0.0;
  double den = 0.0;
  for (Index k = 0; k < g.size(); ++k) {
    if (!(g_true[k] > 0.0)) continue;
    num += (g[k] - g_true[k]) * (g[k] - g_true[k]);
    den += g_true[k] * g_true[k];
  }
  if (den == 0.0) throw std::invalid_argument("support_relative_error: empty support");
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Baselines

std::vector<BaselineRow> compare_baselines(const ExperimentProblem& ep, const SelectorSettings& settings,
                                           const SampleStatistics* posterior) {
  const Index q = ep.prior.q();
  std::vector<BaselineRow> rows;
  auto finish = [&](BaselineRow& row) {
    row.ok = true;
    row.distance = (row.m - ep.m_true).norm();
    if (posterior) {
      for (Index i = 0; i < q; ++i) {
        row.inside_envelope.push_back(std::abs(row.m[i] - posterior->mean[i]) <= posterior->std_dev[i]);
      }
    }
  };
  auto selector_row = [&](const std::string& name, Criterion c, const std::optional<Vector>& start) {
    BaselineRow row;
    row.method = name;
    try {
      const SelectorFit fit = minimize_selector(ep.problem, c, ep.prior, settings.optimizer, start);
      row.m = fit.m;
      row.log10_alpha = fit.log10_alpha;
      row.value = fit.value;
      row.evaluations = fit.evaluations;
      row.budget_exhausted = fit.budget_exhausted;
      finish(row);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  };

  std::optional<Vector> favorable;
  if (settings.favorable_start && ep.fault) {
    Vector s(q + 1);
    s << fault::favorable_m(), std::log10(fault::kFavorableAlpha);
    favorable = s;
  }
  if (settings.gcv) selector_row("gcv", Criterion::gcv, std::nullopt);
  if (settings.ml) selector_row("ml", Criterion::ml, std::nullopt);
  if (favorable && settings.gcv) selector_row("gcv_favorable", Criterion::gcv, favorable);
  if (favorable && settings.ml) selector_row("ml_favorable", Criterion::ml, favorable);
  if (settings.cls) {
    for (double alpha : settings.cls_alphas) {
      BaselineRow row;
      char name[32];
      std::snprintf(name, sizeof name, "cls_%.0e", alpha);
      row.method = name;
      try {
        const ClsFit fit = cls_fixed_alpha_fit(ep.problem, {alpha}, ep.prior, settings.optimizer).front();
        row.m = fit.m;
        row.log10_alpha = std::log10(alpha);
        row.value = fit.value;
        row.evaluations = fit.evaluations;
        row.budget_exhausted = fit.budget_exhausted;
        finish(row);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

bool RunSummary::any_budget_exhausted() const {
  return std::any_of(baselines.begin(), baselines.end(),
                     [](const BaselineRow& r) { return r.budget_exhausted; });
}

// ---------------------------------------------------------------------------
// Writers

void write_chain_csv(const std::filesystem::path& path, const ChainHistory& history, Index q) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "step,slot";
  for (const auto& n : state_names(q)) out << ',' << n;
  out << ",log_density,accepted\n";
  std::string line;
  for (std::size_t i = 0; i < history.size(); ++i) {
    line = std::to_string(history.step(i)) + ',' + std::to_string(history.slot(i));
    const auto x = history.state(i);
    for (Index c = 0; c < x.size(); ++c) line += ',' + fmt_double(x[c]);
    line += ',' + fmt_double(history.log_density(i)) + ',' + (history.accepted(i) ? '1' : '0');
    out << line << '\n';
  }
}

void write_summary_json(const std::filesystem::path& path, const RunSummary& s) {
  json j;
  j["problem"] = s.problem;
  j["seed"] = s.seed;
  j["version"] = s.version;
  j["state_names"] = state_names(s.m_true.size());
  j["m_true"] = to_json(s.m_true);
  j["sigma"] = s.sigma;
  j["realized_relative_error"] = s.realized_relative_error;
  j["sampled"] = s.sampled;
  if (s.sampled) {
    j["n_parallel"] = s.n_parallel;
    j["n_steps"] = s.n_steps;
    j["burn_in_records"] = s.burn_in_records;
    j["retained_samples"] = s.posterior.count;
    j["acceptance_rate"] = s.acceptance_rate;
    j["evaluations"] = s.evaluations;
    j["incidents"] = s.incidents;
    j["misfit_clamp_events"] = s.clamp_events;
    json post;
    post["mean"] = to_json(s.posterior.mean);
    post["covariance"] = to_json(s.posterior.covariance);
    post["std_dev"] = to_json(s.posterior.std_dev);
    post["median"] = to_json(s.posterior.median);
    post["quantile_05"] = to_json(s.posterior.quantile_05);
    post["quantile_95"] = to_json(s.posterior.quantile_95);
    post["rhat"] = to_json(s.rhat);
    json hists = json::array();
    for (const Histogram& h : s.posterior.marginals) {
      hists.push_back({{"lower", h.lower}, {"upper", h.upper}, {"probabilities", h.probabilities}});
    }
    post["marginal_histograms"] = hists;
    j["posterior"] = post;
    if (s.depth) {
      j["depth"] = {{"max_std", s.depth->std_dev.maxCoeff()},
                    {"max_abs_error", s.depth->abs_error.maxCoeff()},
                    {"mean_abs_error", s.depth->abs_error.mean()}};
      j["slip_relative_error"] = s.slip_relative_error;
    }
  }
  j["baselines"] = baselines_json(s.baselines);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

RunSummary base_summary(const ExperimentConfig& config, const ExperimentProblem& ep) {
  RunSummary s;
  s.problem = std::string(to_string(config.problem));
  s.seed = config.seed;
  s.m_true = ep.m_true;
  s.sigma = ep.sigma;
  s.realized_relative_error = ep.realized_relative_error;
  return s;
}

template <typename Body>
void with_manifest(ArtifactLog& log, const std::string& verb, const ExperimentConfig& config,
                   Body&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    log.write_manifest(verb, "failed", e.what(), config.seed, seconds_since(t0));
    throw;
  }
  log.write_manifest(verb, "complete", "", config.seed, seconds_since(t0));
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (options.write_artifacts) prepare_output_dir(config.output_dir);
  ArtifactLog log(config.output_dir);
  RunSummary summary;

  auto body = [&] {
    if (options.write_artifacts) log.open("config.txt") << config.to_text();
    const ExperimentProblem ep = build_problem(config);
    summary = base_summary(config, ep);
    if (options.write_artifacts) write_problem_artifacts(log, ep);

    if (config.run_sampler) {
      const PosteriorEvaluator evaluator(ep.problem, ep.prior);
      StepObserver observer;
      if (options.progress && options.progress_every > 0) {
        observer = [&](const StepRecord& r) {
          if (r.slot == 0 && r.step % options.progress_every == 0) {
            *options.progress << "step " << r.step << "/" << config.sampler.n_steps
                              << "  acceptance " << r.acceptance_rate << "  log R " << r.log_density
                              << std::endl;
          }
        };
      }
      const ChainRun run = config.sampler.n_parallel == 1
                               ? single_chain_run(evaluator, config.sampler, observer)
                               : parallel_chain_run(evaluator, config.sampler, observer);
      summary.sampled = true;
      summary.n_parallel = config.sampler.n_parallel;
      summary.n_steps = config.sampler.n_steps;
      summary.burn_in_records = burn_in_cut(run.history, config.sampler.n_steps, config.report.burn_in_fraction);
      const Matrix samples = run.history.samples(summary.burn_in_records);
      if (samples.cols() < 2) throw ConfigError("burn-in leaves fewer than two samples");
      summary.posterior = sample_statistics(samples, ep.prior.state_lower(), ep.prior.state_upper(),
                                            config.report.bins);
      summary.rhat = potential_scale_reduction(run.history, summary.burn_in_records);
      summary.acceptance_rate = run.acceptance_rate();
      summary.evaluations = run.evaluations;
      summary.incidents = run.incidents;
      summary.clamp_events = evaluator.clamp_events();

      const Index q = ep.prior.q();
      if (ep.fault) {
        const fault::FaultProblem& fp = *ep.fault;
        summary.depth = depth_statistics(samples.topRows(q), fp.lattice, fp.truth);
        const Vector m_mean = summary.posterior.mean.head(q);
        const double alpha_mean = std::pow(10.0, summary.posterior.mean[q]);
        summary.slip_at_mean = reconstruct_slip(ep.problem, m_mean, alpha_mean);
        summary.slip_relative_error = support_relative_error(summary.slip_at_mean, fp.true_slip.values);
      }
      if (options.write_artifacts) {
        log.open("chain.csv").close();
        write_chain_csv(config.output_dir / "chain.csv", run.history, q);
        if (summary.depth) {
          const DepthStatistics& d = *summary.depth;
          std::ofstream out = log.open("depth_statistics.csv");
          write_lattice_csv(out, d.lattice,
                            {{"mean_depth", &d.mean}, {"std_depth", &d.std_dev}, {"true_depth", &d.truth},
                             {"abs_error", &d.abs_error}});
          const fault::FaultGeometry mean_geom =
              fault::FaultGeometry::from_m(summary.posterior.mean.head(q));
          const Vector depth = lattice_depths(mean_geom, d.lattice);
          std::ofstream rec = log.open("reconstruction_lattice.csv");
          write_lattice_csv(rec, d.lattice, {{"depth", &depth}, {"slip", &summary.slip_at_mean}});
        }
      }
    }

    if (config.selectors.any()) {
      summary.baselines = compare_baselines(ep, config.selectors, summary.sampled ? &summary.posterior : nullptr);
      if (options.write_artifacts) {
        std::ofstream out = log.open("baselines.csv");
        write_baselines_csv(out, summary.baselines, ep.prior.q());
      }
    }
    summary.runtime_seconds = seconds_since(t0);
    if (options.write_artifacts) {
      log.open("summary.json").close();
      write_summary_json(config.output_dir / "summary.json", summary);
    }
  };

  if (!options.write_artifacts) {
    body();
    return summary;
  }
  with_manifest(log, "run", config, body);
  return summary;
}

RunSummary run_compare(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (!config.selectors.any()) throw ConfigError("compare: no selector enabled");
  const auto t0 = std::chrono::steady_clock::now();
  if (options.write_artifacts) prepare_output_dir(config.output_dir);
  ArtifactLog log(config.output_dir);
  RunSummary summary;

  auto body = [&] {
    if (options.write_artifacts) log.open("compare_config.txt") << config.to_text();
    const ExperimentProblem ep = build_problem(config);
    summary = base_summary(config, ep);

    std::optional<SampleStatistics> posterior;
    const auto previous = config.output_dir / "summary.json";
    if (std::filesystem::exists(previous)) {
      std::ifstream in(previous);
      const json j = json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("posterior") && j.value("seed", std::uint64_t{0}) == config.seed &&
          j.value("problem", std::string()) == summary.problem) {
        SampleStatistics s;
        s.mean = vector_from_json(j["posterior"]["mean"]);
        s.std_dev = vector_from_json(j["posterior"]["std_dev"]);
        if (s.mean.size() == ep.prior.dim() && s.std_dev.size() == ep.prior.dim()) posterior = s;
      }
    }
    summary.baselines = compare_baselines(ep, config.selectors, posterior ? &*posterior : nullptr);
    summary.runtime_seconds = seconds_since(t0);
    if (options.write_artifacts) {
      std::ofstream out = log.open("baselines.csv");
      write_baselines_csv(out, summary.baselines, ep.prior.q());
      json j;
      j["problem"] = summary.problem;
      j["seed"] = summary.seed;
      j["m_true"] = to_json(summary.m_true);
      j["posterior_envelope"] = posterior.has_value();
      j["baselines"] = baselines_json(summary.baselines);
      log.open("compare.json") << j.dump(2) << '\n';
    }
  };
  if (!options.write_artifacts) {
    body();
    return summary;
  }
  with_manifest(log, "compare", config, body);
  return summary;
}

PosteriorGrid run_oracle(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (config.problem == ProblemKind::fault) {
    throw ConfigError("oracle: the brute-force grid needs a scalar m (toy_scalar or dense_random)");
  }
  if (options.write_artifacts) prepare_output_dir(config.output_dir);
  ArtifactLog log(config.output_dir);
  PosteriorGrid grid;

  auto body = [&] {
    const ExperimentProblem ep = build_problem(config);
    const PosteriorEvaluator evaluator(ep.problem, ep.prior);
    const std::size_t nm = config.report.oracle_m_points;
    const std::size_t na = config.report.oracle_alpha_points;
    std::vector<Vector> m_points;
    for (std::size_t i = 0; i < nm; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(nm - 1);
      m_points.push_back(ep.prior.m_lower + t * (ep.prior.m_upper - ep.prior.m_lower));
    }
    std::vector<double> alphas;
    for (std::size_t i = 0; i < na; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(na - 1);
      alphas.push_back(ep.prior.log10_alpha_lower + t * (ep.prior.log10_alpha_upper - ep.prior.log10_alpha_lower));
    }
    grid = posterior_grid(evaluator, std::move(m_points), std::move(alphas));
    if (grid.failures() > 0) {
      throw NumericalFailure("oracle grid: " + std::to_string(grid.failures()) + " nodes failed");
    }
    if (!options.write_artifacts) return;
    {
      std::ofstream out = log.open("oracle_grid.csv");
      out << "m1,log10_alpha,log_value\n";
      for (std::size_t i = 0; i < grid.m_points.size(); ++i) {
        for (std::size_t a = 0; a < grid.log10_alpha.size(); ++a) {
          out << fmt_double(grid.m_points[i][0]) << ',' << fmt_double(grid.log10_alpha[a]) << ','
              << fmt_double(grid.log_values(static_cast<Index>(i), static_cast<Index>(a))) << '\n';
        }
      }
    }
    const GridMarginals marg = grid_marginals(grid);
    {
      std::ofstream out = log.open("oracle_m_marginal.csv");
      out << "m1,density\n";
      for (std::size_t i = 0; i < marg.m_axis.size(); ++i) {
        out << fmt_double(marg.m_axis[i]) << ',' << fmt_double(marg.m_density[i]) << '\n';
      }
    }
    {
      std::ofstream out = log.open("oracle_alpha_marginal.csv");
      out << "log10_alpha,density\n";
      for (std::size_t i = 0; i < marg.alpha_axis.size(); ++i) {
        out << fmt_double(marg.alpha_axis[i]) << ',' << fmt_double(marg.alpha_density[i]) << '\n';
      }
    }
  };
  if (!options.write_artifacts) {
    body();
    return grid;
  }
  with_manifest(log, "oracle", config, body);
  return grid;
}

}  // namespace parinv
