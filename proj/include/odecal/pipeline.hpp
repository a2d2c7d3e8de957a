#pragma once

#include "covid.hpp"
#include "dnn.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "io.hpp"
#include "odesim.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "smoother.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace odecal {

inline constexpr const char* version = "0.1.0";

enum class Mode
{
  simulate,
  smooth,
  train,
  evaluate,
  benchmark,
  covid
};

inline const char*
mode_name(Mode m)
{
  switch (m) {
    case Mode::simulate:
      return "simulate";
    case Mode::smooth:
      return "smooth";
    case Mode::train:
      return "train";
    case Mode::evaluate:
      return "evaluate";
    case Mode::benchmark:
      return "benchmark";
    case Mode::covid:
      return "covid";
  }
  return "?";
}

inline Mode
parse_mode(const std::string& s)
{
  for (const Mode m : { Mode::simulate, Mode::smooth, Mode::train, Mode::evaluate, Mode::benchmark, Mode::covid })
    if (s == mode_name(m))
      return m;
  throw ConfigError("unknown mode '" + s + "'");
}

struct RunConfig
{
  Mode mode = Mode::evaluate;
  std::string output;
  unsigned workers = default_workers();

  int design = 1;
  int d = 10;
  std::size_t n = 200;
  std::optional<double> sigma;
  std::uint64_t seed = 1;
  std::uint64_t init_seed = design2_init_seed;

  std::size_t replications = 20;
  std::vector<std::size_t> sizes{ 100, 200, 500 };
  std::vector<double> settings;

  std::optional<double> bandwidth;
  std::size_t bandwidth_count = 20;
  int moment_order = 0;
  double support_radius = 1.0;
  std::size_t grid = 0;

  FitConfig fit;

  std::size_t metric_grid = 512;
  double trim = 0.0;

  std::string panel_path;
  std::string estimate_path;
  std::string network_path;
  int order = 0;

  std::string covid_path;
  std::string population_path;
  std::vector<std::string> states;

  double noise_sigma() const { return sigma ? *sigma : design == 1 ? 1.0 : 0.5; }

  int design_order() const { return design == 1 ? 1 : 2; }

  std::vector<double> benchmark_settings() const
  {
    if (!settings.empty())
      return settings;
    return design == 1 ? std::vector<double>{ 10.0 } : std::vector<double>{ 0.2, 0.5, 0.8 };
  }

  void validate() const
  {
    if (design != 1 && design != 2)
      throw ConfigError("design.id must be 1 or 2");
    if (design == 1 && d < 5)
      throw InvalidDim("design 1 needs design.d >= 5");
    if (n < 2)
      throw ConfigError("design.n must be at least 2");
    if (sigma && !(*sigma >= 0.0))
      throw ConfigError("design.sigma must be non-negative");
    if (replications < 1)
      throw ConfigError("benchmark.replications must be at least 1");
    if (sizes.empty())
      throw ConfigError("benchmark.n needs at least one sample size");
    for (const auto s : sizes)
      if (s < 2)
        throw ConfigError("benchmark.n entries must be at least 2");
    for (const double s : settings) {
      if (design == 1 && (s < 5 || s != std::floor(s)))
        throw InvalidDim("design 1 benchmark settings are integer dimensions >= 5");
      if (design == 2 && !(s >= 0.0))
        throw ConfigError("design 2 benchmark settings are noise levels >= 0");
    }
    if (bandwidth && !(*bandwidth > 0.0 && *bandwidth * support_radius < 0.5))
      throw BandwidthTooLarge("smoother.bandwidth must satisfy 0 < h * support_radius < 1/2");
    if (bandwidth_count < 1)
      throw EmptyCandidateSet("smoother.candidates must be at least 1");
    if (moment_order != 0 && moment_order < 2)
      throw InvalidOrder("smoother.moment_order must be 0 (automatic) or at least 2");
    if (!(support_radius > 0.0))
      throw InvalidOrder("smoother.support_radius must be positive");
    if (grid != 0 && grid < fit.train.min_grid)
      throw ConfigError("smoother.grid must be 0 (automatic) or at least " + std::to_string(fit.train.min_grid));
    fit.validate();
    if (metric_grid < 2)
      throw ConfigError("eval.metric_grid must be at least 2");
    if (!(trim >= 0.0 && trim < 0.5))
      throw ConfigError("eval.trim must lie in [0, 0.5)");
    if (order < 0)
      throw InvalidOrder("input.order must be non-negative");
    if (mode == Mode::train && !estimate_path.empty() && order < 1)
      throw InvalidOrder("train from input.estimate needs input.order >= 1");
    if (mode == Mode::smooth && !panel_path.empty() && order < 1)
      throw InvalidOrder("smooth from input.panel needs input.order >= 1");
    if (mode == Mode::covid && covid_path.empty())
      throw ConfigError("covid mode needs covid.input");
  }
};

namespace detail {

inline std::vector<std::string>
split_list(const std::string& s)
{
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s + ",") {
    if (c == ',') {
      const auto t = std::string(io::trim(cur));
      if (!t.empty())
        out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

inline double
to_double(const std::string& key, const std::string& v)
{
  double x = 0.0;
  if (!io::parse_double(v, x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

template<class Int>
Int
to_int(const std::string& key, const std::string& v)
{
  Int x{};
  if (!io::parse_int(v, x))
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline bool
to_bool(const std::string& key, const std::string& v)
{
  if (v == "true" || v == "1" || v == "yes" || v == "on")
    return true;
  if (v == "false" || v == "0" || v == "no" || v == "off")
    return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template<class T, class F>
std::vector<T>
to_list(const std::string& v, F&& convert)
{
  std::vector<T> out;
  for (const auto& item : split_list(v))
    out.push_back(convert(item));
  return out;
}

inline std::string
join_list(const auto& values, auto&& fmt)
{
  std::string s;
  for (const auto& v : values)
    s += (s.empty() ? "" : ",") + fmt(v);
  return s;
}

inline std::string
optional_text(const std::optional<double>& x)
{
  return x ? io::format_double(*x) : std::string("auto");
}

} // namespace detail

/// Applies one `section.key = value` setting. Empty or "auto" clears the
/// optional settings.
inline void
apply_setting(RunConfig& c, const std::string& key, const std::string& raw)
{
  using namespace detail;
  const std::string v(io::trim(raw));
  const bool automatic = v.empty() || v == "auto";
  auto optional_number = [&](std::optional<double>& slot) {
    if (automatic)
      slot.reset();
    else
      slot = to_double(key, v);
  };

  if (key == "run.mode")
    c.mode = parse_mode(v);
  else if (key == "run.output")
    c.output = v;
  else if (key == "run.workers")
    c.workers = std::max(1u, to_int<unsigned>(key, v));
  else if (key == "design.id")
    c.design = to_int<int>(key, v);
  else if (key == "design.d")
    c.d = to_int<int>(key, v);
  else if (key == "design.n")
    c.n = to_int<std::size_t>(key, v);
  else if (key == "design.sigma")
    optional_number(c.sigma);
  else if (key == "design.seed")
    c.seed = to_int<std::uint64_t>(key, v);
  else if (key == "design.init_seed")
    c.init_seed = to_int<std::uint64_t>(key, v);
  else if (key == "benchmark.replications")
    c.replications = to_int<std::size_t>(key, v);
  else if (key == "benchmark.n")
    c.sizes = to_list<std::size_t>(v, [&](const std::string& s) { return to_int<std::size_t>(key, s); });
  else if (key == "benchmark.settings")
    c.settings = to_list<double>(v, [&](const std::string& s) { return to_double(key, s); });
  else if (key == "smoother.bandwidth")
    optional_number(c.bandwidth);
  else if (key == "smoother.candidates")
    c.bandwidth_count = to_int<std::size_t>(key, v);
  else if (key == "smoother.moment_order")
    c.moment_order = automatic ? 0 : to_int<int>(key, v);
  else if (key == "smoother.support_radius")
    c.support_radius = to_double(key, v);
  else if (key == "smoother.grid")
    c.grid = automatic ? 0 : to_int<std::size_t>(key, v);
  else if (key == "train.hidden")
    c.fit.train.hidden = to_list<int>(v, [&](const std::string& s) { return to_int<int>(key, s); });
  else if (key == "train.epochs")
    c.fit.train.epochs = to_int<std::size_t>(key, v);
  else if (key == "train.learning_rate")
    c.fit.train.learning_rate = to_double(key, v);
  else if (key == "train.cosine_decay")
    c.fit.train.cosine_decay = to_bool(key, v);
  else if (key == "train.prune_at")
    c.fit.train.prune_at = to_double(key, v);
  else if (key == "train.class") {
    if (v == "F1")
      c.fit.net_class = NetClass::F1;
    else if (v == "F2")
      c.fit.net_class = NetClass::F2;
    else
      throw ConfigError(key + ": expected F1 or F2, got '" + v + "'");
  } else if (key == "train.sparsity_budget") {
    if (automatic)
      c.fit.sparsity_budget.reset();
    else
      c.fit.sparsity_budget = to_int<std::size_t>(key, v);
  } else if (key == "train.sparsity_fraction")
    c.fit.sparsity_fraction = to_double(key, v);
  else if (key == "train.sup_bound")
    optional_number(c.fit.sup_bound);
  else if (key == "train.sup_bound_factor")
    c.fit.sup_bound_factor = to_double(key, v);
  else if (key == "eval.metric_grid")
    c.metric_grid = to_int<std::size_t>(key, v);
  else if (key == "eval.trim")
    c.trim = to_double(key, v);
  else if (key == "input.panel")
    c.panel_path = v;
  else if (key == "input.estimate")
    c.estimate_path = v;
  else if (key == "input.network")
    c.network_path = v;
  else if (key == "input.order")
    c.order = automatic ? 0 : to_int<int>(key, v);
  else if (key == "covid.input")
    c.covid_path = v;
  else if (key == "covid.population")
    c.population_path = v;
  else if (key == "covid.states")
    c.states = split_list(v);
  else
    throw ConfigError("unknown setting '" + key + "'");
}

inline void
apply_settings(RunConfig& c, const io::ConfigMap& map)
{
  for (const auto& [k, v] : map)
    apply_setting(c, k, v);
}

/// Config file text with every setting. With `comments`, each key carries its
/// meaning and default. Output location and worker count are left out, since
/// neither changes the artifacts.
inline std::string
config_text(const RunConfig& c, bool comments = true)
{
  using namespace detail;
  std::ostringstream o;
  auto fmt_size = [](std::size_t x) { return std::to_string(x); };
  auto fmt_int = [](int x) { return std::to_string(x); };
  auto fmt_num = [](double x) { return io::format_double(x); };
  auto entry = [&](const char* key, const std::string& value, const char* doc) {
    if (comments)
      o << "# " << doc << '\n';
    o << key << " = " << value << '\n';
  };
  auto section = [&](const char* name) { o << (o.tellp() > 0 ? "\n" : "") << '[' << name << "]\n"; };

  section("run");
  entry("mode", mode_name(c.mode), "simulate | smooth | train | evaluate | benchmark | covid (default evaluate)");
  section("design");
  entry("id", fmt_int(c.design), "1: sparse linear first-order system, 2: nonlinear second-order system (default 1)");
  entry("d", fmt_int(c.d), "dimension of design 1 (default 10)");
  entry("n", fmt_size(c.n), "observations per component, t_i = i/n (default 200)");
  entry("sigma", optional_text(c.sigma), "noise standard deviation; auto = 1 for design 1, 0.5 for design 2");
  entry("seed", std::to_string(c.seed), "replication seed: system draw, noise and network init (default 1)");
  entry("init_seed", std::to_string(c.init_seed), "seed of the design 2 initial conditions (default 7)");
  section("benchmark");
  entry("replications", fmt_size(c.replications), "replications per cell, seeds seed..seed+R-1 (default 20)");
  entry("n", join_list(c.sizes, fmt_size), "sample sizes (default 100,200,500)");
  entry("settings", join_list(c.settings, fmt_num),
        "d values for design 1 or sigma values for design 2; empty = 10 or 0.2,0.5,0.8");
  section("smoother");
  entry("bandwidth", optional_text(c.bandwidth), "fixed bandwidth h; auto = leave-one-out CV per component");
  entry("candidates", fmt_size(c.bandwidth_count), "number of log-spaced CV candidates in [1.5/n, 0.45/tau] (default 20)");
  entry("moment_order", c.moment_order ? fmt_int(c.moment_order) : std::string("auto"),
        "kernel order k; auto = order + 2");
  entry("support_radius", fmt_num(c.support_radius), "kernel support radius tau (default 1)");
  entry("grid", c.grid ? fmt_size(c.grid) : std::string("auto"),
        "quadrature grid size T; auto = max(200, largest n)");
  section("train");
  entry("hidden", join_list(c.fit.train.hidden, fmt_int), "hidden layer widths (default 64,64,64)");
  entry("epochs", fmt_size(c.fit.train.epochs), "optimizer epochs (default 2000)");
  entry("learning_rate", fmt_num(c.fit.train.learning_rate), "Adam base learning rate (default 0.01)");
  entry("cosine_decay", c.fit.train.cosine_decay ? "true" : "false", "cosine learning-rate decay (default true)");
  entry("prune_at", fmt_num(c.fit.train.prune_at), "fraction of epochs before magnitude pruning (default 0.6)");
  entry("class", c.fit.net_class == NetClass::F2 ? "F2" : "F1", "network class F1 or F2 (default F2)");
  entry("sparsity_budget", c.fit.sparsity_budget ? fmt_size(*c.fit.sparsity_budget) : std::string("auto"),
        "F2 non-zero parameter budget; auto = sparsity_fraction of all parameters");
  entry("sparsity_fraction", fmt_num(c.fit.sparsity_fraction), "default F2 budget fraction (default 0.5)");
  entry("sup_bound", optional_text(c.fit.sup_bound), "F2 output bound; auto = sup_bound_factor * max |target|");
  entry("sup_bound_factor", fmt_num(c.fit.sup_bound_factor), "default F2 bound multiplier (default 2)");
  section("eval");
  entry("metric_grid", fmt_size(c.metric_grid), "uniform metric grid size (default 512)");
  entry("trim", fmt_num(c.trim), "drop [0, trim) and (1 - trim, 1] from the metrics (default 0)");
  section("input");
  entry("panel", c.panel_path, "panel CSV (component,time,value) for smooth; empty = simulate the design");
  entry("estimate", c.estimate_path, "estimate CSV (component,time,deriv_order,value) for train");
  entry("network", c.network_path, "checkpoint JSON for evaluate; empty = train a new network");
  entry("order", c.order ? fmt_int(c.order) : std::string("auto"), "ODE order of external inputs; auto = design order");
  section("covid");
  entry("input", c.covid_path, "CSV with columns date,state,fips,cases,deaths (daily cases)");
  entry("population", c.population_path, "optional CSV state,population for per-100000 curves");
  entry("states", join_list(c.states, [](const std::string& s) { return s; }), "states to keep; empty = all 50");
  return o.str();
}

//! 64-bit FNV-1a of the canonical config text, as 16 hex digits.
inline std::string
config_hash(const RunConfig& c)
{
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char ch : config_text(c, false)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

inline RunConfig
load_run_config(const std::string& path)
{
  RunConfig c;
  apply_settings(c, io::load_config(path));
  return c;
}

// ---------------------------------------------------------------------------
// Single replication

struct Replication
{
  SimulatedData data;
  TrajectoryEstimate estimate;
  FitResult fit;
  io::ReportRow row;
};

inline SimulatedData
simulate_design(int design, int d, std::size_t n, double sigma, std::uint64_t seed, std::uint64_t init_seed)
{
  if (design == 1)
    return make_design1(d, n, seed, sigma);
  return make_design2(n, sigma, seed, default_design2_init(init_seed));
}

inline SmootherConfig
smoother_config(const RunConfig& c, int order, std::size_t longest)
{
  SmootherConfig s;
  s.bandwidth = c.bandwidth;
  s.max_deriv = order;
  s.moment_order = c.moment_order ? c.moment_order : order + 2;
  s.support_radius = c.support_radius;
  s.grid = quad::uniform_grid(c.grid ? c.grid : std::max<std::size_t>(200, longest));
  return s;
}

inline std::size_t
longest_series(const TimeSeriesPanel& panel)
{
  std::size_t m = 0;
  for (const auto& s : panel)
    m = std::max(m, s.size());
  return m;
}

inline TrajectoryEstimate
smooth_with_config(const TimeSeriesPanel& panel, const RunConfig& c, int order, unsigned workers)
{
  auto sc = smoother_config(c, order, longest_series(panel));
  if (!sc.bandwidth) {
    validate(panel);
    const KernelFamily family(sc.max_deriv, sc.moment_order, sc.support_radius);
    sc.bandwidths.resize(panel.size());
    parallel_for(
      panel.size(),
      [&](std::size_t j) {
        const auto cands = default_bandwidths(panel[j].size(), sc.support_radius, c.bandwidth_count);
        sc.bandwidths[j] = select_bandwidth(panel[j], family, cands);
      },
      workers);
  }
  return smooth_panel(panel, sc, workers);
}

//! Class audit: largest F1 layer norm and largest |output| over the inputs.
inline void
audit(io::ReportRow& row, const ReluNetwork& net, const ClassSpec& spec, const std::vector<Eigen::MatrixXd>& inputs)
{
  row.nonzeros = net.nonzeros();
  row.budget = spec.id == NetClass::F2 ? spec.sparsity_budget : static_cast<std::size_t>(net.parameter_count());
  row.sup_bound = spec.sup_bound;
  row.max_layer_norm = 0.0;
  for (int l = 0; l <= net.depth(); ++l)
    row.max_layer_norm = std::max(row.max_layer_norm, net.layer_norm(l));
  row.max_output = 0.0;
  for (const auto& z : inputs)
    if (z.size())
      row.max_output = std::max(row.max_output, forward(net, z).cwiseAbs().maxCoeff());
}

/// Simulate, smooth, fit and score one replication. A supplied network skips
/// training.
inline Replication
run_replication(const RunConfig& c,
                double setting,
                std::size_t n,
                std::uint64_t seed,
                const std::optional<io::Checkpoint>& network = std::nullopt,
                unsigned workers = 1)
{
  Replication r;
  const int d = c.design == 1 ? static_cast<int>(setting) : 8;
  const double sigma = c.design == 1 ? c.noise_sigma() : setting;
  r.data = simulate_design(c.design, d, n, sigma, seed, c.init_seed);
  const int order = r.data.problem.order;
  r.estimate = smooth_with_config(r.data.panel, c, order, workers);
  const auto reg = RegressionData::from_estimate(r.estimate, order);
  if (network) {
    if (network->net.input_dim() != order * d || network->net.output_dim() != d)
      throw ShapeMismatch("checkpoint network does not match the design dimensions");
    r.fit.spec = network->spec;
    r.fit.train.net = network->net;
    r.fit.train.loss = loss(network->net, reg);
  } else {
    FitConfig fc = c.fit;
    fc.train.seed = seed;
    r.fit = fit_rhs(reg, fc);
  }

  SmootherConfig mc = smoother_config(c, order, n);
  mc.grid = quad::uniform_grid(c.metric_grid);
  mc.bandwidths = r.estimate.bandwidths;
  const auto on_metric = smooth_panel(r.data.panel, mc, workers);
  const auto truth = r.data.truth.sample(mc.grid);

  r.row.design = c.design == 1 ? "design1" : "design2";
  r.row.n = n;
  r.row.setting = setting;
  r.row.seed = seed;
  r.row.metrics = metrics(r.fit.train.net, r.data.problem, truth, on_metric, c.trim);
  r.row.loss = r.fit.train.loss;
  audit(r.row, r.fit.train.net, r.fit.spec,
        { reg.inputs, truth.stacked(order), on_metric.stacked(order) });
  return r;
}

// ---------------------------------------------------------------------------
// Artifacts

class Manifest
{
public:
  explicit Manifest(const RunConfig& c)
  {
    j_["tool"] = "odecal";
    j_["version"] = version;
    j_["compiler"] = compiler();
    j_["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                  std::to_string(EIGEN_MINOR_VERSION);
    j_["mode"] = mode_name(c.mode);
    j_["config_hash"] = config_hash(c);
    nlohmann::json cfg = nlohmann::json::object();
    std::istringstream text(config_text(c, false));
    for (const auto& [k, v] : io::parse_config(text))
      cfg[k] = v;
    j_["config"] = std::move(cfg);
    j_["artifacts"] = nlohmann::json::array();
  }

  nlohmann::json& operator[](const std::string& key) { return j_[key]; }

  void artifact(const std::string& name) { j_["artifacts"].push_back(name); }

  std::string dump() const { return j_.dump(2) + "\n"; }

private:
  static std::string compiler()
  {
#if defined(__clang__)
    return "clang " __clang_version__;
#elif defined(__GNUC__)
    return "gcc " __VERSION__;
#else
    return "unknown";
#endif
  }

  nlohmann::json j_;
};

struct RunSummary
{
  std::vector<std::string> artifacts;
  std::vector<io::ReportRow> rows;
  bool audit_ok = true;
};

class ArtifactWriter
{
public:
  ArtifactWriter(const RunConfig& c, Manifest& manifest, RunSummary& summary)
    : dir_(c.output.empty() ? std::string(".") : c.output)
    , manifest_(manifest)
    , summary_(summary)
  {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec)
      throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  template<class Fn>
  void write(const std::string& name, Fn&& fn)
  {
    auto out = io::open_output((dir_ / name).string());
    fn(out);
    if (!out)
      throw ConfigError("failed writing '" + (dir_ / name).string() + "'");
    manifest_.artifact(name);
    summary_.artifacts.push_back((dir_ / name).string());
  }

  void finish()
  {
    const auto text = manifest_.dump();
    write("manifest.json", [&](std::ostream& o) { o << text; });
  }

private:
  std::filesystem::path dir_;
  Manifest& manifest_;
  RunSummary& summary_;
};

inline void
write_training_history(std::ostream& o, const std::vector<double>& history)
{
  o << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    o << e << ',' << io::format_double(history[e]) << '\n';
}

// ---------------------------------------------------------------------------
// Benchmark tables

struct CellSummary
{
  std::size_t n = 0;
  double setting = 0.0;
  std::size_t count = 0;
  std::array<double, 4> median{};
  std::array<double, 4> mean{};
  bool audit_ok = true;
};

inline std::vector<CellSummary>
summarize(const std::vector<io::ReportRow>& rows)
{
  std::vector<CellSummary> cells;
  for (const auto& r : rows) {
    auto it = std::find_if(cells.begin(), cells.end(),
                           [&](const CellSummary& c) { return c.n == r.n && c.setting == r.setting; });
    if (it == cells.end()) {
      cells.push_back({ r.n, r.setting });
      it = cells.end() - 1;
    }
    ++it->count;
  }
  for (auto& c : cells) {
    std::array<std::vector<double>, 4> v;
    for (const auto& r : rows)
      if (r.n == c.n && r.setting == c.setting) {
        v[0].push_back(r.metrics.m1);
        v[1].push_back(r.metrics.m2);
        v[2].push_back(r.metrics.m3);
        v[3].push_back(r.metrics.m4);
        c.audit_ok = c.audit_ok && r.constraints_ok();
      }
    for (std::size_t m = 0; m < 4; ++m) {
      c.median[m] = median(v[m]);
      c.mean[m] = mean(v[m]);
    }
  }
  return cells;
}

inline void
write_summary(std::ostream& o, const std::string& design, const std::vector<CellSummary>& cells)
{
  o << "design,n,d_or_sigma,statistic,M1,M2,M3,M4,replications,constraints_ok\n";
  for (const auto& c : cells)
    for (const bool med : { false, true }) {
      const auto& v = med ? c.median : c.mean;
      o << design << ',' << c.n << ',' << io::format_double(c.setting) << ',' << (med ? "median" : "mean");
      for (const double x : v)
        o << ',' << io::format_double(x);
      o << ',' << c.count << ',' << (c.audit_ok ? 1 : 0) << '\n';
    }
}

//! Tables in the layout rows = n, columns = d or sigma, one block per metric.
inline void
print_tables(std::ostream& o, const RunConfig& c, const std::vector<CellSummary>& cells)
{
  const auto settings = c.benchmark_settings();
  const char* label = c.design == 1 ? "d" : "sigma";
  for (std::size_t m = 0; m < 4; ++m) {
    o << "M" << m + 1 << " (median / mean over replications)\n";
    o << std::setw(8) << "n";
    for (const double s : settings)
      o << std::setw(24) << (std::string(label) + " = " + io::format_double(s));
    o << '\n';
    for (const auto n : c.sizes) {
      o << std::setw(8) << n;
      for (const double s : settings) {
        const auto it = std::find_if(cells.begin(), cells.end(),
                                     [&](const CellSummary& x) { return x.n == n && x.setting == s; });
        std::ostringstream cell;
        cell << std::setprecision(4) << it->median[m] << " / " << it->mean[m];
        o << std::setw(24) << cell.str();
      }
      o << '\n';
    }
    o << '\n';
  }
}

// ---------------------------------------------------------------------------
// Modes

inline RunSummary
run_pipeline(const RunConfig& c, std::ostream& log)
{
  c.validate();
  RunSummary summary;
  Manifest manifest(c);
  ArtifactWriter writer(c, manifest, summary);
  const unsigned workers = std::max(1u, c.workers);
  const int d = c.design == 1 ? c.d : 8;

  auto simulate = [&] {
    return simulate_design(c.design, d, c.n, c.noise_sigma(), c.seed, c.init_seed);
  };
  auto seeds = [&](nlohmann::json extra = nlohmann::json::object()) {
    extra["replication"] = c.seed;
    if (c.design == 2)
      extra["design2_init"] = c.init_seed;
    manifest["seeds"] = std::move(extra);
  };

  switch (c.mode) {
    case Mode::simulate: {
      const auto data = simulate();
      writer.write("panel.csv", [&](std::ostream& o) { io::write_panel(o, data.panel); });
      const auto truth = data.truth.sample(data.panel.front().times);
      writer.write("truth.csv", [&](std::ostream& o) { io::write_trajectory(o, truth); });
      seeds();
      break;
    }
    case Mode::smooth: {
      TimeSeriesPanel panel;
      int order = c.order;
      if (!c.panel_path.empty()) {
        auto in = io::open_input(c.panel_path);
        panel = io::read_panel(in, c.panel_path);
      } else {
        auto data = simulate();
        panel = std::move(data.panel);
        order = order ? order : data.problem.order;
        seeds();
      }
      const auto est = smooth_with_config(panel, c, order, workers);
      writer.write("estimate.csv", [&](std::ostream& o) { io::write_trajectory(o, est); });
      manifest["bandwidths"] = est.bandwidths;
      break;
    }
    case Mode::train: {
      TrajectoryEstimate est;
      int order = c.order;
      if (!c.estimate_path.empty()) {
        auto in = io::open_input(c.estimate_path);
        est = io::read_trajectory(in, c.estimate_path);
      } else {
        const auto data = simulate();
        order = order ? order : data.problem.order;
        est = smooth_with_config(data.panel, c, order, workers);
        manifest["bandwidths"] = est.bandwidths;
      }
      const auto reg = RegressionData::from_estimate(est, order);
      FitConfig fc = c.fit;
      fc.train.seed = c.seed;
      const auto fit = fit_rhs(reg, fc);
      io::ReportRow row;
      audit(row, fit.train.net, fit.spec, { reg.inputs });
      summary.audit_ok = fit.spec.id == NetClass::F1 ? row.max_layer_norm <= 1.0 : row.constraints_ok();
      writer.write("network.json", [&](std::ostream& o) {
        o << io::to_json(fit.train.net, fit.spec, c.seed).dump(2) << '\n';
      });
      writer.write("training.csv", [&](std::ostream& o) { write_training_history(o, fit.train.history); });
      manifest["loss"] = fit.train.loss;
      manifest["best_epoch"] = fit.train.best_epoch;
      seeds({ { "network_init", c.seed } });
      break;
    }
    case Mode::evaluate: {
      std::optional<io::Checkpoint> net;
      if (!c.network_path.empty())
        net = io::load_checkpoint(c.network_path);
      auto r = run_replication(c, c.design == 1 ? static_cast<double>(c.d) : c.noise_sigma(), c.n, c.seed, net, workers);
      writer.write("estimate.csv", [&](std::ostream& o) { io::write_trajectory(o, r.estimate); });
      writer.write("network.json", [&](std::ostream& o) {
        o << io::to_json(r.fit.train.net, r.fit.spec, net ? net->seed : c.seed).dump(2) << '\n';
      });
      writer.write("metrics.csv", [&](std::ostream& o) { io::write_reports(o, { r.row }); });
      if (!net)
        writer.write("training.csv", [&](std::ostream& o) { write_training_history(o, r.fit.train.history); });
      manifest["bandwidths"] = r.estimate.bandwidths;
      manifest["loss"] = r.fit.train.loss;
      summary.audit_ok = r.row.constraints_ok();
      summary.rows.push_back(r.row);
      seeds({ { "network_init", c.seed } });
      break;
    }
    case Mode::benchmark: {
      struct Job
      {
        std::size_t n;
        double setting;
        std::uint64_t seed;
      };
      std::vector<Job> jobs;
      for (const double s : c.benchmark_settings())
        for (const auto n : c.sizes)
          for (std::size_t r = 0; r < c.replications; ++r)
            jobs.push_back({ n, s, c.seed + r });
      std::vector<io::ReportRow> rows(jobs.size());
      std::mutex log_mutex;
      std::size_t done = 0;
      parallel_for(
        jobs.size(),
        [&](std::size_t i) {
          rows[i] = run_replication(c, jobs[i].setting, jobs[i].n, jobs[i].seed).row;
          std::lock_guard lock(log_mutex);
          ++done;
          log << "[" << done << "/" << jobs.size() << "] n=" << jobs[i].n << " setting=" << jobs[i].setting
              << " seed=" << jobs[i].seed << " M1=" << rows[i].metrics.m1
              << (rows[i].constraints_ok() ? "" : " CONSTRAINT VIOLATION") << '\n';
        },
        workers);
      std::sort(rows.begin(), rows.end(), [](const io::ReportRow& a, const io::ReportRow& b) {
        return std::tie(a.setting, a.n, a.seed) < std::tie(b.setting, b.n, b.seed);
      });
      const auto cells = summarize(rows);
      const auto design = c.design == 1 ? "design1" : "design2";
      writer.write("metrics.csv", [&](std::ostream& o) { io::write_reports(o, rows); });
      writer.write("summary.csv", [&](std::ostream& o) { write_summary(o, design, cells); });
      print_tables(log, c, cells);
      for (const auto& r : rows)
        summary.audit_ok = summary.audit_ok && r.constraints_ok();
      summary.rows = std::move(rows);
      seeds({ { "replications", nlohmann::json::array() } });
      for (std::size_t r = 0; r < c.replications; ++r)
        manifest["seeds"]["replications"].push_back(c.seed + r);
      break;
    }
    case Mode::covid: {
      CovidIngestOptions opts;
      opts.states = c.states;
      const auto panel = ingest_covid(c.covid_path, opts);
      for (const auto& w : panel.warnings)
        log << "warning: " << w << '\n';
      CovidConfig cc;
      cc.smoother = smoother_config(c, 2, 0);
      cc.fit = c.fit;
      cc.fit.train.seed = c.seed;
      if (!c.population_path.empty()) {
        auto in = io::open_input(c.population_path);
        cc.populations = read_populations(in, c.population_path);
      }
      const auto result = covid_growth(panel, cc, workers);
      writer.write("curves.csv", [&](std::ostream& o) { write_covid_curves(o, result); });
      writer.write("estimate.csv", [&](std::ostream& o) { io::write_trajectory(o, result.estimate); });
      writer.write("network.json", [&](std::ostream& o) {
        o << io::to_json(result.fit.train.net, result.fit.spec, c.seed).dump(2) << '\n';
      });
      manifest["states"] = panel.states;
      manifest["bandwidths"] = result.estimate.bandwidths;
      manifest["first_date"] = format_iso_date(panel.first_day);
      manifest["last_date"] = format_iso_date(panel.last_day);
      manifest["clipped_rows"] = panel.warnings.size();
      manifest["per_capita"] = result.per_capita;
      manifest["loss"] = result.fit.train.loss;
      seeds({ { "network_init", c.seed } });
      break;
    }
  }
  manifest["audit_ok"] = summary.audit_ok;
  writer.finish();
  if (!summary.audit_ok)
    throw ConstraintViolation("trained network violates its class constraints; see metrics.csv");
  return summary;
}

} // namespace odecal
