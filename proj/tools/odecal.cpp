#include "odecal/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace {

struct Flag
{
  const char* name;
  const char* key;
  const char* help;
};

// Command-line flags and the config keys they set.
const std::vector<Flag> flags{
  { "--design", "design.id", "design 1 (linear, first order) or 2 (nonlinear, second order)" },
  { "--d", "design.d", "dimension of design 1" },
  { "--n", "design.n", "observations per component" },
  { "--sigma", "design.sigma", "noise standard deviation" },
  { "--seed", "design.seed", "replication seed" },
  { "--init-seed", "design.init_seed", "seed of the design 2 initial conditions" },
  { "--replications", "benchmark.replications", "benchmark replications per cell" },
  { "--sizes", "benchmark.n", "benchmark sample sizes, comma separated" },
  { "--settings", "benchmark.settings", "benchmark d (design 1) or sigma (design 2) values" },
  { "--bandwidth", "smoother.bandwidth", "fixed bandwidth (default: cross-validated)" },
  { "--candidates", "smoother.candidates", "number of CV bandwidth candidates" },
  { "--moment-order", "smoother.moment_order", "kernel order k" },
  { "--support-radius", "smoother.support_radius", "kernel support radius" },
  { "--grid", "smoother.grid", "quadrature grid size" },
  { "--hidden", "train.hidden", "hidden widths, comma separated" },
  { "--epochs", "train.epochs", "training epochs" },
  { "--learning-rate", "train.learning_rate", "Adam learning rate" },
  { "--cosine-decay", "train.cosine_decay", "cosine learning-rate decay (true/false)" },
  { "--prune-at", "train.prune_at", "fraction of epochs before pruning" },
  { "--class", "train.class", "network class F1 or F2" },
  { "--sparsity-budget", "train.sparsity_budget", "F2 non-zero budget" },
  { "--sparsity-fraction", "train.sparsity_fraction", "F2 budget as a fraction of all parameters" },
  { "--sup-bound", "train.sup_bound", "F2 output bound" },
  { "--sup-bound-factor", "train.sup_bound_factor", "F2 bound as a multiple of max |target|" },
  { "--metric-grid", "eval.metric_grid", "metric grid size" },
  { "--trim", "eval.trim", "boundary trim of the metric integrals" },
  { "--panel", "input.panel", "input panel CSV" },
  { "--estimate", "input.estimate", "input estimate CSV" },
  { "--network", "input.network", "input network checkpoint" },
  { "--order", "input.order", "ODE order of external inputs" },
  { "--input", "covid.input", "covid CSV (date,state,fips,cases,deaths)" },
  { "--population", "covid.population", "population CSV (state,population)" },
  { "--states", "covid.states", "states to keep, comma separated" },
};

std::string
resolve_output(const std::string& given, odecal::Mode mode)
{
  const char* root = std::getenv("ODECAL_OUTPUT_ROOT");
  std::filesystem::path base = root && *root ? std::filesystem::path(root) : std::filesystem::path("odecal-output");
  if (given.empty())
    return (base / odecal::mode_name(mode)).string();
  const std::filesystem::path p(given);
  if (p.is_absolute() || !(root && *root))
    return p.string();
  return (base / p).string();
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Two-stage ODE calibration: kernel smoothing and sparse ReLU regression" };
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
  unsigned workers = 0;
  bool print_config = false;
  std::map<std::string, std::string> values;

  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config key, e.g. --set train.epochs=500");
  app.add_option("-o,--output", output, "output directory (relative to $ODECAL_OUTPUT_ROOT when set)");
  app.add_option("--workers", workers, "worker threads (default: hardware concurrency)");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  for (const auto& f : flags)
    app.add_option(f.name, values[f.key], f.help);

  odecal::Mode mode = odecal::Mode::evaluate;
  const std::vector<std::pair<odecal::Mode, const char*>> commands{
    { odecal::Mode::simulate, "simulate a design and write panel.csv and truth.csv" },
    { odecal::Mode::smooth, "stage 1: estimate trajectories and derivatives" },
    { odecal::Mode::train, "stage 2: fit the right-hand side network" },
    { odecal::Mode::evaluate, "simulate, smooth, train and score one replication" },
    { odecal::Mode::benchmark, "Monte Carlo tables of M1..M4" },
    { odecal::Mode::covid, "growth-rate curves from daily case counts" },
  };
  for (const auto& [m, help] : commands) {
    auto* sub = app.add_subcommand(odecal::mode_name(m), help);
    sub->fallthrough();
    sub->callback([&mode, m = m] { mode = m; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    odecal::RunConfig cfg;
    if (!config_path.empty())
      odecal::apply_settings(cfg, odecal::io::load_config(config_path));
    for (const auto& [key, value] : values)
      if (!value.empty())
        odecal::apply_setting(cfg, key, value);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw odecal::ConfigError("--set expects key=value, got '" + kv + "'");
      odecal::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.mode = mode;
    if (workers > 0)
      cfg.workers = workers;
    cfg.output = resolve_output(output.empty() ? cfg.output : output, mode);
    if (print_config) {
      std::cout << odecal::config_text(cfg);
      return 0;
    }
    const auto summary = odecal::run_pipeline(cfg, std::cerr);
    for (const auto& a : summary.artifacts)
      std::cout << a << '\n';
    return 0;
  } catch (const odecal::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == odecal::ErrorKind::user ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
