#include "odecal/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace odecal;
namespace fs = std::filesystem;

namespace {

fs::path
scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("odecal_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string
slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig
small(Mode mode, const fs::path& out)
{
  RunConfig c;
  c.mode = mode;
  c.output = out.string();
  c.workers = 2;
  c.n = 60;
  c.fit.train.hidden = { 16, 16 };
  c.fit.train.epochs = 60;
  c.metric_grid = 64;
  return c;
}

int
run_cli(const std::string& args)
{
  const std::string cmd = std::string(ODECAL_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, ModesParseAndPrint)
{
  for (auto m : { Mode::simulate, Mode::smooth, Mode::train, Mode::evaluate, Mode::benchmark, Mode::covid })
    EXPECT_EQ(parse_mode(mode_name(m)), m);
  EXPECT_THROW(parse_mode("fly"), ConfigError);
}

TEST(Config, SettingsApplyAndValidate)
{
  RunConfig c;
  apply_setting(c, "design.n", "500");
  apply_setting(c, "design.sigma", "0.25");
  apply_setting(c, "train.hidden", "8, 4");
  apply_setting(c, "benchmark.n", "100,200");
  apply_setting(c, "train.class", "F1");
  EXPECT_EQ(c.n, 500u);
  EXPECT_EQ(c.noise_sigma(), 0.25);
  EXPECT_EQ(c.fit.train.hidden, (std::vector<int>{ 8, 4 }));
  EXPECT_EQ(c.sizes, (std::vector<std::size_t>{ 100, 200 }));
  EXPECT_EQ(c.fit.net_class, NetClass::F1);
  EXPECT_THROW(apply_setting(c, "design.colour", "red"), ConfigError);
  EXPECT_THROW(apply_setting(c, "design.n", "many"), ConfigError);

  RunConfig bad;
  bad.design = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.d = 4;
  EXPECT_THROW(bad.validate(), InvalidDim);
  bad = RunConfig{};
  bad.bandwidth = 0.6;
  EXPECT_THROW(bad.validate(), BandwidthTooLarge);
  bad = RunConfig{};
  bad.mode = Mode::covid;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, TextRoundTripsThroughParser)
{
  RunConfig c;
  c.design = 2;
  c.n = 321;
  c.sigma = 0.8;
  c.fit.train.hidden = { 10, 20 };
  c.bandwidth = 0.1;
  c.states = { "Ohio", "Iowa" };
  std::istringstream text(config_text(c));
  RunConfig back;
  apply_settings(back, io::parse_config(text));
  EXPECT_EQ(config_text(back), config_text(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  back.seed = 2;
  EXPECT_NE(config_hash(back), config_hash(c));
  // output location and worker count do not change the hash
  back = c;
  back.output = "elsewhere";
  back.workers = 7;
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Pipeline, NoiselessSimulationMatchesTruth)
{
  const auto dir = scratch("simulate");
  auto c = small(Mode::simulate, dir);
  c.design = 2;
  c.sigma = 0.0;
  std::ostringstream log;
  run_pipeline(c, log);
  std::ifstream p(dir / "panel.csv"), t(dir / "truth.csv");
  const auto panel = io::read_panel(p);
  const auto truth = io::read_trajectory(t);
  ASSERT_EQ(panel.size(), 8u);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(panel[j].times, truth.grid);
    for (std::size_t i = 0; i < panel[j].size(); ++i)
      EXPECT_EQ(panel[j].values[i], truth.derivs[0](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
  }
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Pipeline, IdenticalConfigsGiveIdenticalBytes)
{
  const auto a = scratch("det_a"), b = scratch("det_b");
  std::ostringstream log;
  run_pipeline(small(Mode::evaluate, a), log);
  run_pipeline(small(Mode::evaluate, b), log);
  for (const char* name : { "estimate.csv", "network.json", "metrics.csv", "training.csv", "manifest.json" }) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest["config_hash"], config_hash(small(Mode::evaluate, a)));
  EXPECT_EQ(manifest["audit_ok"], true);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, SmoothTrainEvaluateChain)
{
  const auto dir = scratch("chain");
  std::ostringstream log;
  auto sim = small(Mode::simulate, dir / "sim");
  run_pipeline(sim, log);

  auto sm = small(Mode::smooth, dir / "smooth");
  sm.panel_path = (dir / "sim" / "panel.csv").string();
  sm.order = 1;
  run_pipeline(sm, log);

  auto tr = small(Mode::train, dir / "train");
  tr.estimate_path = (dir / "smooth" / "estimate.csv").string();
  tr.order = 1;
  const auto trained = run_pipeline(tr, log);
  EXPECT_TRUE(trained.audit_ok);
  const auto ckpt = io::load_checkpoint((dir / "train" / "network.json").string());
  EXPECT_EQ(ckpt.net.input_dim(), 10);

  auto ev = small(Mode::evaluate, dir / "eval");
  ev.network_path = (dir / "train" / "network.json").string();
  const auto evaluated = run_pipeline(ev, log);
  ASSERT_EQ(evaluated.rows.size(), 1u);
  EXPECT_EQ(evaluated.rows[0].nonzeros, ckpt.net.nonzeros());
  EXPECT_FALSE(fs::exists(dir / "eval" / "training.csv"));
  fs::remove_all(dir);
}

TEST(Pipeline, ReducedBenchmarkHasTableShape)
{
  const auto dir = scratch("bench");
  auto c = small(Mode::benchmark, dir);
  c.replications = 2;
  c.sizes = { 40, 60 };
  std::ostringstream log;
  const auto s = run_pipeline(c, log);
  EXPECT_TRUE(s.audit_ok);
  ASSERT_EQ(s.rows.size(), 4u);
  std::ifstream m(dir / "metrics.csv");
  const auto rows = io::read_reports(m);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].n, 40u);
  EXPECT_EQ(rows[0].seed, 1u);
  EXPECT_EQ(rows[1].seed, 2u);
  EXPECT_EQ(rows[3].n, 60u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.design, "design1");
    EXPECT_EQ(r.setting, 10.0);
  }
  const auto summary = slurp(dir / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 1 + 2 * 2);
  EXPECT_NE(log.str().find("M1"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Pipeline, CovidModeWritesCurves)
{
  const auto dir = scratch("covid");
  auto c = small(Mode::covid, dir);
  c.covid_path = std::string(ODECAL_TEST_DATA) + "/covid_5state_200d.csv";
  c.population_path = std::string(ODECAL_TEST_DATA) + "/population_5state.csv";
  c.states = { "California", "Oregon", "Washington", "Nevada", "Arizona" };
  std::ostringstream log;
  run_pipeline(c, log);
  const auto curves = slurp(dir / "curves.csv");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 5 * 200);
  EXPECT_NE(log.str().find("warning: Oregon"), std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["per_capita"], true);
  EXPECT_EQ(manifest["clipped_rows"], 3);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes)
{
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("simulate --n 30 -o " + (dir / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "panel.csv"));
  EXPECT_EQ(run_cli("simulate --design 3 -o " + (dir / "bad").string()), 1);
  EXPECT_EQ(run_cli("simulate --set design.bogus=1"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("covid --input /nonexistent.csv -o " + (dir / "c").string()), 1);
  EXPECT_EQ(run_cli("simulate --print-config"), 0);
  fs::remove_all(dir);
}

TEST(Cli, OutputRootFromEnvironment)
{
  const auto dir = scratch("cli_env");
  const std::string cmd =
    "ODECAL_OUTPUT_ROOT=" + dir.string() + " " + ODECAL_CLI + " simulate --n 20 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  bool found = false;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    found = found || e.path().filename() == "panel.csv";
  EXPECT_TRUE(found);
  fs::remove_all(dir);
}
