// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "odecal/covid.hpp"
#include "odecal/eval.hpp"
#include "odecal/kernels.hpp"
#include "odecal/pipeline.hpp"

#include "common/gradcheck.hpp"
#include "common/teacher.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <iostream>
#include <sstream>
#include <string>

using namespace odecal;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

struct Criterion
{
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

double
median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string
fmt(double x, int precision = 4)
{
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

Outcome
kernel_moments()
{
  double worst = 0.0;
  for (int kappa = 0; kappa <= 2; ++kappa)
    for (int k = kappa + 2; k <= kappa + 3; ++k)
      for (double q : { 0.3, 0.6, 1.0 }) {
        const auto K = build_kernel(kappa, k, q);
        for (int j = 0; j < k; ++j) {
          const double target = j == kappa ? (kappa % 2 ? -1.0 : 1.0) * detail::factorial(kappa) : 0.0;
          worst = std::max(worst, std::abs(kernel_moment(K, j) - target));
        }
      }
  return { worst <= 1e-8, "max moment error " + fmt(worst) };
}

double
fitted_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Mean integrated squared error of x5'' over [0, 1] with h = 0.15 (n/100)^(-1/9).
// The interior-only slope over [h, 1 - h] is reported alongside.
Outcome
stage1_rate()
{
  const std::vector<std::size_t> sizes{ 100, 200, 400, 800, 1600 };
  const int reps = 20;
  const int component = 4;
  const double sigma = 0.5;
  const auto grid = quad::uniform_grid(513);
  const auto w = quad::trapezoid_weights(grid);

  std::vector<double> log_n, log_err, log_inner;
  std::string detail;
  for (const auto n : sizes) {
    const double h = 0.15 * std::pow(static_cast<double>(n) / 100.0, -1.0 / 9.0);
    std::vector<double> ise(reps), inner(reps);
    parallel_for(reps, [&](std::size_t r) {
      const auto data = make_design2(n, sigma, 5000 + r);
      SmootherConfig sc;
      sc.bandwidth = h;
      sc.max_deriv = 2;
      sc.moment_order = 4;
      sc.grid = grid;
      const auto est = smooth_panel({ data.panel[component] }, sc, 1);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double e = est.derivs[2](0, static_cast<Eigen::Index>(i)) - data.truth.value(2, component, grid[i]);
        ise[r] += w[i] * e * e;
        if (grid[i] >= h && grid[i] <= 1.0 - h)
          inner[r] += w[i] * e * e;
      }
    });
    const double mean = std::accumulate(ise.begin(), ise.end(), 0.0) / reps;
    log_n.push_back(std::log(static_cast<double>(n)));
    log_err.push_back(std::log(mean));
    log_inner.push_back(std::log(std::accumulate(inner.begin(), inner.end(), 0.0) / reps));
    detail += " n=" + std::to_string(n) + ":" + fmt(mean, 3);
  }
  const double slope = fitted_slope(log_n, log_err);
  const double target = -4.0 / 9.0;
  return { std::abs(slope - target) <= 0.25,
           "slope " + fmt(slope) + " (target " + fmt(target) + ", interior-only " +
             fmt(fitted_slope(log_n, log_inner)) + "); MISE" + detail };
}

Outcome
gradient_check()
{
  double worst = 0.0;
  std::size_t fewest = 1000;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const int a = 2 + static_cast<int>(s % 4), b = 4 + static_cast<int>(s % 5);
    auto [net, data] = fixtures::random_problem(100 + s, { a, b, b + 1, 2 });
    const auto check = fixtures::check_gradient(net, data, 60, s);
    worst = std::max(worst, check.worst);
    fewest = std::min(fewest, check.checked);
  }
  return { worst <= 1e-4 && fewest >= 50,
           "worst relative error " + fmt(worst) + ", min coordinates per net " + std::to_string(fewest) };
}

Outcome
teacher_student()
{
  int ok = 0;
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto teacher = fixtures::teacher_network(3, 1, 1000 + s);
    const auto data = fixtures::teacher_data(teacher, 200);
    TrainConfig cfg;
    cfg.hidden = { 32, 32 };
    cfg.seed = s;
    const auto result = train(data, ClassSpec{}, cfg);
    const double ratio = result.loss / fixtures::target_variance(data);
    worst = std::max(worst, ratio);
    ok += ratio <= 1e-3;
  }
  return { ok >= 9, std::to_string(ok) + "/10 seeds within 1e-3 of target variance (worst ratio " + fmt(worst) + ")" };
}

struct BenchmarkRows
{
  std::vector<io::ReportRow> design1;
  std::vector<io::ReportRow> design2;
};

BenchmarkRows&
benchmark_rows()
{
  static BenchmarkRows rows;
  return rows;
}

std::vector<io::ReportRow>
run_benchmark(int design, double setting)
{
  const auto dir = fs::temp_directory_path() / ("odecal_acceptance_design" + std::to_string(design));
  fs::remove_all(dir);
  RunConfig c;
  c.mode = Mode::benchmark;
  c.design = design;
  c.output = dir.string();
  c.replications = 20;
  c.sizes = { 100, 200, 500 };
  c.settings = { setting };
  std::ostringstream log;
  auto rows = run_pipeline(c, log).rows;
  std::istringstream lines(log.str());
  for (std::string line; std::getline(lines, line);)
    if (!line.starts_with("["))
      std::cout << line << '\n';
  fs::remove_all(dir);
  return rows;
}

Outcome
table_trends()
{
  auto& rows = benchmark_rows();
  rows.design1 = run_benchmark(1, 10.0);
  rows.design2 = run_benchmark(2, 0.5);
  bool pass = true;
  std::string detail;
  for (const auto* set : { &rows.design1, &rows.design2 }) {
    double prev = std::numeric_limits<double>::infinity();
    detail += set->front().design + " median M1:";
    for (const std::size_t n : { 100u, 200u, 500u }) {
      std::vector<double> m1, m2, m3, m4;
      for (const auto& r : *set)
        if (r.n == n) {
          m1.push_back(r.metrics.m1);
          m2.push_back(r.metrics.m2);
          m3.push_back(r.metrics.m3);
          m4.push_back(r.metrics.m4);
        }
      const double a = median(m1);
      pass = pass && m1.size() == 20 && a < prev && median(m2) >= a && median(m4) >= median(m3);
      prev = a;
      detail += " " + fmt(a, 3);
    }
    detail += "; ";
  }
  return { pass, detail };
}

Outcome
class_audit()
{
  const auto& rows = benchmark_rows();
  std::size_t audited = 0, failed = 0;
  double worst_norm = 0.0;
  for (const auto* set : { &rows.design1, &rows.design2 })
    for (const auto& r : *set) {
      ++audited;
      failed += !r.constraints_ok();
      worst_norm = std::max(worst_norm, r.max_layer_norm);
    }
  return { audited == 120 && failed == 0,
           std::to_string(audited - failed) + "/" + std::to_string(audited) +
             " benchmark runs satisfy sparsity, box and clamp (max layer norm " + fmt(worst_norm, 17) + ")" };
}

Outcome
intrinsic_examples()
{
  CompositionalSpec linear;
  linear.r = { 20, 1 };
  linear.active = { 20 };
  linear.beta = { infinity };
  const auto a = intrinsic(linear);
  bool pass = a.smoothness == infinity && a.dimension == 20;

  for (auto [bh, bg] : { std::pair{ 2.0, 3.0 }, std::pair{ 5.0, 1.5 } }) {
    CompositionalSpec additive;
    additive.depth = 2;
    additive.r = { 6, 6, 1, 1 };
    additive.active = { 1, 6, 1 };
    additive.beta = { bh, infinity, bg };
    const auto b = intrinsic(additive);
    pass = pass && b.smoothness == std::min(bh, bg) && b.dimension == 1;
  }
  return { pass, "linear (inf, 20); additive (min(beta_h, beta_g), 1)" };
}

Outcome
covid_smoke()
{
  const auto dir = fs::temp_directory_path() / "odecal_acceptance_covid";
  fs::remove_all(dir);
  RunConfig c;
  c.mode = Mode::covid;
  c.output = dir.string();
  c.covid_path = std::string(ODECAL_TEST_DATA) + "/covid_5state_200d.csv";
  c.states = { "California", "Oregon", "Washington", "Nevada", "Arizona" };
  std::ostringstream log;
  run_pipeline(c, log);

  std::ifstream in(dir / "curves.csv");
  io::CsvReader csv(in, { "state", "date", "observed", "filtered", "growth" }, "curves.csv");
  std::map<std::string, std::size_t> per_state;
  std::size_t negative = 0;
  std::vector<std::string> f;
  while (csv.next(f)) {
    ++per_state[f[0]];
    negative += csv.number(f[3], "filtered") < 0.0;
    if (!std::isfinite(csv.number(f[4], "growth")))
      ++negative;
  }
  fs::remove_all(dir);
  bool pass = per_state.size() == 5 && negative == 0;
  for (const auto& [state, count] : per_state)
    pass = pass && count == 200;
  return { pass, std::to_string(per_state.size()) + " states with curve triples, " + std::to_string(negative) +
                   " negative or non-finite values" };
}

} // namespace

int
main()
{
  const std::vector<Criterion> criteria{
    { 1, "kernel moment suite", 5, kernel_moments },
    { 2, "stage-1 derivative rate", 300, stage1_rate },
    { 3, "gradient check", 30, gradient_check },
    { 5, "teacher-student recovery", 120, teacher_student },
    { 6, "table trends", 1800, table_trends },
    { 4, "class-constraint audit", 1e9, class_audit },
    { 7, "intrinsic-dimension oracle", 1, intrinsic_examples },
    { 8, "covid pipeline smoke test", 120, covid_smoke },
  };
  std::vector<std::string> lines(9);
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = { false, std::string("exception: ") + e.what() };
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = out.pass && in_time;
    failures += !pass;
    std::ostringstream line;
    line << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << "  " << c.name << "  [" << fmt(secs, 3) << " s"
         << (in_time ? "" : ", over time limit") << "]  " << out.detail;
    lines[static_cast<std::size_t>(c.id)] = line.str();
    std::cout << line.str() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (std::size_t i = 1; i < lines.size(); ++i)
    std::cout << lines[i] << '\n';
  return failures == 0 ? 0 : 1;
}
