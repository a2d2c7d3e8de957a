#pragma once

#include "dnn.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "quadrature.hpp"
#include "smoother.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace odecal {

inline const std::array<std::string_view, 50>&
us_states()
{
  static const std::array<std::string_view, 50> names{
    "Alabama",       "Alaska",         "Arizona",        "Arkansas",     "California",
    "Colorado",      "Connecticut",    "Delaware",       "Florida",      "Georgia",
    "Hawaii",        "Idaho",          "Illinois",       "Indiana",      "Iowa",
    "Kansas",        "Kentucky",       "Louisiana",      "Maine",        "Maryland",
    "Massachusetts", "Michigan",       "Minnesota",      "Mississippi",  "Missouri",
    "Montana",       "Nebraska",       "Nevada",         "New Hampshire", "New Jersey",
    "New Mexico",    "New York",       "North Carolina", "North Dakota", "Ohio",
    "Oklahoma",      "Oregon",         "Pennsylvania",   "Rhode Island", "South Carolina",
    "South Dakota",  "Tennessee",      "Texas",          "Utah",         "Vermont",
    "Virginia",      "Washington",     "West Virginia",  "Wisconsin",    "Wyoming"
  };
  return names;
}

inline bool
is_us_state(std::string_view name)
{
  const auto& s = us_states();
  return std::find(s.begin(), s.end(), name) != s.end();
}

//! Days since 1970-01-01 for an ISO date YYYY-MM-DD.
inline bool
parse_iso_date(std::string_view text, long& day)
{
  text = io::trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    return false;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (!io::parse_int(text.substr(0, 4), y) || !io::parse_int(text.substr(5, 2), m) ||
      !io::parse_int(text.substr(8, 2), d))
    return false;
  const std::chrono::year_month_day ymd{ std::chrono::year{ y }, std::chrono::month{ m }, std::chrono::day{ d } };
  if (!ymd.ok())
    return false;
  day = std::chrono::sys_days{ ymd }.time_since_epoch().count();
  return true;
}

inline std::string
format_iso_date(long day)
{
  const std::chrono::year_month_day ymd{ std::chrono::sys_days{ std::chrono::days{ day } } };
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Per-state cumulative case counts. times[j] rescales days[j] to [0, 1]
/// using the first and last date over all retained states.
struct CovidPanel
{
  std::vector<std::string> states;
  std::vector<std::vector<long>> days;
  std::vector<std::vector<double>> cumulative;
  std::vector<std::vector<double>> times;
  long first_day = 0;
  long last_day = 0;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return states.size(); }
};

struct CovidIngestOptions
{
  //! States to keep; all 50 when empty. Every listed state must be present.
  std::vector<std::string> states;
};

/// Reads `date,state,fips,cases,deaths` rows where `cases` is the daily count.
/// Territories and unlisted states are dropped; each state's series is
/// accumulated and any decrease is clipped to the running maximum.
inline CovidPanel
ingest_covid(std::istream& in, const CovidIngestOptions& options = {}, const std::string& source = "covid")
{
  for (const auto& s : options.states)
    if (!is_us_state(s))
      throw ConfigError("'" + s + "' is not one of the 50 states");
  const std::set<std::string> wanted(options.states.begin(), options.states.end());

  io::CsvReader csv(in, { "date", "state", "fips", "cases", "deaths" }, source);
  std::map<std::string, std::map<long, double>> rows;
  std::vector<std::string> f;
  while (csv.next(f)) {
    long day = 0;
    if (!parse_iso_date(f[0], day))
      csv.fail("cannot parse date '" + f[0] + "'");
    const std::string state(io::trim(f[1]));
    if (state.empty())
      csv.fail("empty state name");
    const double cases = csv.number(f[3], "cases");
    if (!std::isfinite(cases))
      csv.fail("non-finite case count");
    if (!is_us_state(state) || (!wanted.empty() && !wanted.count(state)))
      continue;
    auto& series = rows[state];
    if (!series.emplace(day, cases).second)
      csv.fail("duplicate date " + std::string(io::trim(f[0])) + " for " + state);
  }

  const std::size_t required = wanted.empty() ? us_states().size() : wanted.size();
  if (rows.size() < required) {
    std::string missing;
    for (const auto name : us_states()) {
      const std::string s(name);
      if ((wanted.empty() || wanted.count(s)) && !rows.count(s))
        missing += (missing.empty() ? "" : ", ") + s;
    }
    throw MissingState(source + ": " + std::to_string(rows.size()) + " of " + std::to_string(required) +
                       " states present; missing " + missing);
  }

  CovidPanel panel;
  panel.first_day = std::numeric_limits<long>::max();
  panel.last_day = std::numeric_limits<long>::min();
  for (auto& [state, series] : rows) {
    panel.states.push_back(state);
    std::vector<long> days;
    std::vector<double> cum;
    double total = 0.0;
    double running = -std::numeric_limits<double>::infinity();
    for (const auto& [day, cases] : series) {
      total += cases;
      double value = total;
      if (value < running) {
        panel.warnings.push_back(state + " " + format_iso_date(day) + ": cumulative count " +
                                 io::format_double(value) + " clipped to " + io::format_double(running));
        value = running;
      }
      running = value;
      days.push_back(day);
      cum.push_back(value);
    }
    panel.first_day = std::min(panel.first_day, days.front());
    panel.last_day = std::max(panel.last_day, days.back());
    panel.days.push_back(std::move(days));
    panel.cumulative.push_back(std::move(cum));
  }
  if (panel.last_day <= panel.first_day)
    throw InvalidPanel(source + ": need at least two distinct dates");
  const double span = static_cast<double>(panel.last_day - panel.first_day);
  for (const auto& days : panel.days) {
    std::vector<double> t(days.size());
    for (std::size_t i = 0; i < days.size(); ++i)
      t[i] = static_cast<double>(days[i] - panel.first_day) / span;
    panel.times.push_back(std::move(t));
  }
  return panel;
}

inline CovidPanel
ingest_covid(const std::string& path, const CovidIngestOptions& options = {})
{
  auto in = io::open_input(path);
  return ingest_covid(in, options, path);
}

//! Reads `state,population` rows.
inline std::map<std::string, double>
read_populations(std::istream& in, const std::string& source = "population")
{
  io::CsvReader csv(in, { "state", "population" }, source);
  std::map<std::string, double> out;
  std::vector<std::string> f;
  while (csv.next(f)) {
    const double p = csv.number(f[1], "population");
    if (!(p > 0.0))
      csv.fail("population must be positive");
    out[std::string(io::trim(f[0]))] = p;
  }
  return out;
}

struct CovidConfig
{
  SmootherConfig smoother;
  FitConfig fit;
  //! Per-capita output (per 100000 residents) when non-empty.
  std::map<std::string, double> populations;
};

/// One plot-ready curve per state on the daily grid: observed daily new
/// cases (NaN on days without a report), the filtered rate x-hat' clipped at
/// zero, and the fitted growth f-hat, both converted to per-day units.
struct CovidCurve
{
  std::string state;
  std::vector<long> days;
  std::vector<double> observed;
  std::vector<double> filtered;
  std::vector<double> growth;
};

struct CovidResult
{
  TrajectoryEstimate estimate;
  FitResult fit;
  std::vector<CovidCurve> curves;
  std::vector<double> scales;
  bool per_capita = false;
};

/// Second-order system x'' = f(x, x') over all states, fitted on counts
/// scaled to [0, 1] per state.
inline CovidResult
covid_growth(const CovidPanel& panel, const CovidConfig& config, unsigned workers = default_workers())
{
  constexpr int order = 2;
  const std::size_t d = panel.size();
  if (d == 0)
    throw MissingState("covid panel has no states");

  CovidResult out;
  out.per_capita = !config.populations.empty();
  TimeSeriesPanel series(d);
  std::size_t longest = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const double top = panel.cumulative[j].back();
    out.scales.push_back(top > 0.0 ? top : 1.0);
    series[j].times = panel.times[j];
    series[j].values.resize(panel.cumulative[j].size());
    for (std::size_t i = 0; i < series[j].values.size(); ++i)
      series[j].values[i] = panel.cumulative[j][i] / out.scales[j];
    longest = std::max(longest, series[j].size());
  }

  std::vector<double> unit(d, 1.0);
  if (out.per_capita)
    for (std::size_t j = 0; j < d; ++j) {
      const auto it = config.populations.find(panel.states[j]);
      if (it == config.populations.end())
        throw MissingState("no population for " + panel.states[j]);
      unit[j] = 1e5 / it->second;
    }

  SmootherConfig sc = config.smoother;
  sc.max_deriv = order;
  if (sc.moment_order < order + 2)
    sc.moment_order = order + 2;
  sc.grid = quad::uniform_grid(std::max<std::size_t>(200, longest));
  out.estimate = smooth_panel(series, sc, workers);
  out.fit = fit_rhs(RegressionData::from_estimate(out.estimate, order), config.fit);

  const long span_days = panel.last_day - panel.first_day;
  const double span = static_cast<double>(span_days);
  SmootherConfig daily = sc;
  daily.bandwidths = out.estimate.bandwidths;
  daily.grid.resize(static_cast<std::size_t>(span_days) + 1);
  for (long k = 0; k <= span_days; ++k)
    daily.grid[static_cast<std::size_t>(k)] = static_cast<double>(k) / span;
  const auto on_days = smooth_panel(series, daily, workers);
  const Eigen::MatrixXd growth = forward(out.fit.train.net, on_days.stacked(order));

  for (std::size_t j = 0; j < d; ++j) {
    CovidCurve c;
    c.state = panel.states[j];
    const auto g = daily.grid.size();
    c.days.resize(g);
    c.observed.assign(g, std::numeric_limits<double>::quiet_NaN());
    c.filtered.resize(g);
    c.growth.resize(g);
    for (std::size_t k = 0; k < g; ++k)
      c.days[k] = panel.first_day + static_cast<long>(k);
    for (std::size_t i = 0; i < panel.days[j].size(); ++i) {
      const double prev = i == 0 ? 0.0 : panel.cumulative[j][i - 1];
      c.observed[static_cast<std::size_t>(panel.days[j][i] - panel.first_day)] =
        (panel.cumulative[j][i] - prev) * unit[j];
    }
    const double rate = out.scales[j] * unit[j] / span;
    for (std::size_t k = 0; k < g; ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      const auto row = static_cast<Eigen::Index>(j);
      c.filtered[k] = std::max(0.0, on_days.derivs[1](row, col) * rate);
      c.growth[k] = growth(row, col) * rate / span;
    }
    out.curves.push_back(std::move(c));
  }
  return out;
}

inline void
write_covid_curves(std::ostream& out, const CovidResult& result)
{
  out << "state,date,observed,filtered,growth\n";
  for (const auto& c : result.curves)
    for (std::size_t k = 0; k < c.days.size(); ++k) {
      out << c.state << ',' << format_iso_date(c.days[k]) << ',';
      if (!std::isnan(c.observed[k]))
        out << io::format_double(c.observed[k]);
      out << ',' << io::format_double(c.filtered[k]) << ',' << io::format_double(c.growth[k]) << '\n';
    }
}

} // namespace odecal
