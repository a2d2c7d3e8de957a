#pragma once

#include "dnn.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "smoother.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace odecal::io {

//! Shortest decimal text that parses back to the same double.
inline std::string
format_double(double x)
{
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return { buf, res.ptr };
}

inline std::string_view
trim(std::string_view s)
{
  const auto blank = " \t\r\n";
  const auto a = s.find_first_not_of(blank);
  if (a == std::string_view::npos)
    return {};
  const auto b = s.find_last_not_of(blank);
  return s.substr(a, b - a + 1);
}

inline bool
parse_double(std::string_view text, double& out)
{
  text = trim(text);
  if (text == "inf" || text == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (text == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  if (!text.empty() && text.front() == '+')
    text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

template<class Int>
bool
parse_int(std::string_view text, Int& out)
{
  text = trim(text);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

//! Splits one CSV record; double quotes group fields and "" escapes a quote.
inline std::vector<std::string>
split_csv(std::string_view line)
{
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

/// Line-oriented CSV reader that checks the header and reports malformed
/// records with their 1-based line number.
class CsvReader
{
public:
  CsvReader(std::istream& in, std::vector<std::string> expected, std::string source)
    : in_(in)
    , source_(std::move(source))
  {
    std::string line;
    if (!std::getline(in_, line))
      throw MalformedRow(source_ + ": empty file, expected header " + join(expected));
    line_ = 1;
    auto header = split_csv(line);
    for (auto& h : header)
      h = std::string(trim(h));
    if (header.size() < expected.size())
      throw MalformedRow(source_ + ":1: expected header " + join(expected));
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (header[i] != expected[i])
        throw MalformedRow(source_ + ":1: expected header " + join(expected));
    columns_ = header.size();
  }

  bool next(std::vector<std::string>& fields)
  {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (trim(line).empty())
        continue;
      fields = split_csv(line);
      if (fields.size() != columns_)
        fail("expected " + std::to_string(columns_) + " fields, found " + std::to_string(fields.size()));
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const
  {
    throw MalformedRow(source_ + ":" + std::to_string(line_) + ": " + what);
  }

  double number(const std::string& field, const char* column) const
  {
    double x = 0.0;
    if (!parse_double(field, x))
      fail(std::string("cannot parse ") + column + " '" + field + "'");
    return x;
  }

  template<class Int>
  Int integer(const std::string& field, const char* column) const
  {
    Int x{};
    if (!parse_int(field, x))
      fail(std::string("cannot parse ") + column + " '" + field + "'");
    return x;
  }

  std::size_t line() const noexcept { return line_; }

private:
  static std::string join(const std::vector<std::string>& v)
  {
    std::string s;
    for (const auto& x : v)
      s += (s.empty() ? "" : ",") + x;
    return s;
  }

  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
  std::size_t columns_ = 0;
};

inline std::ifstream
open_input(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream
open_output(const std::string& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

// ---------------------------------------------------------------------------
// Panels: component,time,value

inline void
write_panel(std::ostream& out, const TimeSeriesPanel& panel)
{
  out << "component,time,value\n";
  for (std::size_t j = 0; j < panel.size(); ++j)
    for (std::size_t i = 0; i < panel[j].size(); ++i)
      out << j << ',' << format_double(panel[j].times[i]) << ',' << format_double(panel[j].values[i]) << '\n';
}

/// Components are numbered 0..d-1 and must all appear; rows of a component
/// must be in increasing time order.
inline TimeSeriesPanel
read_panel(std::istream& in, const std::string& source = "panel")
{
  CsvReader csv(in, { "component", "time", "value" }, source);
  TimeSeriesPanel panel;
  std::vector<std::string> f;
  while (csv.next(f)) {
    const auto j = csv.integer<std::size_t>(f[0], "component");
    const double t = csv.number(f[1], "time");
    const double y = csv.number(f[2], "value");
    if (j >= panel.size())
      panel.resize(j + 1);
    auto& s = panel[j];
    if (!s.times.empty() && !(t > s.times.back()))
      csv.fail("times of component " + std::to_string(j) + " are not increasing");
    s.times.push_back(t);
    s.values.push_back(y);
  }
  for (std::size_t j = 0; j < panel.size(); ++j)
    if (panel[j].size() == 0)
      throw InvalidPanel(source + ": component " + std::to_string(j) + " has no rows");
  validate(panel);
  return panel;
}

// ---------------------------------------------------------------------------
// Trajectories: component,time,deriv_order,value

inline void
write_trajectory(std::ostream& out, const TrajectoryEstimate& est)
{
  out << "component,time,deriv_order,value\n";
  for (int j = 0; j < est.dim(); ++j)
    for (std::size_t k = 0; k < est.derivs.size(); ++k)
      for (std::size_t i = 0; i < est.grid.size(); ++i)
        out << j << ',' << format_double(est.grid[i]) << ',' << k << ','
            << format_double(est.derivs[k](j, static_cast<Eigen::Index>(i))) << '\n';
}

/// Reads a trajectory written on one common grid. Every (component, order)
/// block must list the same times.
inline TrajectoryEstimate
read_trajectory(std::istream& in, const std::string& source = "trajectory")
{
  CsvReader csv(in, { "component", "time", "deriv_order", "value" }, source);
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::vector<double>, std::vector<double>>> blocks;
  std::size_t dims = 0;
  std::size_t orders = 0;
  std::vector<std::string> f;
  while (csv.next(f)) {
    const auto j = csv.integer<std::size_t>(f[0], "component");
    const double t = csv.number(f[1], "time");
    const auto k = csv.integer<std::size_t>(f[2], "deriv_order");
    auto& [times, values] = blocks[{ j, k }];
    if (!times.empty() && !(t > times.back()))
      csv.fail("times are not increasing within a block");
    times.push_back(t);
    values.push_back(csv.number(f[3], "value"));
    dims = std::max(dims, j + 1);
    orders = std::max(orders, k + 1);
  }
  if (blocks.size() != dims * orders || blocks.empty())
    throw GridMismatch(source + ": every component needs every derivative order");
  TrajectoryEstimate est;
  est.grid = blocks.begin()->second.first;
  const auto g = static_cast<Eigen::Index>(est.grid.size());
  est.derivs.assign(orders, Eigen::MatrixXd(static_cast<Eigen::Index>(dims), g));
  for (const auto& [key, block] : blocks) {
    if (block.first != est.grid)
      throw GridMismatch(source + ": component " + std::to_string(key.first) + " order " +
                         std::to_string(key.second) + " uses a different grid");
    for (Eigen::Index i = 0; i < g; ++i)
      est.derivs[key.second](static_cast<Eigen::Index>(key.first), i) = block.second[static_cast<std::size_t>(i)];
  }
  return est;
}

// ---------------------------------------------------------------------------
// Metric reports

struct ReportRow
{
  std::string design;
  std::size_t n = 0;
  //! d for design 1, sigma for design 2.
  double setting = 0.0;
  std::uint64_t seed = 0;
  MetricReport metrics;
  double loss = 0.0;
  std::size_t nonzeros = 0;
  std::size_t budget = 0;
  double max_layer_norm = 0.0;
  double sup_bound = 0.0;
  double max_output = 0.0;

  bool constraints_ok() const
  {
    return nonzeros <= budget && max_layer_norm <= 1.0 && max_output <= sup_bound;
  }

  bool operator==(const ReportRow&) const = default;
};

inline const std::vector<std::string>&
report_columns()
{
  static const std::vector<std::string> cols{ "design",   "n",        "d_or_sigma",     "seed",      "M1",
                                              "M2",       "M3",       "M4",             "grid_size", "trim",
                                              "loss",     "nonzeros", "budget",         "max_layer_norm",
                                              "sup_bound", "max_output", "constraints_ok" };
  return cols;
}

inline void
write_report_header(std::ostream& out)
{
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << (i ? "," : "") << cols[i];
  out << '\n';
}

inline void
write_report_row(std::ostream& out, const ReportRow& r)
{
  const auto& m = r.metrics;
  out << r.design << ',' << r.n << ',' << format_double(r.setting) << ',' << r.seed << ','
      << format_double(m.m1) << ',' << format_double(m.m2) << ',' << format_double(m.m3) << ','
      << format_double(m.m4) << ',' << m.grid_size << ',' << format_double(m.trim) << ','
      << format_double(r.loss) << ',' << r.nonzeros << ',' << r.budget << ','
      << format_double(r.max_layer_norm) << ',' << format_double(r.sup_bound) << ','
      << format_double(r.max_output) << ',' << (r.constraints_ok() ? 1 : 0) << '\n';
}

inline void
write_reports(std::ostream& out, const std::vector<ReportRow>& rows)
{
  write_report_header(out);
  for (const auto& r : rows)
    write_report_row(out, r);
}

inline std::vector<ReportRow>
read_reports(std::istream& in, const std::string& source = "metrics")
{
  CsvReader csv(in, report_columns(), source);
  std::vector<ReportRow> rows;
  std::vector<std::string> f;
  while (csv.next(f)) {
    ReportRow r;
    r.design = f[0];
    r.n = csv.integer<std::size_t>(f[1], "n");
    r.setting = csv.number(f[2], "d_or_sigma");
    r.seed = csv.integer<std::uint64_t>(f[3], "seed");
    r.metrics.m1 = csv.number(f[4], "M1");
    r.metrics.m2 = csv.number(f[5], "M2");
    r.metrics.m3 = csv.number(f[6], "M3");
    r.metrics.m4 = csv.number(f[7], "M4");
    r.metrics.grid_size = csv.integer<std::size_t>(f[8], "grid_size");
    r.metrics.trim = csv.number(f[9], "trim");
    r.loss = csv.number(f[10], "loss");
    r.nonzeros = csv.integer<std::size_t>(f[11], "nonzeros");
    r.budget = csv.integer<std::size_t>(f[12], "budget");
    r.max_layer_norm = csv.number(f[13], "max_layer_norm");
    r.sup_bound = csv.number(f[14], "sup_bound");
    r.max_output = csv.number(f[15], "max_output");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Network checkpoints
//
//   {
//     "format": "odecal-relu-1",
//     "widths": [p0, ..., p_{L+1}],
//     "weights": [[W_0 row-major], ..., [W_L row-major]],
//     "shifts": [[v_1], ..., [v_L]],
//     "class": "F1" | "F2",
//     "sparsity_budget": int,          // F2 only
//     "sup_bound": number,             // F2 only
//     "seed": int
//   }

inline constexpr const char* checkpoint_format = "odecal-relu-1";

inline nlohmann::json
to_json(const ReluNetwork& net, const ClassSpec& spec, std::uint64_t seed)
{
  nlohmann::json j;
  j["format"] = checkpoint_format;
  j["widths"] = net.widths();
  auto weights = nlohmann::json::array();
  for (int l = 0; l <= net.depth(); ++l) {
    const auto w = net.weight(l);
    weights.push_back(std::vector<double>(w.data(), w.data() + w.size()));
  }
  j["weights"] = std::move(weights);
  auto shifts = nlohmann::json::array();
  for (int l = 1; l <= net.depth(); ++l) {
    const auto v = net.shift(l);
    shifts.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  j["shifts"] = std::move(shifts);
  j["class"] = spec.id == NetClass::F2 ? "F2" : "F1";
  if (spec.id == NetClass::F2) {
    j["sparsity_budget"] = spec.sparsity_budget;
    j["sup_bound"] = spec.sup_bound;
  }
  j["seed"] = seed;
  return j;
}

struct Checkpoint
{
  ReluNetwork net;
  ClassSpec spec;
  std::uint64_t seed = 0;
};

inline Checkpoint
from_json(const nlohmann::json& j)
{
  try {
    if (j.at("format").get<std::string>() != checkpoint_format)
      throw ConfigError("unsupported checkpoint format");
    Checkpoint c;
    c.net = ReluNetwork(j.at("widths").get<std::vector<int>>());
    const auto& weights = j.at("weights");
    const auto& shifts = j.at("shifts");
    if (weights.size() != static_cast<std::size_t>(c.net.depth()) + 1 ||
        shifts.size() != static_cast<std::size_t>(c.net.depth()))
      throw ShapeMismatch("checkpoint layer count does not match widths");
    for (int l = 0; l <= c.net.depth(); ++l) {
      const auto w = weights[static_cast<std::size_t>(l)].get<std::vector<double>>();
      auto dst = c.net.weight(l);
      if (static_cast<Eigen::Index>(w.size()) != dst.size())
        throw ShapeMismatch("checkpoint weight block " + std::to_string(l) + " has the wrong size");
      std::copy(w.begin(), w.end(), dst.data());
    }
    for (int l = 1; l <= c.net.depth(); ++l) {
      const auto v = shifts[static_cast<std::size_t>(l - 1)].get<std::vector<double>>();
      auto dst = c.net.shift(l);
      if (static_cast<Eigen::Index>(v.size()) != dst.size())
        throw ShapeMismatch("checkpoint shift block " + std::to_string(l) + " has the wrong size");
      std::copy(v.begin(), v.end(), dst.data());
    }
    const auto cls = j.at("class").get<std::string>();
    if (cls == "F2") {
      c.spec.id = NetClass::F2;
      c.spec.sparsity_budget = j.at("sparsity_budget").get<std::size_t>();
      c.spec.sup_bound = j.at("sup_bound").get<double>();
      c.net.output_bound = c.spec.sup_bound;
    } else if (cls != "F1") {
      throw ConfigError("unknown network class '" + cls + "'");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void
save_checkpoint(const std::string& path, const ReluNetwork& net, const ClassSpec& spec, std::uint64_t seed)
{
  auto out = open_output(path);
  out << to_json(net, spec, seed).dump(2) << '\n';
}

inline Checkpoint
load_checkpoint(const std::string& path)
{
  auto in = open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse checkpoint '" + path + "': " + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Config files
//
//   # comment
//   [section]
//   key = value
//
// Keys are returned as "section.key"; keys before any section have no prefix.

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap
parse_config(std::istream& in, const std::string& source = "config")
{
  ConfigMap out;
  std::string section;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto text = std::string_view(raw);
    if (const auto hash = text.find_first_of("#;"); hash != std::string_view::npos)
      text = text.substr(0, hash);
    text = trim(text);
    if (text.empty())
      continue;
    const auto where = source + ":" + std::to_string(line) + ": ";
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3)
        throw ConfigError(where + "malformed section header");
      section = std::string(trim(text.substr(1, text.size() - 2)));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + "expected key = value");
    const auto key = std::string(trim(text.substr(0, eq)));
    if (key.empty())
      throw ConfigError(where + "empty key");
    out[section.empty() ? key : section + "." + key] = std::string(trim(text.substr(eq + 1)));
  }
  return out;
}

inline ConfigMap
load_config(const std::string& path)
{
  auto in = open_input(path);
  return parse_config(in, path);
}

} // namespace odecal::io
