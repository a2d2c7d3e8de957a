#pragma once

#include "errors.hpp"
#include "kernels.hpp"
#include "parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace odecal {

//! Observation times t_1 < ... < t_n in [0, 1] and noisy values y_i.
struct TimeSeries
{
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const noexcept { return times.size(); }
};

//! One series per component; lengths and time stamps may differ.
using TimeSeriesPanel = std::vector<TimeSeries>;

inline void
validate(const TimeSeries& s, std::size_t component = 0)
{
  const auto where = " (component " + std::to_string(component) + ")";
  if (s.times.size() != s.values.size())
    throw InvalidPanel("times/values length mismatch" + where);
  if (s.times.size() < 2)
    throw InvalidPanel("need at least two observations" + where);
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    const double t = s.times[i];
    if (!(t >= 0.0 && t <= 1.0))
      throw InvalidPanel("time outside [0, 1]" + where);
    if (i > 0 && !(t > s.times[i - 1]))
      throw InvalidPanel("times must be strictly increasing" + where);
    if (!std::isfinite(s.values[i]))
      throw InvalidPanel("non-finite observation" + where);
  }
}

inline void
validate(const TimeSeriesPanel& panel)
{
  if (panel.empty())
    throw InvalidPanel("panel has no components");
  for (std::size_t j = 0; j < panel.size(); ++j)
    validate(panel[j], j);
}

/// Cell boundaries s_0 = 0 <= s_1 <= ... <= s_n = 1 with s_i the midpoint of
/// t_i and t_{i+1}.
inline std::vector<double>
partition_points(std::span<const double> times)
{
  const std::size_t n = times.size();
  std::vector<double> s(n + 1);
  s.front() = 0.0;
  for (std::size_t i = 1; i < n; ++i)
    s[i] = 0.5 * (times[i - 1] + times[i]);
  s.back() = 1.0;
  return s;
}

/// Gasser-Muller estimator bound to one series. Cell weights come from the
/// closed-form kernel primitive:
///   h^{-(kappa+1)} int_{s_{i-1}}^{s_i} K((t-u)/h) du
///     = h^{-kappa} [P((t - s_{i-1})/h) - P((t - s_i)/h)].
class GasserMuller
{
public:
  explicit GasserMuller(const TimeSeries& series)
    : series_(&series)
    , cuts_(partition_points(series.times))
  {}

  const std::vector<double>& cuts() const noexcept { return cuts_; }

  double estimate(const KernelFamily& family, double h, int kappa, double t) const
  {
    const auto& kernel = family.select(kappa, t, h);
    const auto [first, last] = cell_range(kernel, h, t);
    const double scale = std::pow(h, -kappa);
    const auto& y = series_->values;
    double acc = 0.0;
    double prev = kernel.primitive((t - cuts_[first]) / h);
    for (std::size_t i = first; i < last; ++i) {
      const double cur = kernel.primitive((t - cuts_[i + 1]) / h);
      acc += (prev - cur) * y[i];
      prev = cur;
    }
    return scale * acc;
  }

  //! Weights of every observation at time t (zero outside the window).
  std::vector<double> weights(const KernelFamily& family, double h, int kappa, double t) const
  {
    const auto& kernel = family.select(kappa, t, h);
    const double scale = std::pow(h, -kappa);
    std::vector<double> w(series_->size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = scale * cell_weight(kernel, h, t, cuts_[i], cuts_[i + 1]);
    return w;
  }

  /// Level estimate at t_i with observation i removed. The dropped cell is
  /// split at its midpoint between the two neighbours (or given entirely to
  /// the single neighbour at either end).
  double leave_one_out(const KernelFamily& family, double h, std::size_t i) const
  {
    const auto& y = series_->values;
    const std::size_t n = y.size();
    const double t = series_->times[i];
    const auto& kernel = family.select(0, t, h);
    double est = estimate(family, h, 0, t);
    auto w = [&](double a, double b) { return cell_weight(kernel, h, t, a, b); };

    est -= w(cuts_[i], cuts_[i + 1]) * y[i];
    if (i == 0) {
      est += (w(cuts_[0], cuts_[2]) - w(cuts_[1], cuts_[2])) * y[1];
    } else if (i + 1 == n) {
      est += (w(cuts_[n - 2], cuts_[n]) - w(cuts_[n - 2], cuts_[n - 1])) * y[n - 2];
    } else {
      const double mid = 0.5 * (cuts_[i] + cuts_[i + 1]);
      est += (w(cuts_[i - 1], mid) - w(cuts_[i - 1], cuts_[i])) * y[i - 1];
      est += (w(mid, cuts_[i + 2]) - w(cuts_[i + 1], cuts_[i + 2])) * y[i + 1];
    }
    return est;
  }

private:
  static double cell_weight(const BoundaryKernel& kernel, double h, double t, double a, double b)
  {
    return kernel.primitive((t - a) / h) - kernel.primitive((t - b) / h);
  }

  // Cells [first, last) whose span meets the kernel window around t.
  std::pair<std::size_t, std::size_t> cell_range(const BoundaryKernel& kernel, double h, double t) const
  {
    const double u_lo = t - h * kernel.upper();
    const double u_hi = t - h * kernel.lower();
    const std::size_t n = series_->size();
    // first cell with right edge > u_lo
    auto it = std::upper_bound(cuts_.begin() + 1, cuts_.end(), u_lo);
    std::size_t first = static_cast<std::size_t>(it - cuts_.begin()) - 1;
    // last cell with left edge < u_hi
    auto jt = std::lower_bound(cuts_.begin(), cuts_.end() - 1, u_hi);
    std::size_t last = static_cast<std::size_t>(jt - cuts_.begin());
    first = std::min(first, n);
    last = std::clamp(last, first, n);
    return { first, last };
  }

  const TimeSeries* series_;
  std::vector<double> cuts_;
};

inline double
gm_estimate(const TimeSeries& series, const KernelFamily& family, double h, int kappa, double t)
{
  if (!(t >= 0.0 && t <= 1.0))
    throw InvalidPanel("evaluation time outside [0, 1]");
  return GasserMuller(series).estimate(family, h, kappa, t);
}

//! 20 log-spaced bandwidths in [1.5/n, 0.45/tau].
inline std::vector<double>
default_bandwidths(std::size_t n, double tau = 1.0, std::size_t count = 20)
{
  const double hi = 0.45 / tau;
  const double lo = std::min(1.5 / static_cast<double>(n), hi);
  std::vector<double> h(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    h[i] = lo * std::pow(hi / lo, f);
  }
  return h;
}

//! Leave-one-out CV score sum_i (y_i - xhat_{-i}(t_i))^2.
inline double
cv_score(const TimeSeries& series, const KernelFamily& family, double h)
{
  const GasserMuller gm(series);
  double score = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double r = series.values[i] - gm.leave_one_out(family, h, i);
    score += r * r;
  }
  return score;
}

inline double
select_bandwidth(const TimeSeries& series, const KernelFamily& family, std::span<const double> candidates)
{
  if (candidates.empty())
    throw EmptyCandidateSet("no candidate bandwidths");
  for (const double h : candidates)
    if (!(h > 0.0) || !(h * family.support_radius() < 0.5))
      throw BandwidthTooLarge("candidate h = " + std::to_string(h) +
                              " violates 0 < h * tau < 1/2");
  if (candidates.size() == 1)
    return candidates.front();
  double best = candidates.front();
  double best_score = std::numeric_limits<double>::infinity();
  for (const double h : candidates) {
    const double s = cv_score(series, family, h);
    if (s < best_score) {
      best_score = s;
      best = h;
    }
  }
  return best;
}

struct SmootherConfig
{
  //! Fixed bandwidth for every component; cross-validated when empty.
  std::optional<double> bandwidth;
  //! Fixed per-component bandwidths; take precedence over `bandwidth`.
  std::vector<double> bandwidths;
  //! CV candidates; default_bandwidths(n_j) when empty.
  std::vector<double> candidates;
  std::vector<double> grid;
  int max_deriv = 1;
  int moment_order = 3;
  double support_radius = 1.0;

  void validate() const
  {
    if (max_deriv < 1)
      throw InvalidOrder("max_deriv must be positive");
    if (moment_order < max_deriv + 2)
      throw InvalidOrder("moment_order must be at least max_deriv + 2");
    if (!(support_radius > 0.0))
      throw InvalidOrder("support_radius must be positive");
    if (bandwidth && !(*bandwidth > 0.0 && *bandwidth * support_radius < 0.5))
      throw BandwidthTooLarge("bandwidth must satisfy 0 < h * tau < 1/2");
    for (const double h : bandwidths)
      if (!(h > 0.0 && h * support_radius < 0.5))
        throw BandwidthTooLarge("bandwidth must satisfy 0 < h * tau < 1/2");
    if (grid.empty())
      throw InvalidPanel("evaluation grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
        throw InvalidPanel("evaluation grid must lie in [0, 1]");
      if (i > 0 && !(grid[i] > grid[i - 1]))
        throw InvalidPanel("evaluation grid must be strictly increasing");
    }
  }
};

//! x-hat and its derivatives on a grid: derivs[kappa](component, grid index).
struct TrajectoryEstimate
{
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> derivs;
  std::vector<double> bandwidths;

  int dim() const { return derivs.empty() ? 0 : static_cast<int>(derivs.front().rows()); }
  int max_deriv() const { return static_cast<int>(derivs.size()) - 1; }
  const Eigen::MatrixXd& values() const { return derivs.front(); }

  /// Stacked states (x, x', ..., x^(orders-1)) as an (orders*d) x |grid|
  /// matrix, blocked by derivative order.
  Eigen::MatrixXd stacked(int orders) const
  {
    const int d = dim();
    Eigen::MatrixXd z(orders * d, static_cast<Eigen::Index>(grid.size()));
    for (int k = 0; k < orders; ++k)
      z.middleRows(k * d, d) = derivs[static_cast<std::size_t>(k)];
    return z;
  }
};

inline TrajectoryEstimate
smooth_panel(const TimeSeriesPanel& panel, const SmootherConfig& config, unsigned workers = default_workers())
{
  config.validate();
  validate(panel);
  if (!config.bandwidths.empty() && config.bandwidths.size() != panel.size())
    throw InvalidDim("need one fixed bandwidth per component");
  const KernelFamily family(config.max_deriv, config.moment_order, config.support_radius);
  const auto d = static_cast<Eigen::Index>(panel.size());
  const auto g = static_cast<Eigen::Index>(config.grid.size());

  TrajectoryEstimate est;
  est.grid = config.grid;
  est.derivs.assign(static_cast<std::size_t>(config.max_deriv) + 1, Eigen::MatrixXd::Zero(d, g));
  est.bandwidths.assign(panel.size(), 0.0);

  parallel_for(
    panel.size(),
    [&](std::size_t j) {
      const auto& series = panel[j];
      double h;
      if (!config.bandwidths.empty()) {
        h = config.bandwidths[j];
      } else if (config.bandwidth) {
        h = *config.bandwidth;
      } else {
        const auto cands = config.candidates.empty()
                             ? default_bandwidths(series.size(), config.support_radius)
                             : config.candidates;
        h = select_bandwidth(series, family, cands);
      }
      est.bandwidths[j] = h;
      const GasserMuller gm(series);
      for (int kappa = 0; kappa <= config.max_deriv; ++kappa)
        for (Eigen::Index i = 0; i < g; ++i)
          est.derivs[static_cast<std::size_t>(kappa)](static_cast<Eigen::Index>(j), i) =
            gm.estimate(family, h, kappa, config.grid[static_cast<std::size_t>(i)]);
    },
    workers);
  return est;
}

} // namespace odecal
