#pragma once

#include "dnn.hpp"
#include "errors.hpp"
#include "odesim.hpp"
#include "quadrature.hpp"
#include "smoother.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace odecal {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

/// Parameters (L*, r, r~, beta, a, b, C) of a compositional function
/// g_{L*} o ... o g_0 where every coordinate of g_i is (beta_i, C_i)-Holder
/// and depends on r~_i of its r_i inputs.
struct CompositionalSpec
{
  int depth = 0;
  std::vector<int> r;
  std::vector<int> active;
  std::vector<double> beta;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  //! Constants C~_i of the width lower bound; default to C_i when empty.
  std::vector<double> c_tilde;

  void validate() const
  {
    const auto layers = static_cast<std::size_t>(depth) + 1;
    if (depth < 0)
      throw ConfigError("L* must be non-negative");
    if (r.size() != layers + 1 || r.back() != 1)
      throw ConfigError("r must have L*+2 entries ending in 1");
    if (active.size() != layers || beta.size() != layers)
      throw ConfigError("r~ and beta must have L*+1 entries");
    for (std::size_t i = 0; i < layers; ++i) {
      if (active[i] < 1 || active[i] > r[i])
        throw ConfigError("need 1 <= r~_i <= r_i");
      if (!(beta[i] > 0.0))
        throw ConfigError("beta_i must be positive");
    }
  }
};

struct Intrinsic
{
  double smoothness = 0.0;
  int dimension = 0;
  std::size_t layer = 0;
};

/// beta_i* = beta_i prod_{s>i} min(beta_s, 1); returns (beta_{i*}*, r~_{i*})
/// for i* = argmin beta_i*/r~_i, ties broken toward the smaller index.
inline Intrinsic
intrinsic(const CompositionalSpec& spec)
{
  spec.validate();
  const auto layers = static_cast<std::size_t>(spec.depth) + 1;
  Intrinsic best;
  double best_ratio = infinity;
  bool found = false;
  for (std::size_t i = 0; i < layers; ++i) {
    double star = spec.beta[i];
    for (std::size_t s = i + 1; s < layers; ++s)
      star *= std::min(spec.beta[s], 1.0);
    const double ratio = star / spec.active[i];
    if (!found || ratio < best_ratio) {
      found = true;
      best_ratio = ratio;
      best = { star, spec.active[i], i };
    }
  }
  return best;
}

struct RateTerms
{
  double stage1 = 0.0;
  double depth_approx = 0.0;
  double smoothness_approx = 0.0;
  double complexity = 0.0;

  double total() const { return stage1 + depth_approx + smoothness_approx + complexity; }
};

/// The four terms of the convergence rate
///   (1+N^L) n^{-2(k-nu)/(2k+1)} + (N 2^{-L})^{2 prod_{l>=1} min(beta_l,1)}
///     + N^{-2 beta*/r*} + (L N log n + L^2 N log(LN)) / n.
/// With infinite intrinsic smoothness the two approximation terms vanish.
inline RateTerms
rate_terms(double L, double N, double n, int k, int nu, const CompositionalSpec& spec)
{
  if (!(L > 0 && N > 0 && n > 0 && k > 0 && nu > 0))
    throw ConfigError("rate_bound arguments must be positive");
  const auto in = intrinsic(spec);
  RateTerms t;
  t.stage1 = (1.0 + std::pow(N, L)) * std::pow(n, -2.0 * (k - nu) / (2.0 * k + 1.0));
  if (std::isfinite(in.smoothness)) {
    double prod = 1.0;
    for (std::size_t l = 1; l < spec.beta.size(); ++l)
      prod *= std::min(spec.beta[l], 1.0);
    t.depth_approx = std::pow(N * std::pow(2.0, -L), 2.0 * prod);
    t.smoothness_approx = std::pow(N, -2.0 * in.smoothness / in.dimension);
  }
  t.complexity = (L * N * std::log(n) + L * L * N * std::log(L * N)) / n;
  return t;
}

inline double
rate_bound(double L, double N, double n, int k, int nu, const CompositionalSpec& spec)
{
  return rate_terms(L, N, n, k, nu, spec).total();
}

/// Minimum hidden width 6 eta max_i ((beta_i+1)^{r~_i} v (C~_i+1) e^{r~_i})
/// with eta = max_i r_{i+1} (r~_i + ceil(beta_i)). Infinite if any beta_i is.
inline double
width_lower_bound(const CompositionalSpec& spec)
{
  spec.validate();
  double eta = 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i < spec.beta.size(); ++i) {
    if (!std::isfinite(spec.beta[i]))
      return infinity;
    eta = std::max(eta, spec.r[i + 1] * (spec.active[i] + std::ceil(spec.beta[i])));
    const double ct = i < spec.c_tilde.size() ? spec.c_tilde[i]
                      : i < spec.c.size()     ? spec.c[i]
                                              : 1.0;
    m = std::max({ m, std::pow(spec.beta[i] + 1.0, spec.active[i]),
                   (ct + 1.0) * std::exp(static_cast<double>(spec.active[i])) });
  }
  return 6.0 * eta * m;
}

//! Warning text when min hidden width falls below the theoretical bound.
inline std::optional<std::string>
architecture_warning(const std::vector<int>& hidden, const CompositionalSpec& spec)
{
  if (hidden.empty())
    return "network has no hidden layers";
  const int n = *std::min_element(hidden.begin(), hidden.end());
  const double bound = width_lower_bound(spec);
  if (static_cast<double>(n) >= bound)
    return std::nullopt;
  return "min hidden width " + std::to_string(n) + " is below the consistency bound " +
         (std::isfinite(bound) ? std::to_string(bound) : std::string("inf"));
}

struct MetricReport
{
  double m1 = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  std::size_t grid_size = 0;
  double trim = 0.0;

  bool operator==(const MetricReport&) const = default;
};

using VectorField = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// M1/M3 evaluate f-hat at the true states, M2/M4 at the estimated states;
/// both compare against f0 at the true states. M1/M2 integrate the l2 norm,
/// M3/M4 take the max over components of the integrated absolute error.
/// Integration is trapezoid over grid points in [trim, 1 - trim].
inline MetricReport
metrics(const VectorField& fhat,
        const VectorField& f0,
        const std::vector<double>& grid,
        const Eigen::MatrixXd& true_states,
        const Eigen::MatrixXd& est_states,
        double trim = 0.0)
{
  const auto g = static_cast<Eigen::Index>(grid.size());
  if (true_states.cols() != g || est_states.cols() != g || true_states.rows() != est_states.rows())
    throw GridMismatch("state matrices do not match the metric grid");
  if (!(trim >= 0.0 && trim < 0.5))
    throw ConfigError("trim must lie in [0, 0.5)");

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < g; ++i)
    if (grid[static_cast<std::size_t>(i)] >= trim && grid[static_cast<std::size_t>(i)] <= 1.0 - trim)
      keep.push_back(i);
  if (keep.size() < 2)
    throw GridMismatch("fewer than two metric grid points after trimming");
  std::vector<double> sub(keep.size());
  Eigen::MatrixXd zt(true_states.rows(), static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd ze(est_states.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    sub[i] = grid[static_cast<std::size_t>(keep[i])];
    zt.col(static_cast<Eigen::Index>(i)) = true_states.col(keep[i]);
    ze.col(static_cast<Eigen::Index>(i)) = est_states.col(keep[i]);
  }
  const auto w = quad::trapezoid_weights(sub);
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));

  const Eigen::MatrixXd truth = f0(zt);
  const Eigen::MatrixXd on_true = fhat(zt) - truth;
  const Eigen::MatrixXd on_est = fhat(ze) - truth;
  if (on_true.rows() != truth.rows())
    throw GridMismatch("fitted and true fields have different output dimensions");

  MetricReport rep;
  rep.grid_size = keep.size();
  rep.trim = trim;
  rep.m1 = on_true.colwise().norm().dot(wv.transpose());
  rep.m2 = on_est.colwise().norm().dot(wv.transpose());
  rep.m3 = (on_true.cwiseAbs() * wv).maxCoeff();
  rep.m4 = (on_est.cwiseAbs() * wv).maxCoeff();
  return rep;
}

inline MetricReport
metrics(const ReluNetwork& net,
        const OdeProblem& problem,
        const TrajectoryEstimate& truth,
        const TrajectoryEstimate& estimate,
        double trim = 0.0)
{
  if (truth.grid.size() != estimate.grid.size())
    throw GridMismatch("truth and estimate grids differ in size");
  for (std::size_t i = 0; i < truth.grid.size(); ++i)
    if (std::abs(truth.grid[i] - estimate.grid[i]) > 1e-12)
      throw GridMismatch("truth and estimate grids differ at index " + std::to_string(i));
  if (truth.dim() != estimate.dim() || estimate.max_deriv() < problem.order - 1)
    throw GridMismatch("estimate does not carry the required states");
  const int nu = problem.order;
  return metrics([&](const Eigen::MatrixXd& z) { return forward(net, z); },
                 [&](const Eigen::MatrixXd& z) { return problem.f(z); },
                 truth.grid,
                 truth.stacked(nu),
                 estimate.stacked(nu),
                 trim);
}

inline double
median(std::vector<double> v)
{
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double
mean(const std::vector<double>& v)
{
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

} // namespace odecal
