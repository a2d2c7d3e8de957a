#pragma once

#include "errors.hpp"
#include "random.hpp"
#include "smoother.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace odecal {

/// d^nu x / dt^nu = f0(x, x', ..., x^(nu-1)) on [0, 1]. States are stacked by
/// derivative order: z[k*d + j] = x_j^(k).
struct OdeProblem
{
  using Rhs = std::function<void(std::span<const double> z, std::span<double> out)>;
  using Guard = std::function<void(double t, std::span<const double> z)>;

  std::string name;
  int order = 1;
  int dim = 1;
  Rhs rhs;
  std::vector<double> init;
  //! Optional validity check run at every step; throws NonFiniteState.
  Guard guard;

  int state_size() const { return order * dim; }

  Eigen::VectorXd f(const Eigen::VectorXd& z) const
  {
    Eigen::VectorXd out(dim);
    rhs(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())),
        std::span<double>(out.data(), static_cast<std::size_t>(dim)));
    return out;
  }

  //! Column-wise f0 over an (order*dim) x T matrix of stacked states.
  Eigen::MatrixXd f(const Eigen::MatrixXd& z) const
  {
    Eigen::MatrixXd out(dim, z.cols());
    Eigen::VectorXd col(z.rows());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      col = z.col(c);
      out.col(c) = f(col);
    }
    return out;
  }
};

/// RK4 solution on a uniform step with cubic Hermite dense output. The top
/// derivative is f0 evaluated along the interpolated state.
class DenseTrajectory
{
public:
  DenseTrajectory() = default;

  DenseTrajectory(const OdeProblem& problem, double step, Eigen::MatrixXd states, Eigen::MatrixXd tops)
    : problem_(problem)
    , step_(step)
    , states_(std::move(states))
    , tops_(std::move(tops))
  {}

  const OdeProblem& problem() const { return problem_; }
  double step() const { return step_; }
  Eigen::Index nodes() const { return states_.cols(); }
  const Eigen::MatrixXd& node_states() const { return states_; }

  //! Stacked state (x, ..., x^(nu-1)) at time t.
  Eigen::VectorXd state(double t) const
  {
    const int d = problem_.dim;
    const int nu = problem_.order;
    const auto [k, s] = locate(t);
    Eigen::VectorXd z(nu * d);
    for (int r = 0; r < nu; ++r)
      for (int j = 0; j < d; ++j)
        z(r * d + j) = hermite(r, j, k, s);
    return z;
  }

  //! x_j^(deriv)(t) for deriv in 0..nu.
  double value(int deriv, int component, double t) const
  {
    if (deriv == problem_.order)
      return problem_.f(state(t))(component);
    const auto [k, s] = locate(t);
    return hermite(deriv, component, k, s);
  }

  //! Exact derivatives 0..nu on a grid, in the same layout as the smoother.
  TrajectoryEstimate sample(const std::vector<double>& grid) const
  {
    const int d = problem_.dim;
    const int nu = problem_.order;
    TrajectoryEstimate out;
    out.grid = grid;
    out.derivs.assign(static_cast<std::size_t>(nu) + 1,
                      Eigen::MatrixXd(d, static_cast<Eigen::Index>(grid.size())));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto z = state(grid[i]);
      for (int r = 0; r < nu; ++r)
        out.derivs[static_cast<std::size_t>(r)].col(static_cast<Eigen::Index>(i)) = z.segment(r * d, d);
      out.derivs[static_cast<std::size_t>(nu)].col(static_cast<Eigen::Index>(i)) = problem_.f(z);
    }
    return out;
  }

private:
  std::pair<Eigen::Index, double> locate(double t) const
  {
    const Eigen::Index last = states_.cols() - 1;
    double pos = std::clamp(t, 0.0, 1.0) / step_;
    auto k = static_cast<Eigen::Index>(std::floor(pos));
    k = std::clamp<Eigen::Index>(k, 0, last - 1);
    return { k, pos - static_cast<double>(k) };
  }

  double slope(int r, int j, Eigen::Index k) const
  {
    const int d = problem_.dim;
    return r + 1 < problem_.order ? states_((r + 1) * d + j, k) : tops_(j, k);
  }

  double hermite(int r, int j, Eigen::Index k, double s) const
  {
    const int d = problem_.dim;
    const double y0 = states_(r * d + j, k);
    const double y1 = states_(r * d + j, k + 1);
    const double m0 = slope(r, j, k) * step_;
    const double m1 = slope(r, j, k + 1) * step_;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 +
           (s3 - s2) * m1;
  }

  OdeProblem problem_;
  double step_ = 0.0;
  Eigen::MatrixXd states_;
  Eigen::MatrixXd tops_;
};

//! Classical RK4 on the first-order companion system over [0, 1].
inline DenseTrajectory
integrate(const OdeProblem& problem, double step = 1e-3)
{
  if (!(step > 0.0 && step <= 1e-2))
    throw ConfigError("integration step must lie in (0, 1e-2]");
  if (static_cast<int>(problem.init.size()) != problem.state_size())
    throw InvalidDim("initial state has " + std::to_string(problem.init.size()) +
                     " entries, expected " + std::to_string(problem.state_size()));
  const auto steps = static_cast<Eigen::Index>(std::llround(1.0 / step));
  const double dt = 1.0 / static_cast<double>(steps);
  const int d = problem.dim;
  const int n = problem.state_size();

  auto deriv = [&](const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz.head(n - d) = z.tail(n - d);
    problem.rhs(std::span<const double>(z.data(), static_cast<std::size_t>(n)),
                std::span<double>(dz.data() + (n - d), static_cast<std::size_t>(d)));
  };
  auto check = [&](double t, const Eigen::VectorXd& z) {
    if (!z.allFinite())
      throw NonFiniteState(problem.name + ": state became non-finite at t = " + std::to_string(t));
    if (problem.guard)
      problem.guard(t, std::span<const double>(z.data(), static_cast<std::size_t>(n)));
  };

  Eigen::MatrixXd states(n, steps + 1);
  Eigen::MatrixXd tops(d, steps + 1);
  Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(problem.init.data(), n);
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), tmp(n);
  check(0.0, z);
  for (Eigen::Index s = 0; s <= steps; ++s) {
    states.col(s) = z;
    deriv(z, k1);
    tops.col(s) = k1.tail(d);
    if (!tops.col(s).allFinite())
      throw NonFiniteState(problem.name + ": right-hand side non-finite");
    if (s == steps)
      break;
    tmp = z + 0.5 * dt * k1;
    deriv(tmp, k2);
    tmp = z + 0.5 * dt * k2;
    deriv(tmp, k3);
    tmp = z + dt * k3;
    deriv(tmp, k4);
    z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check(static_cast<double>(s + 1) * dt, z);
  }
  return DenseTrajectory(problem, dt, std::move(states), std::move(tops));
}

struct NoiseSpec
{
  std::vector<double> sigma;
  //! Uniform sampling t_i = i/n, i = 1..n, unless explicit times are given.
  std::vector<std::size_t> n;
  std::vector<std::vector<double>> times;
  std::uint64_t seed = 0;
};

//! y_ji = x_j(t_ji) + sigma_j * eps_ji with one RNG stream per component.
inline TimeSeriesPanel
observe(const DenseTrajectory& truth, const NoiseSpec& noise)
{
  const int d = truth.problem().dim;
  if (static_cast<int>(noise.sigma.size()) != d)
    throw InvalidDim("noise sigma must have one entry per component");
  if (noise.times.empty() && static_cast<int>(noise.n.size()) != d)
    throw InvalidDim("sample sizes must have one entry per component");
  TimeSeriesPanel panel(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (!(noise.sigma[ju] >= 0.0))
      throw ConfigError("noise sigma must be non-negative");
    auto& series = panel[ju];
    if (!noise.times.empty()) {
      series.times = noise.times[ju];
    } else {
      const std::size_t nj = noise.n[ju];
      if (nj < 2)
        throw ConfigError("sample size must be at least 2");
      series.times.resize(nj);
      for (std::size_t i = 0; i < nj; ++i)
        series.times[i] = static_cast<double>(i + 1) / static_cast<double>(nj);
    }
    RandomStream rng(noise.seed, streams::noise_base + static_cast<std::uint64_t>(j));
    series.values.resize(series.times.size());
    for (std::size_t i = 0; i < series.times.size(); ++i) {
      const double x = truth.value(0, j, series.times[i]);
      series.values[i] = noise.sigma[ju] > 0.0 ? x + noise.sigma[ju] * rng.normal() : x;
    }
  }
  validate(panel);
  return panel;
}

struct SimulatedData
{
  OdeProblem problem;
  TimeSeriesPanel panel;
  DenseTrajectory truth;
  NoiseSpec noise;
  //! Active input variables of each f_{0,j}.
  std::vector<std::vector<int>> active;
};

inline constexpr double truth_step = 1e-3;

struct LinearSystem
{
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

/// Sparse linear system x' = A x + b, x(0) = b. Every row of A has five
/// non-zero entries U(0,1) in columns drawn without replacement.
inline LinearSystem
design1_system(int d, std::uint64_t seed)
{
  if (d < 5)
    throw InvalidDim("design 1 requires d >= 5, got " + std::to_string(d));
  RandomStream rng(seed, streams::structure);
  LinearSystem sys{ Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d) };
  std::vector<int> cols(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    std::iota(cols.begin(), cols.end(), 0);
    // partial Fisher-Yates
    for (int k = 0; k < 5; ++k) {
      const auto pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - k)));
      std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pick)]);
    }
    for (int k = 0; k < 5; ++k)
      sys.a(i, cols[static_cast<std::size_t>(k)]) = rng.uniform();
  }
  for (int i = 0; i < d; ++i)
    sys.b(i) = rng.uniform();
  return sys;
}

inline OdeProblem
design1_problem(const LinearSystem& sys)
{
  OdeProblem p;
  p.name = "design1";
  p.order = 1;
  p.dim = static_cast<int>(sys.b.size());
  p.init.assign(sys.b.data(), sys.b.data() + sys.b.size());
  p.rhs = [a = sys.a, b = sys.b](std::span<const double> z, std::span<double> out) {
    const Eigen::Map<const Eigen::VectorXd> x(z.data(), static_cast<Eigen::Index>(z.size()));
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = a * x + b;
  };
  return p;
}

inline SimulatedData
make_design1(int d, std::size_t n, std::uint64_t seed, double sigma = 1.0)
{
  if (!(sigma >= 0.0))
    throw ConfigError("sigma must be non-negative");
  const auto sys = design1_system(d, seed);
  SimulatedData data;
  data.problem = design1_problem(sys);
  data.truth = integrate(data.problem, truth_step);
  data.noise.sigma.assign(static_cast<std::size_t>(d), sigma);
  data.noise.n.assign(static_cast<std::size_t>(d), n);
  data.noise.seed = seed;
  data.panel = observe(data.truth, data.noise);
  for (int i = 0; i < d; ++i) {
    std::vector<int> act;
    for (int j = 0; j < d; ++j)
      if (sys.a(i, j) != 0.0)
        act.push_back(j);
    data.active.push_back(std::move(act));
  }
  return data;
}

struct Design2Init
{
  std::array<double, 8> position{};
  std::array<double, 8> velocity{};
};

inline constexpr std::uint64_t design2_init_seed = 7;

//! x_j(0) ~ U(1,2), x_j'(0) ~ U(0,0.5) from a fixed seed.
inline Design2Init
default_design2_init(std::uint64_t seed = design2_init_seed)
{
  RandomStream rng(seed, streams::initial_conditions);
  Design2Init init;
  for (auto& x : init.position)
    x = rng.uniform(1.0, 2.0);
  for (auto& v : init.velocity)
    v = rng.uniform(0.0, 0.5);
  return init;
}

/// The eight-component second-order nonlinear system of simulation design 2.
inline OdeProblem
design2_problem(const Design2Init& init = default_design2_init())
{
  OdeProblem p;
  p.name = "design2";
  p.order = 2;
  p.dim = 8;
  p.init.assign(init.position.begin(), init.position.end());
  p.init.insert(p.init.end(), init.velocity.begin(), init.velocity.end());
  p.rhs = [](std::span<const double> z, std::span<double> out) {
    const double* x = z.data();
    const double* dx = z.data() + 8;
    out[0] = 2.0 * x[0] / x[2] + 4.0 * dx[3] - x[2] * x[3];
    out[1] = -dx[3];
    out[2] = 2.0;
    out[3] = dx[1];
    out[4] = x[4];
    out[5] = -x[4] * x[4] * x[5] + dx[5];
    out[6] = dx[6] * dx[1] - x[1] * x[6];
    out[7] = -dx[7] * dx[7];
  };
  p.guard = [](double t, std::span<const double> z) {
    if (std::abs(z[2]) < 0.1)
      throw NonFiniteState("design2: |x3| fell below 0.1 at t = " + std::to_string(t));
  };
  return p;
}

inline std::vector<std::vector<int>>
design2_active()
{
  // indices into the stacked state (x_1..x_8, x_1'..x_8')
  return { { 0, 2, 3, 11 }, { 11 }, {}, { 9 }, { 4 }, { 4, 5, 13 }, { 1, 6, 9, 14 }, { 15 } };
}

inline SimulatedData
make_design2(std::size_t n, double sigma, std::uint64_t seed, const Design2Init& init = default_design2_init())
{
  if (!(sigma >= 0.0))
    throw ConfigError("sigma must be non-negative");
  SimulatedData data;
  data.problem = design2_problem(init);
  data.truth = integrate(data.problem, truth_step);
  data.noise.sigma.assign(8, sigma);
  data.noise.n.assign(8, n);
  data.noise.seed = seed;
  data.panel = observe(data.truth, data.noise);
  data.active = design2_active();
  return data;
}

} // namespace odecal
