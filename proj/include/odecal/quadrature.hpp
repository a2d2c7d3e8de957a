#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace odecal::quad {

struct Rule
{
  std::vector<double> nodes;
  std::vector<double> weights;

  template<class F>
  double integrate(F&& f) const
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

//! Gauss-Legendre rule with n points on [a, b]; exact for degree <= 2n-1.
inline Rule
gauss_legendre(int n, double a = -1.0, double b = 1.0)
{
  if (n < 1)
    throw std::invalid_argument("gauss_legendre: n must be positive");
  Rule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      dp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15)
        break;
    }
    {
      // refresh dp at the converged node
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      dp = n * (z * p1 - p2) / (z * z - 1.0);
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = mid - half * z;
    rule.nodes[hi] = mid + half * z;
    rule.weights[lo] = half * w;
    rule.weights[hi] = half * w;
  }
  return rule;
}

inline std::vector<double>
uniform_grid(std::size_t points, double a = 0.0, double b = 1.0)
{
  if (points < 2)
    throw std::invalid_argument("uniform_grid: need at least two points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
  g.back() = b;
  return g;
}

//! Trapezoid weights for an arbitrary increasing grid.
inline std::vector<double>
trapezoid_weights(std::span<const double> grid)
{
  std::vector<double> w(grid.size(), 0.0);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double dt = 0.5 * (grid[i] - grid[i - 1]);
    w[i - 1] += dt;
    w[i] += dt;
  }
  return w;
}

inline double
trapezoid(std::span<const double> grid, std::span<const double> values)
{
  if (grid.size() != values.size())
    throw std::invalid_argument("trapezoid: grid/value size mismatch");
  double acc = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
  return acc;
}

} // namespace odecal::quad
