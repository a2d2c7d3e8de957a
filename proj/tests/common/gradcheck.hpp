#pragma once

#include "odecal/dnn.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace odecal::fixtures {

//! Random F1 network with random shifts plus random regression data.
inline std::pair<ReluNetwork, RegressionData>
random_problem(std::uint64_t seed, std::vector<int> widths, std::size_t points = 40)
{
  ReluNetwork net(widths);
  RandomStream rng(seed, 7);
  auto& p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p(i) = rng.uniform(-0.6, 0.6);
  std::vector<double> grid(points);
  Eigen::MatrixXd z(widths.front(), static_cast<Eigen::Index>(points));
  Eigen::MatrixXd y(widths.back(), static_cast<Eigen::Index>(points));
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      z(r, static_cast<Eigen::Index>(i)) = rng.normal();
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      y(r, static_cast<Eigen::Index>(i)) = rng.normal();
  }
  return { std::move(net), RegressionData(std::move(grid), std::move(z), std::move(y)) };
}

//! Sign pattern of every hidden pre-activation relative to its shift.
inline std::vector<bool>
activation_pattern(const ReluNetwork& net, const Eigen::MatrixXd& z)
{
  std::vector<bool> out;
  Eigen::MatrixXd a = net.weight(0) * z;
  for (int l = 1; l <= net.depth(); ++l) {
    const Eigen::MatrixXd h = (a.colwise() - net.shift(l)).cwiseMax(0.0);
    for (Eigen::Index i = 0; i < h.size(); ++i)
      out.push_back(h.data()[i] > 0.0);
    a = net.weight(l) * h;
  }
  return out;
}

struct GradCheck
{
  std::size_t checked = 0;
  double worst = 0.0;
};

/// Compares grad() with central differences (step 1e-5) on `coords` random
/// coordinates whose perturbation leaves the activation pattern unchanged.
inline GradCheck
check_gradient(const ReluNetwork& net, const RegressionData& data, std::size_t coords, std::uint64_t seed)
{
  const auto g = grad(net, data).gradient;
  const auto base = activation_pattern(net, data.inputs);
  RandomStream rng(seed, 8);
  GradCheck out;
  const double step = 1e-5;
  for (std::size_t tries = 0; out.checked < coords && tries < 20 * coords; ++tries) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(net.parameter_count())));
    ReluNetwork up = net, down = net;
    up.parameters()(i) += step;
    down.parameters()(i) -= step;
    if (activation_pattern(up, data.inputs) != base || activation_pattern(down, data.inputs) != base)
      continue;
    const double fd = (loss(up, data) - loss(down, data)) / (2.0 * step);
    const double scale = std::max({ std::abs(fd), std::abs(g(i)), 1e-6 });
    out.worst = std::max(out.worst, std::abs(fd - g(i)) / scale);
    ++out.checked;
  }
  return out;
}

} // namespace odecal::fixtures
