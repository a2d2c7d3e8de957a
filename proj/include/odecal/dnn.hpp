#pragma once

#include "errors.hpp"
#include "quadrature.hpp"
#include "random.hpp"
#include "smoother.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace odecal {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class NetClass
{
  F1,
  F2
};

/// F1: every layer satisfies ||W_l||_inf + |v_l|_inf <= 1 (v_0 = 0).
/// F2: additionally at most `sparsity_budget` non-zero parameters and outputs
/// clamped to [-sup_bound, sup_bound].
struct ClassSpec
{
  NetClass id = NetClass::F1;
  std::size_t sparsity_budget = 0;
  double sup_bound = std::numeric_limits<double>::infinity();
};

/// f(z) = W_L s_{v_L} ... W_1 s_{v_1} W_0 z with s_v(x) = max(x - v, 0).
///
/// All parameters live in one flat vector laid out as
///   W_0, v_1, W_1, v_2, ..., v_L, W_L
/// with each W_l (p_{l+1} x p_l) stored row-major.
class ReluNetwork
{
public:
  ReluNetwork() = default;

  explicit ReluNetwork(std::vector<int> widths)
    : widths_(std::move(widths))
  {
    if (widths_.size() < 3)
      throw ShapeMismatch("network needs at least one hidden layer (L >= 1)");
    for (const int w : widths_)
      if (w <= 0)
        throw ShapeMismatch("layer widths must be positive");
    std::size_t offset = 0;
    for (int l = 0; l <= depth(); ++l) {
      if (l > 0) {
        shift_offset_.push_back(offset);
        offset += static_cast<std::size_t>(width(l));
      }
      weight_offset_.push_back(offset);
      offset += static_cast<std::size_t>(width(l + 1)) * static_cast<std::size_t>(width(l));
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  }

  //! Number of hidden layers L.
  int depth() const { return static_cast<int>(widths_.size()) - 2; }
  int width(int l) const { return widths_[static_cast<std::size_t>(l)]; }
  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  Eigen::Index parameter_count() const { return params_.size(); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::Map<RowMatrix> weight(int l)
  {
    return { params_.data() + weight_offset_.at(static_cast<std::size_t>(l)), width(l + 1), width(l) };
  }
  Eigen::Map<const RowMatrix> weight(int l) const
  {
    return { params_.data() + weight_offset_.at(static_cast<std::size_t>(l)), width(l + 1), width(l) };
  }
  //! Shift vector v_l, l in 1..L.
  Eigen::Map<Eigen::VectorXd> shift(int l)
  {
    return { params_.data() + shift_offset_.at(static_cast<std::size_t>(l - 1)), width(l) };
  }
  Eigen::Map<const Eigen::VectorXd> shift(int l) const
  {
    return { params_.data() + shift_offset_.at(static_cast<std::size_t>(l - 1)), width(l) };
  }

  //! Gradient-shaped views over an arbitrary vector with this layout.
  Eigen::Map<RowMatrix> weight_in(Eigen::VectorXd& flat, int l) const
  {
    return { flat.data() + weight_offset_.at(static_cast<std::size_t>(l)), width(l + 1), width(l) };
  }
  Eigen::Map<Eigen::VectorXd> shift_in(Eigen::VectorXd& flat, int l) const
  {
    return { flat.data() + shift_offset_.at(static_cast<std::size_t>(l - 1)), width(l) };
  }

  //! ||W_l||_inf + |v_l|_inf (v_0 = 0).
  double layer_norm(int l) const
  {
    double n = weight(l).cwiseAbs().maxCoeff();
    if (l > 0)
      n += shift(l).cwiseAbs().maxCoeff();
    return n;
  }

  std::size_t nonzeros() const
  {
    return static_cast<std::size_t>((params_.array() != 0.0).count());
  }

  //! Set for F2 networks: outputs are clamped to [-bound, bound].
  std::optional<double> output_bound;

private:
  std::vector<int> widths_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> shift_offset_;
  Eigen::VectorXd params_;
};

namespace detail {

struct ForwardPass
{
  std::vector<Eigen::MatrixXd> pre;    // pre[l] = W_{l-1} h_{l-1}, l = 1..L+1
  std::vector<Eigen::MatrixXd> hidden; // hidden[l] = s_{v_l}(pre[l]), l = 1..L
  Eigen::MatrixXd output;
};

inline ForwardPass
run_forward(const ReluNetwork& net, const Eigen::MatrixXd& z)
{
  if (z.rows() != net.input_dim())
    throw ShapeMismatch("input has " + std::to_string(z.rows()) + " rows, network expects " +
                        std::to_string(net.input_dim()));
  const int L = net.depth();
  ForwardPass fp;
  fp.pre.resize(static_cast<std::size_t>(L) + 2);
  fp.hidden.resize(static_cast<std::size_t>(L) + 1);
  fp.pre[1].noalias() = net.weight(0) * z;
  for (int l = 1; l <= L; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    fp.hidden[lu] = (fp.pre[lu].colwise() - net.shift(l)).cwiseMax(0.0);
    fp.pre[lu + 1].noalias() = net.weight(l) * fp.hidden[lu];
  }
  fp.output = fp.pre[static_cast<std::size_t>(L) + 1];
  if (net.output_bound)
    fp.output = fp.output.cwiseMax(-*net.output_bound).cwiseMin(*net.output_bound);
  return fp;
}

} // namespace detail

//! Column-wise forward pass over an r0 x T input matrix.
inline Eigen::MatrixXd
forward(const ReluNetwork& net, const Eigen::MatrixXd& z)
{
  if (!z.allFinite())
    throw ShapeMismatch("non-finite network input");
  return detail::run_forward(net, z).output;
}

inline Eigen::VectorXd
forward(const ReluNetwork& net, const Eigen::VectorXd& z)
{
  return forward(net, Eigen::MatrixXd(z)).col(0);
}

/// Rescales each layer pair (W_l, v_l) jointly so ||W_l||_inf + |v_l|_inf <= 1.
/// For F2, keeps the sparsity_budget largest-magnitude parameters, zeroes the
/// rest and installs the output clamp.
inline ReluNetwork
project(ReluNetwork net, const ClassSpec& spec)
{
  for (int l = 0; l <= net.depth(); ++l) {
    for (double norm = net.layer_norm(l); norm > 1.0; norm = net.layer_norm(l)) {
      const double s = std::min(1.0 / norm, std::nextafter(1.0, 0.0));
      net.weight(l) *= s;
      if (l > 0)
        net.shift(l) *= s;
    }
  }
  if (spec.id == NetClass::F2) {
    auto& p = net.parameters();
    const auto count = static_cast<std::size_t>(p.size());
    if (spec.sparsity_budget < count) {
      std::vector<Eigen::Index> order(count);
      std::iota(order.begin(), order.end(), Eigen::Index{ 0 });
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(p(a)) > std::abs(p(b));
      });
      for (std::size_t i = spec.sparsity_budget; i < count; ++i)
        p(order[i]) = 0.0;
    }
    net.output_bound = spec.sup_bound;
  }
  return net;
}

/// Inputs z(t) = (x, ..., x^(nu-1)) and targets x^(nu)(t) on a quadrature grid
/// with trapezoid weights.
struct RegressionData
{
  std::vector<double> grid;
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  Eigen::VectorXd weights;

  RegressionData() = default;

  RegressionData(std::vector<double> g, Eigen::MatrixXd in, Eigen::MatrixXd out)
    : grid(std::move(g))
    , inputs(std::move(in))
    , targets(std::move(out))
  {
    const auto t = static_cast<Eigen::Index>(grid.size());
    if (inputs.cols() != t || targets.cols() != t)
      throw ShapeMismatch("inputs/targets must have one column per grid point");
    const auto w = quad::trapezoid_weights(grid);
    weights = Eigen::Map<const Eigen::VectorXd>(w.data(), t);
  }

  static RegressionData from_estimate(const TrajectoryEstimate& est, int order)
  {
    if (est.max_deriv() < order)
      throw ShapeMismatch("estimate lacks derivative order " + std::to_string(order));
    return { est.grid, est.stacked(order), est.derivs[static_cast<std::size_t>(order)] };
  }
};

namespace detail {

inline void
check_shapes(const ReluNetwork& net, const RegressionData& data)
{
  if (data.inputs.rows() != net.input_dim() || data.targets.rows() != net.output_dim())
    throw ShapeMismatch("data is " + std::to_string(data.inputs.rows()) + " -> " +
                        std::to_string(data.targets.rows()) + ", network is " +
                        std::to_string(net.input_dim()) + " -> " + std::to_string(net.output_dim()));
  if (data.inputs.cols() != data.targets.cols() ||
      data.weights.size() != data.inputs.cols())
    throw ShapeMismatch("grid sizes do not match");
}

} // namespace detail

//! Trapezoid approximation of int_0^1 ||target(t) - f(z(t))||^2 dt.
inline double
loss(const ReluNetwork& net, const RegressionData& data)
{
  detail::check_shapes(net, data);
  const Eigen::MatrixXd r = forward(net, data.inputs) - data.targets;
  return r.colwise().squaredNorm().dot(data.weights.transpose());
}

struct LossGradient
{
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

//! Reverse-mode gradient of loss(); ReLU and clamp kinks get subgradient 0.
inline LossGradient
grad(const ReluNetwork& net, const RegressionData& data)
{
  detail::check_shapes(net, data);
  const auto fp = detail::run_forward(net, data.inputs);
  const Eigen::MatrixXd residual = fp.output - data.targets;

  LossGradient out;
  out.loss = residual.colwise().squaredNorm().dot(data.weights.transpose());
  out.gradient = Eigen::VectorXd::Zero(net.parameter_count());

  const int L = net.depth();
  Eigen::MatrixXd delta = 2.0 * residual * data.weights.asDiagonal();
  if (net.output_bound) {
    const auto& raw = fp.pre[static_cast<std::size_t>(L) + 1];
    delta = (raw.array().abs() < *net.output_bound).select(delta, 0.0);
  }
  for (int l = L; l >= 1; --l) {
    const auto lu = static_cast<std::size_t>(l);
    net.weight_in(out.gradient, l).noalias() = delta * fp.hidden[lu].transpose();
    Eigen::MatrixXd back = net.weight(l).transpose() * delta;
    back = (fp.hidden[lu].array() > 0.0).select(back, 0.0);
    net.shift_in(out.gradient, l) = -back.rowwise().sum();
    delta = std::move(back);
  }
  net.weight_in(out.gradient, 0).noalias() = delta * data.inputs.transpose();
  return out;
}

struct TrainConfig
{
  //! Hidden widths p_1..p_L; input and output widths come from the data.
  std::vector<int> hidden{ 64, 64, 64 };
  std::size_t epochs = 2000;
  double learning_rate = 1e-2;
  bool cosine_decay = true;
  //! F2 magnitude pruning happens after this fraction of the epochs.
  double prune_at = 0.6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  //! Minimum quadrature grid size accepted for training.
  std::size_t min_grid = 32;

  void validate() const
  {
    if (epochs < 1)
      throw ConfigError("epochs must be at least 1");
    if (hidden.empty())
      throw ConfigError("need at least one hidden layer");
    for (const int w : hidden)
      if (w <= 0)
        throw ConfigError("hidden widths must be positive");
    if (!(learning_rate > 0.0))
      throw ConfigError("learning_rate must be positive");
    if (!(prune_at >= 0.0 && prune_at <= 1.0))
      throw ConfigError("prune_at must lie in [0, 1]");
  }
};

inline std::vector<int>
network_widths(int inputs, const std::vector<int>& hidden, int outputs)
{
  std::vector<int> w{ inputs };
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(outputs);
  return w;
}

//! Symmetric uniform weights scaled by fan-in, zero shifts, then projected.
inline ReluNetwork
initialize(const std::vector<int>& widths, std::uint64_t seed, const ClassSpec& spec)
{
  ReluNetwork net(widths);
  RandomStream rng(seed, streams::network_init);
  for (int l = 0; l <= net.depth(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.width(l)));
    auto w = net.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = rng.uniform(-bound, bound);
  }
  ClassSpec box = spec;
  box.id = NetClass::F1;
  net = project(std::move(net), box);
  if (spec.id == NetClass::F2)
    net.output_bound = spec.sup_bound;
  return net;
}

struct TrainResult
{
  ReluNetwork net;
  double loss = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> history;
};

/// Projected Adam on the trapezoid loss. Each step is followed by the F1
/// rescaling; under F2 the network is magnitude-pruned once at prune_at and
/// then fine-tuned with the sparsity mask frozen. Returns the lowest-loss
/// iterate among those that belong to the requested class.
inline TrainResult
train(const RegressionData& data, const ClassSpec& spec, const TrainConfig& cfg)
{
  cfg.validate();
  if (static_cast<std::size_t>(data.inputs.cols()) < cfg.min_grid)
    throw ConfigError("quadrature grid needs at least " + std::to_string(cfg.min_grid) + " points");
  if (spec.id == NetClass::F2 && !(spec.sup_bound > 0.0))
    throw ConfigError("F2 sup bound must be positive");

  const auto widths = network_widths(static_cast<int>(data.inputs.rows()), cfg.hidden,
                                     static_cast<int>(data.targets.rows()));
  ReluNetwork net = initialize(widths, cfg.seed, spec);
  const Eigen::Index p = net.parameter_count();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(p);

  const bool sparse = spec.id == NetClass::F2;
  const auto prune_epoch = static_cast<std::size_t>(std::floor(cfg.prune_at * static_cast<double>(cfg.epochs)));
  bool pruned = false;

  TrainResult result;
  result.loss = std::numeric_limits<double>::infinity();
  result.history.reserve(cfg.epochs + 1);

  auto consider = [&](double value, std::size_t epoch) {
    if (!std::isfinite(value))
      throw Diverged("loss became non-finite at epoch " + std::to_string(epoch));
    result.history.push_back(value);
    if ((!sparse || pruned) && value < result.loss) {
      result.loss = value;
      result.net = net;
      result.best_epoch = epoch;
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (sparse && !pruned && epoch == prune_epoch) {
      net = project(std::move(net), spec);
      mask = (net.parameters().array() != 0.0).cast<double>();
      m.array() *= mask.array();
      v.array() *= mask.array();
      pruned = true;
    }
    const auto lg = grad(net, data);
    consider(lg.loss, epoch);

    double lr = cfg.learning_rate;
    if (cfg.cosine_decay)
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));
    const Eigen::VectorXd g = lg.gradient.cwiseProduct(mask);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(epoch + 1));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(epoch + 1));
    const Eigen::VectorXd step =
      (lr / c1) * m.array() / ((v.array() / c2).sqrt() + cfg.epsilon);
    net.parameters() -= step.cwiseProduct(mask);
    ClassSpec box = spec;
    box.id = NetClass::F1;
    const auto bound = net.output_bound;
    net = project(std::move(net), box);
    net.output_bound = bound;
  }
  if (sparse && !pruned) {
    net = project(std::move(net), spec);
    pruned = true;
  }
  consider(loss(net, data), cfg.epochs);
  return result;
}

/// Stage-2 settings on top of TrainConfig. Unless given explicitly, the F2
/// budget is a fraction of the parameter count and the sup bound a multiple
/// of the largest target magnitude.
struct FitConfig
{
  TrainConfig train;
  NetClass net_class = NetClass::F2;
  std::optional<std::size_t> sparsity_budget;
  double sparsity_fraction = 0.5;
  std::optional<double> sup_bound;
  double sup_bound_factor = 2.0;

  void validate() const
  {
    train.validate();
    if (!(sparsity_fraction > 0.0 && sparsity_fraction <= 1.0))
      throw ConfigError("sparsity_fraction must lie in (0, 1]");
    if (sparsity_budget && *sparsity_budget == 0)
      throw ConfigError("sparsity_budget must be positive");
    if (sup_bound && !(*sup_bound > 0.0))
      throw ConfigError("sup_bound must be positive");
    if (!(sup_bound_factor > 0.0))
      throw ConfigError("sup_bound_factor must be positive");
  }
};

inline ClassSpec
class_spec(const FitConfig& cfg, const RegressionData& data)
{
  ClassSpec spec;
  spec.id = cfg.net_class;
  if (spec.id == NetClass::F1)
    return spec;
  const ReluNetwork shape(network_widths(static_cast<int>(data.inputs.rows()), cfg.train.hidden,
                                         static_cast<int>(data.targets.rows())));
  const auto count = static_cast<double>(shape.parameter_count());
  spec.sparsity_budget = cfg.sparsity_budget
                           ? *cfg.sparsity_budget
                           : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.sparsity_fraction * count)));
  if (cfg.sup_bound) {
    spec.sup_bound = *cfg.sup_bound;
  } else {
    const double top = data.targets.size() ? data.targets.cwiseAbs().maxCoeff() : 0.0;
    spec.sup_bound = cfg.sup_bound_factor * std::max(top, 1e-12);
  }
  return spec;
}

struct FitResult
{
  ClassSpec spec;
  TrainResult train;
};

inline FitResult
fit_rhs(const RegressionData& data, const FitConfig& cfg)
{
  cfg.validate();
  FitResult out;
  out.spec = class_spec(cfg, data);
  out.train = train(data, out.spec, cfg.train);
  return out;
}

} // namespace odecal
