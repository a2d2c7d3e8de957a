#pragma once

#include "errors.hpp"
#include "polynomial.hpp"
#include "quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <string>
#include <vector>

namespace odecal {

/// Polynomial derivative kernel K_{kappa,q} on [-tau, q*tau] (or the mirrored
/// support [-q*tau, tau]) satisfying
///
///   int K(x) x^j dx = 0            for j < k, j != kappa
///   int K(x) x^kappa dx = (-1)^kappa kappa!
///
/// and vanishing together with its first kappa derivatives at both ends of
/// the support. Internally the polynomial is stored in the standardized
/// variable u = (x - center) / half_width, u in [-1, 1].
class BoundaryKernel
{
public:
  int deriv_order() const noexcept { return deriv_; }
  int moment_order() const noexcept { return moment_; }
  double q() const noexcept { return q_; }
  double support_radius() const noexcept { return tau_; }
  bool mirrored() const noexcept { return mirrored_; }
  double lower() const noexcept { return center_ - half_; }
  double upper() const noexcept { return center_ + half_; }
  int degree() const noexcept { return static_cast<int>(coeffs_u_.size()) - 1; }

  //! The free moment of order k, int K(x) x^k dx.
  double beta() const noexcept { return beta_; }

  double operator()(double x) const
  {
    if (x < lower() || x > upper())
      return 0.0;
    return poly::evaluate(coeffs_u_, (x - center_) / half_);
  }

  //! Integral of K over [a, b] from the closed-form antiderivative.
  double integral(double a, double b) const
  {
    return primitive(b) - primitive(a);
  }

  //! int_{lower}^{x} K, constant outside the support.
  double primitive(double x) const
  {
    const double u = std::clamp((x - center_) / half_, -1.0, 1.0);
    return half_ * (poly::evaluate(antideriv_u_, u) - antideriv_at_lower_);
  }

  //! Monomial coefficients in x.
  std::vector<double> coefficients() const
  {
    return poly::compose_affine(coeffs_u_, -center_ / half_, 1.0 / half_);
  }

  //! K~(x) = (-1)^kappa K(-x); same moment identities, support reflected.
  BoundaryKernel mirror() const
  {
    BoundaryKernel m = *this;
    m.mirrored_ = !mirrored_;
    m.center_ = -center_;
    const double sign = (deriv_ % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < m.coeffs_u_.size(); ++i)
      m.coeffs_u_[i] *= (i % 2 == 0 ? sign : -sign);
    m.finish();
    return m;
  }

private:
  friend BoundaryKernel build_kernel(int, int, double, double);

  void finish()
  {
    antideriv_u_ = poly::antiderivative(coeffs_u_);
    antideriv_at_lower_ = poly::evaluate(antideriv_u_, -1.0);
    beta_ = moment(moment_);
  }

  double moment(int j) const
  {
    const int points = (degree() + j) / 2 + 2;
    const auto rule = quad::gauss_legendre(points, lower(), upper());
    return rule.integrate(
      [&](double x) { return (*this)(x) * std::pow(x, static_cast<double>(j)); });
  }

  int deriv_ = 0;
  int moment_ = 2;
  double q_ = 1.0;
  double tau_ = 1.0;
  bool mirrored_ = false;
  double center_ = 0.0;
  double half_ = 1.0;
  std::vector<double> coeffs_u_;
  std::vector<double> antideriv_u_;
  double antideriv_at_lower_ = 0.0;
  double beta_ = 0.0;
};

namespace detail {

inline double
factorial(int n)
{
  double r = 1.0;
  for (int i = 2; i <= n; ++i)
    r *= i;
  return r;
}

} // namespace detail

/// Minimal-degree boundary kernel of derivative order kappa and moment order
/// k on [-tau, q*tau]. The polynomial has degree k + 2*kappa + 1: k moment
/// rows plus kappa+1 vanishing conditions at each endpoint.
inline BoundaryKernel
build_kernel(int kappa, int k, double q, double tau = 1.0)
{
  if (kappa < 0 || k < kappa + 2)
    throw InvalidOrder("need k >= kappa + 2 (kappa=" + std::to_string(kappa) +
                       ", k=" + std::to_string(k) + ")");
  if (!(q >= 0.0 && q <= 1.0))
    throw InvalidOrder("boundary factor q must lie in [0, 1], got " +
                       std::to_string(q));
  if (!(tau > 0.0))
    throw InvalidOrder("support radius must be positive");

  const double center = 0.5 * tau * (q - 1.0);
  const double half = 0.5 * tau * (1.0 + q);
  const double xi = -center / half;
  const int dim = k + 2 * (kappa + 1);

  // Unknowns are Legendre coefficients b_m of P(u) = sum b_m P_m(u).
  std::vector<std::vector<double>> legendre(static_cast<std::size_t>(dim));
  for (int m = 0; m < dim; ++m)
    legendre[static_cast<std::size_t>(m)] = poly::legendre(m);

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);

  // Testing K against P_i(u(x)), i < k, turns the x^j moment identities into
  //   half * b_i * 2/(2i+1) = (-1)^kappa P_i^(kappa)(xi) / half^kappa.
  const double sign = (kappa % 2 == 0) ? 1.0 : -1.0;
  for (int i = 0; i < k; ++i) {
    system(i, i) = half * 2.0 / (2.0 * i + 1.0);
    const auto d = poly::derivative(legendre[static_cast<std::size_t>(i)], kappa);
    rhs(i) = sign * poly::evaluate(d, xi) / std::pow(half, kappa);
  }
  int row = k;
  for (int r = 0; r <= kappa; ++r) {
    for (const double end : { -1.0, 1.0 }) {
      for (int m = 0; m < dim; ++m) {
        const auto d = poly::derivative(legendre[static_cast<std::size_t>(m)], r);
        system(row, m) = poly::evaluate(d, end);
      }
      ++row;
    }
  }
  for (int i = 0; i < dim; ++i) {
    const double scale = system.row(i).cwiseAbs().maxCoeff();
    if (scale > 0.0) {
      system.row(i) /= scale;
      rhs(i) /= scale;
    }
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(system,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                              : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12))
    throw SingularMomentSystem("condition number " + std::to_string(cond) +
                               " for kappa=" + std::to_string(kappa) +
                               ", k=" + std::to_string(k) +
                               ", q=" + std::to_string(q));
  const Eigen::VectorXd b = svd.solve(rhs);

  BoundaryKernel kernel;
  kernel.deriv_ = kappa;
  kernel.moment_ = k;
  kernel.q_ = q;
  kernel.tau_ = tau;
  kernel.center_ = center;
  kernel.half_ = half;
  kernel.coeffs_u_.assign(static_cast<std::size_t>(dim), 0.0);
  for (int m = 0; m < dim; ++m) {
    const auto& lp = legendre[static_cast<std::size_t>(m)];
    for (std::size_t i = 0; i < lp.size(); ++i)
      kernel.coeffs_u_[i] += b(m) * lp[i];
  }
  kernel.finish();
  return kernel;
}

inline double
eval_kernel(const BoundaryKernel& kernel, double x)
{
  return kernel(x);
}

//! int x^j K(x) dx by Gauss-Legendre, exact for the polynomial degree.
inline double
kernel_moment(const BoundaryKernel& kernel, int j)
{
  if (j < 0)
    throw InvalidOrder("moment index must be non-negative");
  const int points = (kernel.degree() + j) / 2 + 2;
  const auto rule = quad::gauss_legendre(points, kernel.lower(), kernel.upper());
  return rule.integrate(
    [&](double x) { return kernel(x) * std::pow(x, static_cast<double>(j)); });
}

/// Kernels K_{kappa,q} for kappa = 0..max_deriv, precomputed on the q-grid
/// {0, 0.01, ..., 0.99} for both boundaries plus the interior kernel q = 1.
/// Immutable after construction.
class KernelFamily
{
public:
  static constexpr int q_steps = 100;

  KernelFamily(int max_deriv, int moment_order, double tau = 1.0)
    : max_deriv_(max_deriv)
    , moment_order_(moment_order)
    , tau_(tau)
  {
    if (max_deriv < 0 || moment_order < max_deriv + 2)
      throw InvalidOrder("need moment order k >= max_deriv + 2");
    for (int kappa = 0; kappa <= max_deriv; ++kappa) {
      Orders o;
      o.interior = build_kernel(kappa, moment_order, 1.0, tau);
      for (int i = 0; i < q_steps; ++i) {
        o.left.push_back(build_kernel(kappa, moment_order, i / double(q_steps), tau));
        o.right.push_back(o.left.back().mirror());
      }
      orders_.push_back(std::move(o));
    }
  }

  int max_deriv() const noexcept { return max_deriv_; }
  int moment_order() const noexcept { return moment_order_; }
  double support_radius() const noexcept { return tau_; }

  const BoundaryKernel& interior(int kappa) const { return at(kappa).interior; }

  /// Kernel used at time t in [0, 1] with bandwidth h. Within tau*h of 0 the
  /// support is shrunk to [-tau, q*tau] with q = t/(tau*h); near 1 the
  /// mirrored kernel is used. q is rounded down to the 0.01 grid so the
  /// support never leaves the design interval.
  const BoundaryKernel& select(int kappa, double t, double h) const
  {
    const double reach = tau_ * h;
    if (!(reach < 0.5))
      throw BandwidthTooLarge("h * tau = " + std::to_string(reach) +
                              " must be below 1/2");
    const auto& o = at(kappa);
    if (t < reach) {
      const auto idx = static_cast<int>(std::floor(t / reach * q_steps));
      return idx >= q_steps ? o.interior : o.left[static_cast<std::size_t>(std::max(idx, 0))];
    }
    if (t > 1.0 - reach) {
      const auto idx = static_cast<int>(std::floor((1.0 - t) / reach * q_steps));
      return idx >= q_steps ? o.interior : o.right[static_cast<std::size_t>(std::max(idx, 0))];
    }
    return o.interior;
  }

private:
  struct Orders
  {
    BoundaryKernel interior;
    std::vector<BoundaryKernel> left;
    std::vector<BoundaryKernel> right;
  };

  const Orders& at(int kappa) const
  {
    if (kappa < 0 || kappa > max_deriv_)
      throw InvalidOrder("derivative order " + std::to_string(kappa) +
                         " outside family range");
    return orders_[static_cast<std::size_t>(kappa)];
  }

  int max_deriv_;
  int moment_order_;
  double tau_;
  std::vector<Orders> orders_;
};

} // namespace odecal
