#include "odecal/kernels.hpp"
#include "odecal/polynomial.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace odecal;

namespace {

// Composite Simpson rule with `panels` (even) subintervals.
double
simpson(const std::function<double(double)>& f, double a, double b, int panels = 10000)
{
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i)
    s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

double
simpson_moment(const BoundaryKernel& k, int j)
{
  return simpson([&](double x) { return k(x) * std::pow(x, j); }, k.lower(), k.upper());
}

double
target_moment(int kappa, int j)
{
  if (j != kappa)
    return 0.0;
  return (kappa % 2 ? -1.0 : 1.0) * detail::factorial(kappa);
}

} // namespace

TEST(Kernels, SecondOrderInteriorKernelIsEpanechnikov)
{
  const auto k = build_kernel(0, 2, 1.0);
  EXPECT_EQ(k.degree(), 3);
  EXPECT_NEAR(k.coefficients()[3], 0.0, 1e-12);
  for (double x : { -0.9, -0.3, 0.0, 0.4, 0.75 })
    EXPECT_NEAR(k(x), 0.75 * (1.0 - x * x), 1e-13);
  EXPECT_NEAR(simpson_moment(k, 0), 1.0, 1e-10);
  EXPECT_NEAR(simpson_moment(k, 1), 0.0, 1e-10);
  EXPECT_NEAR(k(-1.0), 0.0, 1e-10);
  EXPECT_NEAR(k(1.0), 0.0, 1e-10);
  EXPECT_GT(eval_kernel(k, 0.0), 0.0);
}

TEST(Kernels, FirstDerivativeKernelMoments)
{
  const auto k = build_kernel(1, 3, 1.0);
  EXPECT_NEAR(kernel_moment(k, 0), 0.0, 1e-12);
  EXPECT_NEAR(kernel_moment(k, 1), -1.0, 1e-12);
  EXPECT_NEAR(kernel_moment(k, 2), 0.0, 1e-12);
  EXPECT_NEAR(simpson_moment(k, 0), 0.0, 1e-10);
  EXPECT_NEAR(simpson_moment(k, 1), -1.0, 1e-10);
  EXPECT_NEAR(simpson_moment(k, 2), 0.0, 1e-10);
}

TEST(Kernels, ShrunkSupportKeepsMoments)
{
  const auto k = build_kernel(0, 2, 0.5);
  EXPECT_DOUBLE_EQ(k.lower(), -1.0);
  EXPECT_DOUBLE_EQ(k.upper(), 0.5);
  EXPECT_NEAR(simpson_moment(k, 0), 1.0, 1e-9);
  EXPECT_NEAR(simpson_moment(k, 1), 0.0, 1e-9);
  EXPECT_EQ(k(0.6), 0.0);
  EXPECT_EQ(k(-1.1), 0.0);
}

TEST(Kernels, MomentIdentitiesOnTestGrid)
{
  for (int kappa = 0; kappa <= 2; ++kappa)
    for (int k = kappa + 2; k <= kappa + 3; ++k)
      for (double q : { 0.3, 0.6, 1.0 }) {
        const auto K = build_kernel(kappa, k, q);
        for (int j = 0; j < k; ++j) {
          SCOPED_TRACE(testing::Message() << "kappa=" << kappa << " k=" << k << " q=" << q << " j=" << j);
          EXPECT_NEAR(kernel_moment(K, j), target_moment(kappa, j), 1e-8);
          EXPECT_NEAR(simpson_moment(K, j), target_moment(kappa, j), 1e-8);
        }
      }
}

TEST(Kernels, KernelAndDerivativesVanishAtEndpoints)
{
  for (int kappa = 0; kappa <= 2; ++kappa)
    for (double q : { 0.0, 0.3, 1.0 }) {
      const auto K = build_kernel(kappa, kappa + 2, q);
      const auto c = K.coefficients();
      for (int r = 0; r <= kappa; ++r) {
        const auto dc = poly::derivative(c, r);
        const double scale = 1.0 + std::abs(poly::evaluate(dc, 0.5 * (K.lower() + K.upper())));
        EXPECT_NEAR(poly::evaluate(dc, K.lower()) / scale, 0.0, 1e-9) << kappa << ' ' << q << ' ' << r;
        EXPECT_NEAR(poly::evaluate(dc, K.upper()) / scale, 0.0, 1e-9) << kappa << ' ' << q << ' ' << r;
      }
      EXPECT_LE(std::abs(K(K.lower())), 1e-10 * (1.0 + std::abs(K.beta())));
      EXPECT_EQ(K(-2.0), 0.0);
    }
}

TEST(Kernels, EndpointValueWithinTolerance)
{
  for (int kappa = 0; kappa <= 2; ++kappa)
    for (double q : { 0.25, 0.5, 1.0 }) {
      const auto K = build_kernel(kappa, kappa + 3, q);
      EXPECT_LE(std::abs(eval_kernel(K, q)), 1e-10);
      EXPECT_LE(std::abs(eval_kernel(K, -1.0)), 1e-10);
    }
}

TEST(Kernels, BetaBoundedOverShrinkFactors)
{
  for (int kappa = 0; kappa <= 2; ++kappa)
    for (int k = kappa + 2; k <= kappa + 3; ++k) {
      double worst = 0.0;
      for (int i = 30; i <= 100; ++i) {
        const auto K = build_kernel(kappa, k, i / 100.0);
        ASSERT_TRUE(std::isfinite(K.beta()));
        EXPECT_NEAR(K.beta(), kernel_moment(K, k), 1e-8 * (1.0 + std::abs(K.beta())));
        worst = std::max(worst, std::abs(K.beta()));
      }
      EXPECT_LT(worst, 1e3) << kappa << ' ' << k;
    }
}

TEST(Kernels, ConvergesToInteriorKernelAsQApproachesOne)
{
  for (int kappa = 0; kappa <= 2; ++kappa) {
    const auto inner = build_kernel(kappa, kappa + 2, 1.0).coefficients();
    double scale = 0.0;
    for (const double c : inner)
      scale = std::max(scale, std::abs(c));
    double prev = std::numeric_limits<double>::infinity();
    for (double q : { 0.9, 0.99, 0.999 }) {
      const auto c = build_kernel(kappa, kappa + 2, q).coefficients();
      double dist = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i)
        dist = std::max(dist, std::abs(c[i] - inner[i]) / scale);
      EXPECT_LT(dist, prev);
      prev = dist;
    }
    EXPECT_LT(prev, 0.01);
  }
}

TEST(Kernels, SupportRadiusScaling)
{
  for (int kappa = 0; kappa <= 2; ++kappa)
    for (double q : { 0.4, 1.0 }) {
      const auto base = build_kernel(kappa, kappa + 2, q, 1.0);
      for (double c : { 0.5, 2.0 }) {
        const auto scaled = build_kernel(kappa, kappa + 2, q, c);
        for (int i = 0; i < 100; ++i) {
          const double x = -1.2 * c + 2.4 * c * i / 99.0;
          const double expect = std::pow(c, -(kappa + 1)) * base(x / c);
          EXPECT_NEAR(scaled(x), expect, 1e-9 * (1.0 + std::abs(expect)));
        }
      }
    }
}

TEST(Kernels, MirroredKernelKeepsMoments)
{
  for (int kappa = 0; kappa <= 2; ++kappa) {
    const auto K = build_kernel(kappa, kappa + 2, 0.3);
    const auto M = K.mirror();
    EXPECT_TRUE(M.mirrored());
    EXPECT_DOUBLE_EQ(M.lower(), -0.3);
    EXPECT_DOUBLE_EQ(M.upper(), 1.0);
    for (int j = 0; j < kappa + 2; ++j)
      EXPECT_NEAR(kernel_moment(M, j), target_moment(kappa, j), 1e-8);
    EXPECT_NEAR(M(0.5), (kappa % 2 ? -1.0 : 1.0) * K(-0.5), 1e-12);
  }
}

TEST(Kernels, PrimitiveMatchesQuadrature)
{
  const auto K = build_kernel(2, 4, 0.7);
  EXPECT_DOUBLE_EQ(K.primitive(K.lower() - 1.0), 0.0);
  EXPECT_NEAR(K.primitive(K.upper() + 1.0), kernel_moment(K, 0), 1e-10);
  for (double a : { -0.8, -0.2 })
    for (double b : { 0.1, 0.5 })
      EXPECT_NEAR(K.integral(a, b), simpson([&](double x) { return K(x); }, a, b), 1e-9);
}

TEST(Kernels, RejectsInvalidOrders)
{
  EXPECT_THROW(build_kernel(1, 2, 1.0), InvalidOrder);
  EXPECT_THROW(build_kernel(-1, 3, 1.0), InvalidOrder);
  EXPECT_THROW(build_kernel(0, 2, 1.5), InvalidOrder);
  EXPECT_THROW(build_kernel(0, 2, 1.0, 0.0), InvalidOrder);
  EXPECT_THROW(kernel_moment(build_kernel(0, 2, 1.0), -1), InvalidOrder);
  EXPECT_THROW(KernelFamily(2, 3), InvalidOrder);
}

TEST(Kernels, FamilySelectsBoundaryKernels)
{
  const KernelFamily fam(1, 3);
  const double h = 0.2;
  EXPECT_EQ(&fam.select(0, 0.5, h), &fam.interior(0));
  const auto& left = fam.select(1, 0.05, h);
  EXPECT_FALSE(left.mirrored());
  EXPECT_NEAR(left.q(), 0.25, 1e-12);
  EXPECT_LE(0.05 - h * left.upper(), 1e-12);
  const auto& right = fam.select(1, 0.97, h);
  EXPECT_TRUE(right.mirrored());
  EXPECT_GE(0.97 - h * right.upper(), -1e-12);
  EXPECT_LE(0.97 - h * right.lower(), 1.0 + 1e-12);
  EXPECT_THROW(fam.select(0, 0.5, 0.5), BandwidthTooLarge);
  EXPECT_THROW(fam.select(2, 0.5, 0.1), InvalidOrder);
}

TEST(Kernels, SelectedSupportStaysInsideDesignInterval)
{
  const KernelFamily fam(2, 4);
  for (double h : { 0.05, 0.2, 0.45 })
    for (int i = 0; i <= 200; ++i) {
      const double t = i / 200.0;
      const auto& K = fam.select(2, t, h);
      EXPECT_GE(t - h * K.upper(), -1e-12);
      EXPECT_LE(t - h * K.lower(), 1.0 + 1e-12);
    }
}
