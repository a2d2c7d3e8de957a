#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace odecal::poly {

// Coefficients are stored lowest degree first: c[0] + c[1] x + ...

inline double
evaluate(std::span<const double> c, double x)
{
  double acc = 0.0;
  for (std::size_t m = c.size(); m-- > 0;)
    acc = acc * x + c[m];
  return acc;
}

inline std::vector<double>
derivative(std::span<const double> c, int order = 1)
{
  std::vector<double> out(c.begin(), c.end());
  for (int r = 0; r < order; ++r) {
    if (out.size() <= 1) {
      out.assign(1, 0.0);
      continue;
    }
    for (std::size_t m = 1; m < out.size(); ++m)
      out[m - 1] = static_cast<double>(m) * out[m];
    out.pop_back();
  }
  return out;
}

// Antiderivative vanishing at zero.
inline std::vector<double>
antiderivative(std::span<const double> c)
{
  std::vector<double> out(c.size() + 1, 0.0);
  for (std::size_t m = 0; m < c.size(); ++m)
    out[m + 1] = c[m] / static_cast<double>(m + 1);
  return out;
}

inline double
binomial(int n, int k)
{
  if (k < 0 || k > n)
    return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i)
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// p(a + b u) re-expressed as a polynomial in u.
inline std::vector<double>
compose_affine(std::span<const double> c, double a, double b)
{
  std::vector<double> out(c.size(), 0.0);
  for (std::size_t m = 0; m < c.size(); ++m) {
    // (a + b u)^m = sum_i C(m,i) a^(m-i) b^i u^i
    for (std::size_t i = 0; i <= m; ++i) {
      out[i] += c[m] * binomial(static_cast<int>(m), static_cast<int>(i)) *
                std::pow(a, static_cast<double>(m - i)) *
                std::pow(b, static_cast<double>(i));
    }
  }
  return out;
}

// Monomial coefficients of the Legendre polynomial P_m.
inline std::vector<double>
legendre(int m)
{
  std::vector<double> prev{ 1.0 };
  if (m == 0)
    return prev;
  std::vector<double> cur{ 0.0, 1.0 };
  for (int k = 1; k < m; ++k) {
    // (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}
    std::vector<double> next(static_cast<std::size_t>(k) + 2, 0.0);
    for (std::size_t i = 0; i < cur.size(); ++i)
      next[i + 1] += (2.0 * k + 1.0) * cur[i];
    for (std::size_t i = 0; i < prev.size(); ++i)
      next[i] -= k * prev[i];
    for (auto& v : next)
      v /= (k + 1.0);
    prev = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

} // namespace odecal::poly
