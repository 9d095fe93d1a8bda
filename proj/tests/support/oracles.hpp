#pragma once

// Independent reference computations the tests check the library against.
// Everything here is deliberately written the slow, obvious way and shares
// no code with the implementation paths under test.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

// Plain triple-loop matrix product, row-major.
inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += a[r * k + j] * b[j * n + c];
      out[r * n + c] = acc;
    }
  }
  return out;
}

// Central finite differences of a scalar function of a flat parameter
// vector.
inline std::vector<double> finite_difference_grad(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> at,
    double step = 1e-5) {
  std::vector<double> grad(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double saved = at[i];
    at[i] = saved + step;
    const double hi = f(at);
    at[i] = saved - step;
    const double lo = f(at);
    at[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                                 double floor = 1e-8) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Golden-section search for the maximizer of a unimodal function on [lo, hi].
inline double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double tol = 1e-10) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Adaptive Simpson quadrature.
namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double b, double fa,
                      double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_step(const std::function<double(double)>& f, double a, double b,
                            double fa, double fb, double fm, double whole, double tol,
                            int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(f, a, m, fa, fm, flm);
  const double right = simpson(f, m, b, fm, fb, frm);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_step(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1) +
         adaptive_step(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1);
}
}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-13) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return detail::adaptive_step(f, a, b, fa, fb, fm, detail::simpson(f, a, b, fa, fb, fm), tol,
                               48);
}

// Standard normal CDF by integrating the density from 0.
inline double normal_cdf_by_quadrature(double z) {
  const auto density = [](double t) {
    return std::exp(-0.5 * t * t) / std::sqrt(2.0 * 3.14159265358979323846);
  };
  if (z >= 0.0) return 0.5 + adaptive_simpson(density, 0.0, z);
  return 0.5 - adaptive_simpson(density, z, 0.0);
}

}  // namespace oracles
