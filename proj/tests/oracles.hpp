#pragma once

// Test-only reference computations. Nothing here calls into the library's
// implementation of the quantity being checked.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace oracles {

/// Roots of the characteristic polynomial of a symmetric 2x2 matrix.
inline std::pair<double, double> eig2_sym(double a, double b, double d) {
  const double tr = a + d;
  const double det = a * d - b * b;
  const double disc = std::sqrt(tr * tr / 4.0 - det);
  return {tr / 2.0 - disc, tr / 2.0 + disc};
}

/// Inverse of [[a, b], [b, d]].
inline std::array<double, 3> inv2_sym(double a, double b, double d) {
  const double det = a * d - b * b;
  return {d / det, -b / det, a / det};
}

/// nu(t) = lmax (mu/4 - exp(-t/lmax) (mu/4 - c0/lmax)), the closed form for
/// a1..a3 = (lmin, lmax, 1) quadratic bounds, typed in independently.
inline double nu_closed(double t, double lmax, double mu, double c0) {
  return lmax * (mu / 4.0 - std::exp(-t / lmax) * (mu / 4.0 - c0 / lmax));
}

inline double central_difference(const std::function<double(double)>& f, double t,
                                 double h = 1e-6) {
  return (f(t + h) - f(t - h)) / (2.0 * h);
}

/// Classical RK4 on a scalar ODE; used as a brute-force oracle with tiny steps.
inline double rk4_scalar(const std::function<double(double, double)>& f, double x0, double t_end,
                         double h) {
  double x = x0;
  double t = 0.0;
  const long steps = static_cast<long>(std::ceil(t_end / h - 1e-9));
  for (long k = 0; k < steps; ++k) {
    const double dt = std::min(h, t_end - t);
    const double k1 = f(t, x);
    const double k2 = f(t + dt / 2, x + dt / 2 * k1);
    const double k3 = f(t + dt / 2, x + dt / 2 * k2);
    const double k4 = f(t + dt, x + dt * k3);
    x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += dt;
  }
  return x;
}

/// Max of d . x over n equally spaced boundary points of the 2-D ellipse
/// { x : (x - c)^T P (x - c) <= level }, parameterised through P^-1 = L L^T.
inline double sampled_support2(const double P[2][2], const double c[2], double level,
                               const double d[2], int n) {
  const auto inv = inv2_sym(P[0][0], P[0][1], P[1][1]);
  // Cholesky of P^-1.
  const double l00 = std::sqrt(inv[0]);
  const double l10 = inv[1] / l00;
  const double l11 = std::sqrt(inv[2] - l10 * l10);
  double best = -1e300;
  const double r = std::sqrt(level);
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * M_PI * k / n;
    const double u0 = std::cos(a), u1 = std::sin(a);
    const double x0 = c[0] + r * l00 * u0;
    const double x1 = c[1] + r * (l10 * u0 + l11 * u1);
    best = std::max(best, d[0] * x0 + d[1] * x1);
  }
  return best;
}

}  // namespace oracles
