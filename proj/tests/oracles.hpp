#pragma once

// Independent closed forms used as test oracles.

#include <cmath>
#include <complex>

namespace oracle {

using cplx = std::complex<double>;

/// Jost function of v = -d on [0, a): e^{i z a}[cos(q a) - (i z / q) sin(q a)], q^2 = z^2 + d.
inline cplx well_jost(double d, double a, cplx z) {
  const cplx q = std::sqrt(z * z + d);
  const cplx i(0.0, 1.0);
  const cplx ratio = std::abs(q) < 1e-300 ? cplx(a) : std::sin(q * a) / q;
  return std::exp(i * z * a) * (std::cos(q * a) - i * z * ratio);
}

/// Jost solution of the well at x < a: matches (e^{iza}, i z e^{iza}) at a.
inline cplx well_theta(double d, double a, cplx z, double x) {
  if (x >= a) return std::exp(cplx(0.0, 1.0) * z * x);
  const cplx q = std::sqrt(z * z + d);
  const cplx i(0.0, 1.0);
  const cplx e = std::exp(i * z * a);
  return e * (std::cos(q * (x - a)) + i * z * std::sin(q * (x - a)) / q);
}

/// w(i kappa) of the well (real): e^{-kappa a}[cos(q a) + (kappa / q) sin(q a)], q^2 = d - kappa^2.
inline double well_jost_imag(double d, double a, double kappa) {
  return well_jost(d, a, cplx(0.0, kappa)).real();
}

/// Number of bound states of the well: zeros of w(i kappa) on (0, sqrt d).
inline int well_bound_count(double d, double a) {
  // Zeros of cos(qa) + (kappa/q) sin(qa), counted by dense sign scan on q.
  int count = 0;
  const int n = 200000;
  double prev = 0.0;
  for (int j = 1; j < n; ++j) {
    const double kappa = std::sqrt(d) * j / n;
    const double val = well_jost_imag(d, a, kappa);
    if (j > 1 && (val > 0) != (prev > 0)) ++count;
    prev = val;
  }
  return count;
}

}  // namespace oracle
