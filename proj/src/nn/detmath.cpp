// SPDX-License-Identifier: Apache-2.0

#include "diffcom/nn/detmath.hpp"

#include <limits>

namespace diffcom::detmath {

namespace {

// Horner evaluation of 1 + r + r^2/2! + ... + r^13/13!.
double exp_poly(double r) {
  constexpr double c13 = 1.0 / 6227020800.0;
  constexpr double c12 = 1.0 / 479001600.0;
  constexpr double c11 = 1.0 / 39916800.0;
  constexpr double c10 = 1.0 / 3628800.0;
  constexpr double c9 = 1.0 / 362880.0;
  constexpr double c8 = 1.0 / 40320.0;
  constexpr double c7 = 1.0 / 5040.0;
  constexpr double c6 = 1.0 / 720.0;
  constexpr double c5 = 1.0 / 120.0;
  constexpr double c4 = 1.0 / 24.0;
  constexpr double c3 = 1.0 / 6.0;
  constexpr double c2 = 1.0 / 2.0;
  double p = c13;
  p = p * r + c12;
  p = p * r + c11;
  p = p * r + c10;
  p = p * r + c9;
  p = p * r + c8;
  p = p * r + c7;
  p = p * r + c6;
  p = p * r + c5;
  p = p * r + c4;
  p = p * r + c3;
  p = p * r + c2;
  p = p * r + 1.0;
  p = p * r + 1.0;
  return p;
}

// atanh series: 2*(u + u^3/3 + ... ), |u| <= 0.1716.
double log_core(double u) {
  const double u2 = u * u;
  double s = 1.0 / 19.0;
  s = s * u2 + 1.0 / 17.0;
  s = s * u2 + 1.0 / 15.0;
  s = s * u2 + 1.0 / 13.0;
  s = s * u2 + 1.0 / 11.0;
  s = s * u2 + 1.0 / 9.0;
  s = s * u2 + 1.0 / 7.0;
  s = s * u2 + 1.0 / 5.0;
  s = s * u2 + 1.0 / 3.0;
  s = s * u2 + 1.0;
  return 2.0 * u * s;
}

}  // namespace

double exp(double x) {
  if (std::isnan(x)) return x;
  if (x > 709.782712893384) return std::numeric_limits<double>::infinity();
  if (x < -745.1332191019412) return 0.0;
  // k = nearest integer to x/ln2
  double kd = x * kInvLn2;
  kd = (kd >= 0.0) ? static_cast<double>(static_cast<long long>(kd + 0.5))
                   : static_cast<double>(static_cast<long long>(kd - 0.5));
  // Cody-Waite: ln2 split in high/low parts so r is exact-ish.
  constexpr double ln2_hi = 6.93147180369123816490e-01;
  constexpr double ln2_lo = 1.90821492927058770002e-10;
  const double r = (x - kd * ln2_hi) - kd * ln2_lo;
  return std::ldexp(exp_poly(r), static_cast<int>(kd));
}

double log(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(x)) return x;
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  constexpr double sqrt_half = 0.70710678118654752440084436210485;
  if (m < sqrt_half) {
    m *= 2.0;
    e -= 1;
  }
  const double u = (m - 1.0) / (m + 1.0);
  return log_core(u) + static_cast<double>(e) * kLn2;
}

double log1p(double x) {
  if (x > -0.25 && x < 0.25) {
    const double u = x / (x + 2.0);
    return log_core(u);
  }
  return log(1.0 + x);
}

double expm1(double x) {
  if (x > -0.35 && x < 0.35) {
    // x * (1 + x/2 + x^2/6 + ...) to x^12/13!
    double p = 1.0 / 6227020800.0;
    p = p * x + 1.0 / 479001600.0;
    p = p * x + 1.0 / 39916800.0;
    p = p * x + 1.0 / 3628800.0;
    p = p * x + 1.0 / 362880.0;
    p = p * x + 1.0 / 40320.0;
    p = p * x + 1.0 / 5040.0;
    p = p * x + 1.0 / 720.0;
    p = p * x + 1.0 / 120.0;
    p = p * x + 1.0 / 24.0;
    p = p * x + 1.0 / 6.0;
    p = p * x + 1.0 / 2.0;
    p = p * x + 1.0;
    return x * p;
  }
  return exp(x) - 1.0;
}

double tanh(double x) {
  if (x > 20.0) return 1.0;
  if (x < -20.0) return -1.0;
  const double t = expm1(2.0 * x);
  return t / (t + 2.0);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double z = exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = exp(x);
  return z / (1.0 + z);
}

double softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return exp(x);
  return log1p(exp(x));
}

namespace {

double sincos_reduced(double x, bool want_sin) {
  // Reduce to r in [-pi/4, pi/4] with quadrant q.
  constexpr double pio2_hi = 1.57079632673412561417e+00;
  constexpr double pio2_lo = 6.07710050650619224932e-11;
  constexpr double inv_pio2 = 6.36619772367581382433e-01;
  double kd = x * inv_pio2;
  kd = (kd >= 0.0) ? static_cast<double>(static_cast<long long>(kd + 0.5))
                   : static_cast<double>(static_cast<long long>(kd - 0.5));
  const double r = (x - kd * pio2_hi) - kd * pio2_lo;
  const long long q = static_cast<long long>(kd) & 3;

  const double r2 = r * r;
  // sin(r), cos(r) Taylor (|r| <= pi/4 + eps)
  double sp = 1.0 / 6227020800.0;
  sp = sp * r2 - 1.0 / 39916800.0;
  sp = sp * r2 + 1.0 / 362880.0;
  sp = sp * r2 - 1.0 / 5040.0;
  sp = sp * r2 + 1.0 / 120.0;
  sp = sp * r2 - 1.0 / 6.0;
  const double s = r + r * r2 * sp;

  double cp = 1.0 / 87178291200.0;
  cp = cp * r2 - 1.0 / 479001600.0;
  cp = cp * r2 + 1.0 / 3628800.0;
  cp = cp * r2 - 1.0 / 40320.0;
  cp = cp * r2 + 1.0 / 720.0;
  cp = cp * r2 - 1.0 / 24.0;
  cp = cp * r2 + 1.0 / 2.0;
  const double c = 1.0 - r2 * cp;

  const bool sel_sin = want_sin ? (q == 0 || q == 2) : (q == 1 || q == 3);
  double v = sel_sin ? s : c;
  bool negate;
  if (want_sin) {
    negate = (q == 2 || q == 3);
  } else {
    negate = (q == 1 || q == 2);
  }
  return negate ? -v : v;
}

}  // namespace

double sin(double x) { return sincos_reduced(x, true); }
double cos(double x) { return sincos_reduced(x, false); }

double laplace_cdf(double x, double b) {
  if (x < 0.0) return 0.5 * exp(x / b);
  return 1.0 - 0.5 * exp(-x / b);
}

}  // namespace diffcom::detmath
