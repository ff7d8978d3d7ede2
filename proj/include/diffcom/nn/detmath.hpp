// SPDX-License-Identifier: Apache-2.0
//
// Deterministic transcendental functions built from IEEE-754 double
// arithmetic only (+, -, *, /, sqrt are correctly rounded everywhere).
// libm implementations of exp/log/sin differ between platforms in the
// last bits; the entropy tables and sampler noise must not, or encoder
// and decoder drift apart across machines.

#pragma once

#include <cmath>
#include <cstdint>

namespace diffcom::detmath {

inline constexpr double kLn2 = 0.6931471805599453094172321214581766;
inline constexpr double kInvLn2 = 1.4426950408889634073599246810018921;
inline constexpr double kPi = 3.1415926535897932384626433832795029;
inline constexpr double kTwoPi = 6.2831853071795864769252867665590058;

// exp(x) via k = round(x/ln2), e^r Taylor on r in [-ln2/2, ln2/2].
double exp(double x);

// Natural log via frexp mantissa reduction and atanh series.
double log(double x);

// log(1+x), accurate near zero.
double log1p(double x);

// exp(x)-1, accurate near zero.
double expm1(double x);

double tanh(double x);
double sigmoid(double x);

// softplus(x) = log(1 + e^x), overflow-safe.
double softplus(double x);

// sin/cos with two-word Cody-Waite reduction; adequate for |x| < 1e8.
double sin(double x);
double cos(double x);

inline double log2(double x) { return log(x) * kInvLn2; }
inline double exp2(double x) { return exp(x * kLn2); }

// CDF of the Laplace distribution with location 0 and scale b.
double laplace_cdf(double x, double b);

}  // namespace diffcom::detmath
