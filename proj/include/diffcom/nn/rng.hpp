// SPDX-License-Identifier: Apache-2.0
//
// All randomness flows through this wrapper. mt19937_64 is fully
// specified by the standard, and the distributions here are written out
// by hand because std::uniform_*_distribution is implementation-defined.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "diffcom/nn/detmath.hpp"

namespace diffcom::nn {

// FNV-1a, used to derive independent streams from (seed, label) pairs.
inline uint64_t hash_combine(uint64_t seed, std::string_view label) {
  uint64_t h = 1469598103934665603ull ^ seed;
  for (char c : label) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
  uint64_t h = seed ^ (v + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t uniform_index(uint64_t n) {
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  // Box-Muller; draws two uniforms per call, no caching so call sites
  // stay independent of each other's parity.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * detmath::log(u1));
    return r * detmath::cos(detmath::kTwoPi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace diffcom::nn
