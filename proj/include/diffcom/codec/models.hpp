// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffcom/codec/arith.hpp"
#include "diffcom/nn/graph.hpp"
#include "diffcom/nn/params.hpp"

namespace diffcom::codec {

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kPmfFloor = 1.0 / 65536.0;

// P(hat_y = k) under Laplace(mu, b) convolved with the unit quantization
// bin: F(k + 1/2) - F(k - 1/2).
double laplace_pmf(int64_t y_hat, double mu, double b);

// Integer-support table spanning [lo, hi] for a Laplace(mu, b) symbol.
CdfTable laplace_cdf_table(double mu, double b, int64_t lo, int64_t hi);

// Learned univariate CDF per channel: stacked monotone nonlinear layers
// (positive-weight affine + tanh gating), sigmoid on top. Used to code
// symbols that have no conditional context.
class FactorizedDensity {
 public:
  FactorizedDensity(std::string prefix, int channels, int depth = 3, int width = 8,
                    double input_scale = 1.0);

  int channels() const { return channels_; }
  double input_scale() const { return input_scale_; }

  // Registers (or fetches) the parameters in ps.
  void ensure_params(nn::ParamStore& ps) const;

  // CDF values for a column vector of real inputs on one channel.
  nn::Var cdf(nn::Graph& g, nn::ParamStore& ps, nn::Var x, int channel) const;

  // Training bits: sum over elements of -log2 pmf(values[:, c]) where pmf
  // comes from CDF differences over unit bins. `values` is Nxchannels.
  nn::Var bits(nn::Graph& g, nn::ParamStore& ps, nn::Var values) const;

  // Plain (graph-free path reuses the graph machinery without backward).
  double cdf_value(const nn::ParamStore& ps, double x, int channel) const;
  double pmf_value(const nn::ParamStore& ps, int64_t symbol, int channel) const;

  // Integer-support table for one channel over [lo, hi].
  CdfTable table(const nn::ParamStore& ps, int channel, int64_t lo, int64_t hi) const;

 private:
  std::string prefix_;
  int channels_;
  int depth_;
  int width_;
  double input_scale_;
};

// Ideal codelength in bits: sum of -log2 pmf(symbol). Throws on a
// zero-probability symbol.
double rate_estimate(const std::vector<int64_t>& symbols,
                     const std::function<double(size_t, int64_t)>& pmf);

}  // namespace diffcom::codec
