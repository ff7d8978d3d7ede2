// SPDX-License-Identifier: Apache-2.0

#include "diffcom/codec/models.hpp"

#include <cmath>
#include <stdexcept>

#include "diffcom/nn/detmath.hpp"

namespace diffcom::codec {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

double laplace_pmf(int64_t y_hat, double mu, double b) {
  const double d = static_cast<double>(y_hat) - mu;
  const double q = std::fabs(d);
  if (q >= 0.5) {
    const double e1 = detmath::exp((0.5 - q) / b);
    const double e2 = detmath::exp(-1.0 / b);
    return 0.5 * e1 * (1.0 - e2);
  }
  const double ea = detmath::exp((d - 0.5) / b);
  const double eb = detmath::exp(-(d + 0.5) / b);
  return 1.0 - 0.5 * (ea + eb);
}

CdfTable laplace_cdf_table(double mu, double b, int64_t lo, int64_t hi) {
  std::vector<double> pmf(static_cast<size_t>(hi - lo + 1));
  for (int64_t s = lo; s <= hi; ++s)
    pmf[static_cast<size_t>(s - lo)] = std::max(laplace_pmf(s, mu, b), kPmfFloor);
  return CdfTable::from_pmf(pmf, lo);
}

FactorizedDensity::FactorizedDensity(std::string prefix, int channels, int depth,
                                     int width, double input_scale)
    : prefix_(std::move(prefix)),
      channels_(channels),
      depth_(depth),
      width_(width),
      input_scale_(input_scale) {}

namespace {

std::string layer_name(const std::string& prefix, int ch, int layer, const char* kind) {
  return prefix + ".ch" + std::to_string(ch) + ".l" + std::to_string(layer) + "." + kind;
}

// softplus^-1(y): H entries start so each layer contributes a gentle
// positive slope and the overall CDF spreads over a few dozen units.
double inv_softplus(double y) { return std::log(std::expm1(y)); }

}  // namespace

void FactorizedDensity::ensure_params(nn::ParamStore& ps) const {
  for (int ch = 0; ch < channels_; ++ch) {
    for (int l = 0; l < depth_; ++l) {
      const int in = l == 0 ? 1 : width_;
      const int out = l == depth_ - 1 ? 1 : width_;
      const double slope = std::pow(0.3, 1.0 / depth_);
      ps.ensure(layer_name(prefix_, ch, l, "H"), in, out, nn::Init::kConstant,
                inv_softplus(slope / std::sqrt(static_cast<double>(in))));
      ps.ensure(layer_name(prefix_, ch, l, "b"), 1, out, nn::Init::kSmallNormal, 0.05);
      if (l < depth_ - 1)
        ps.ensure(layer_name(prefix_, ch, l, "a"), 1, out, nn::Init::kZeros);
    }
  }
}

Var FactorizedDensity::cdf(Graph& g, ParamStore& ps, Var x, int channel) const {
  Var h = scale(x, input_scale_);
  for (int l = 0; l < depth_; ++l) {
    Var w = softplus(g.param(ps, layer_name(prefix_, channel, l, "H")));
    Var b = g.param(ps, layer_name(prefix_, channel, l, "b"));
    h = add(matmul(h, w), b);
    if (l < depth_ - 1) {
      Var a = tanh_op(g.param(ps, layer_name(prefix_, channel, l, "a")));
      h = add(h, mul(tanh_op(h), a));
    }
  }
  return sigmoid(h);
}

Var FactorizedDensity::bits(Graph& g, ParamStore& ps, Var values) const {
  if (values.val().cols() != channels_)
    throw std::logic_error("FactorizedDensity::bits channel mismatch");
  Var total = g.input(Tensor::scalar(0.0));
  for (int ch = 0; ch < channels_; ++ch) {
    Var col = slice_cols(values, ch, ch + 1);
    Var hi = cdf(g, ps, add_const(col, 0.5), ch);
    Var lo = cdf(g, ps, add_const(col, -0.5), ch);
    Var pmf = add_const(sub(hi, lo), 1e-12);
    Var bits_col = scale(log_op(pmf), -detmath::kInvLn2);
    total = add(total, sum_all(bits_col));
  }
  return total;
}

double FactorizedDensity::cdf_value(const nn::ParamStore& ps, double x,
                                    int channel) const {
  double h = x * input_scale_;
  std::vector<double> cur{h}, next;
  for (int l = 0; l < depth_; ++l) {
    const Tensor& w = ps.value(layer_name(prefix_, channel, l, "H"));
    const Tensor& b = ps.value(layer_name(prefix_, channel, l, "b"));
    next.assign(static_cast<size_t>(w.cols()), 0.0);
    for (int64_t o = 0; o < w.cols(); ++o) {
      double s = b[o];
      for (int64_t i = 0; i < w.rows(); ++i)
        s += cur[static_cast<size_t>(i)] * detmath::softplus(w.at(i, o));
      next[static_cast<size_t>(o)] = s;
    }
    if (l < depth_ - 1) {
      const Tensor& a = ps.value(layer_name(prefix_, channel, l, "a"));
      for (int64_t o = 0; o < a.cols(); ++o) {
        const double t = detmath::tanh(next[static_cast<size_t>(o)]);
        next[static_cast<size_t>(o)] += detmath::tanh(a[o]) * t;
      }
    }
    cur = next;
  }
  return detmath::sigmoid(cur[0]);
}

double FactorizedDensity::pmf_value(const nn::ParamStore& ps, int64_t symbol,
                                    int channel) const {
  const double hi = cdf_value(ps, static_cast<double>(symbol) + 0.5, channel);
  const double lo = cdf_value(ps, static_cast<double>(symbol) - 0.5, channel);
  return hi - lo;
}

CdfTable FactorizedDensity::table(const nn::ParamStore& ps, int channel, int64_t lo,
                                  int64_t hi) const {
  std::vector<double> pmf(static_cast<size_t>(hi - lo + 1));
  double prev = cdf_value(ps, static_cast<double>(lo) - 0.5, channel);
  for (int64_t s = lo; s <= hi; ++s) {
    const double cur = cdf_value(ps, static_cast<double>(s) + 0.5, channel);
    pmf[static_cast<size_t>(s - lo)] = std::max(cur - prev, kPmfFloor);
    prev = cur;
  }
  return CdfTable::from_pmf(pmf, lo);
}

double rate_estimate(const std::vector<int64_t>& symbols,
                     const std::function<double(size_t, int64_t)>& pmf) {
  double bits = 0.0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const double p = pmf(i, symbols[i]);
    if (!(p > 0.0)) throw std::invalid_argument("rate_estimate: zero-probability symbol");
    bits += -detmath::log2(p);
  }
  return bits;
}

}  // namespace diffcom::codec
