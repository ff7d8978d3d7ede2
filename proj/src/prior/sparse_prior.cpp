// SPDX-License-Identifier: Apache-2.0

#include "diffcom/prior/sparse_prior.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "diffcom/nn/detmath.hpp"

namespace diffcom::prior {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

int64_t PriorConfig::sparse_count(int64_t n) const {
  int64_t m = n;
  for (double r : encoder.rates)
    m = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(r * static_cast<double>(m))));
  return m;
}

void PriorConfig::validate() const {
  if (encoder.rates.empty() || encoder.rates.size() != encoder.dims.size())
    throw std::invalid_argument("PriorConfig: encoder rates/dims mismatch");
  if (analysis_channels < 1 || conv_width < 1)
    throw std::invalid_argument("PriorConfig: bad channel config");
  if (use_hyperprior && hyper_channels < 1)
    throw std::invalid_argument("PriorConfig: hyper_channels must be >= 1");
}

Tensor quantize(const Tensor& v, QuantizeMode mode, nn::Rng* rng) {
  Tensor out(v.rows(), v.cols());
  if (mode == QuantizeMode::kRound) {
    for (int64_t i = 0; i < v.size(); ++i)
      out[i] = static_cast<double>(std::llround(v[i]));
  } else {
    if (rng == nullptr) throw std::invalid_argument("quantize: noise mode needs an RNG");
    for (int64_t i = 0; i < v.size(); ++i) out[i] = v[i] + rng->uniform(-0.5, 0.5);
  }
  return out;
}

Var quantize_noise(Graph& g, Var v, nn::Rng& rng) {
  Tensor noise(v.val().rows(), v.val().cols());
  for (int64_t i = 0; i < noise.size(); ++i) noise[i] = rng.uniform(-0.5, 0.5);
  return add(v, g.input(std::move(noise)));
}

ae::StageResult SparsePrior::encode_sparse(Graph& g, ParamStore& ps,
                                           const std::vector<geom::Vec3>& pts) const {
  return encoder_.encode(g, ps, pts);
}

Var SparsePrior::analysis(Graph& g, ParamStore& ps, const Tensor& sparse_pos,
                          Var sparse_feats) const {
  Var in = cfg_.analyze_features
               ? concat_cols(g.input(sparse_pos), sparse_feats)
               : g.input(sparse_pos);
  const int64_t mid = cfg_.conv_width;
  ps.ensure(prefix_ + ".ga.w1", 3 * in.val().cols(), mid);
  ps.ensure(prefix_ + ".ga.b1", 1, mid, nn::Init::kZeros);
  Var h = silu(add(conv1d(in, g.param(ps, prefix_ + ".ga.w1"), 3, 1),
                   g.param(ps, prefix_ + ".ga.b1")));
  ps.ensure(prefix_ + ".ga.w2", 3 * mid, cfg_.analysis_channels);
  ps.ensure(prefix_ + ".ga.b2", 1, cfg_.analysis_channels, nn::Init::kZeros);
  return add(conv1d(h, g.param(ps, prefix_ + ".ga.w2"), 3, 1),
             g.param(ps, prefix_ + ".ga.b2"));
}

Var SparsePrior::hyper_analysis(Graph& g, ParamStore& ps, Var y) const {
  const int64_t mid = cfg_.conv_width;
  ps.ensure(prefix_ + ".ha.w1", 3 * y.val().cols(), mid);
  ps.ensure(prefix_ + ".ha.b1", 1, mid, nn::Init::kZeros);
  Var h = silu(add(conv1d(y, g.param(ps, prefix_ + ".ha.w1"), 3, 1),
                   g.param(ps, prefix_ + ".ha.b1")));
  ps.ensure(prefix_ + ".ha.w2", 3 * mid, cfg_.hyper_channels);
  ps.ensure(prefix_ + ".ha.b2", 1, cfg_.hyper_channels, nn::Init::kZeros);
  const int64_t stride = cfg_.preserved_size ? 1 : 2;
  return add(conv1d(h, g.param(ps, prefix_ + ".ha.w2"), 3, stride),
             g.param(ps, prefix_ + ".ha.b2"));
}

SynthesisOut SparsePrior::synthesis(Graph& g, ParamStore& ps, Var z_hat,
                                    int64_t n_sparse) const {
  Var z = z_hat;
  if (!cfg_.preserved_size) {
    // nearest-neighbor row upsampling back to the anchor count
    std::vector<int64_t> idx(static_cast<size_t>(n_sparse));
    for (int64_t i = 0; i < n_sparse; ++i)
      idx[static_cast<size_t>(i)] = std::min<int64_t>(i / 2, z.val().rows() - 1);
    z = gather_rows(z, idx);
  }
  const int64_t mid = cfg_.conv_width;
  ps.ensure(prefix_ + ".hs.w1", 3 * z.val().cols(), mid);
  ps.ensure(prefix_ + ".hs.b1", 1, mid, nn::Init::kZeros);
  Var h = silu(add(conv1d(z, g.param(ps, prefix_ + ".hs.w1"), 3, 1),
                   g.param(ps, prefix_ + ".hs.b1")));

  auto head = [&](const char* tag, int64_t out, nn::Init init) {
    ps.ensure(prefix_ + ".hs." + tag + ".w", 3 * mid, out, init);
    ps.ensure(prefix_ + ".hs." + tag + ".b", 1, out, nn::Init::kZeros);
    return add(conv1d(h, g.param(ps, prefix_ + ".hs." + std::string(tag) + ".w"), 3, 1),
               g.param(ps, prefix_ + ".hs." + std::string(tag) + ".b"));
  };

  SynthesisOut out;
  out.mu_code = head("mu", cfg_.analysis_channels, nn::Init::kXavier);
  out.sigma_code = add_const(softplus(head("sigma", cfg_.analysis_channels,
                                           nn::Init::kXavier)),
                             kSigmaFloor);
  out.gmm_offset = head("gmean", 3, nn::Init::kZeros);
  out.gmm_var = add_const(softplus(head("gvar", 3, nn::Init::kXavier)), kSigmaFloor);
  return out;
}

double gmm_log_likelihood(const std::vector<geom::Vec3>& pts, const GmmParams& gmm) {
  const int64_t n = gmm.means.rows();
  if (n < 1 || pts.empty()) throw std::invalid_argument("gmm: empty inputs");
  std::vector<double> logw(static_cast<size_t>(n));
  double wsum = 0.0;
  for (int64_t i = 0; i < n; ++i) wsum += gmm.weights[static_cast<size_t>(i)];
  if (!(wsum > 0.0)) throw std::invalid_argument("gmm: degenerate weights");
  for (int64_t i = 0; i < n; ++i) {
    const double w = gmm.weights[static_cast<size_t>(i)];
    if (w < 0.0) throw std::invalid_argument("gmm: negative weight");
    logw[static_cast<size_t>(i)] =
        w > 0.0 ? std::log(w / wsum) : -std::numeric_limits<double>::infinity();
  }
  constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
  double total = 0.0;
  std::vector<double> comp(static_cast<size_t>(n));
  for (const geom::Vec3& p : pts) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < n; ++i) {
      double lp = logw[static_cast<size_t>(i)] - 1.5 * kLog2Pi;
      for (int d = 0; d < 3; ++d) {
        const double var = gmm.variances.at(i, d);
        const double diff = p[d] - gmm.means.at(i, d);
        lp -= 0.5 * (std::log(var) + diff * diff / var);
      }
      comp[static_cast<size_t>(i)] = lp;
      mx = std::max(mx, lp);
    }
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::exp(comp[static_cast<size_t>(i)] - mx);
    total += mx + std::log(s);
  }
  return total;
}

Tensor gmm_log_likelihood_mean_grad(const std::vector<geom::Vec3>& pts,
                                    const GmmParams& gmm) {
  const int64_t n = gmm.means.rows();
  Tensor grad(n, 3);
  std::vector<double> logw(static_cast<size_t>(n));
  double wsum = 0.0;
  for (int64_t i = 0; i < n; ++i) wsum += gmm.weights[static_cast<size_t>(i)];
  for (int64_t i = 0; i < n; ++i)
    logw[static_cast<size_t>(i)] = std::log(gmm.weights[static_cast<size_t>(i)] / wsum);
  constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
  std::vector<double> comp(static_cast<size_t>(n));
  for (const geom::Vec3& p : pts) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < n; ++i) {
      double lp = logw[static_cast<size_t>(i)] - 1.5 * kLog2Pi;
      for (int d = 0; d < 3; ++d) {
        const double var = gmm.variances.at(i, d);
        const double diff = p[d] - gmm.means.at(i, d);
        lp -= 0.5 * (std::log(var) + diff * diff / var);
      }
      comp[static_cast<size_t>(i)] = lp;
      mx = std::max(mx, lp);
    }
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::exp(comp[static_cast<size_t>(i)] - mx);
    for (int64_t i = 0; i < n; ++i) {
      const double resp = std::exp(comp[static_cast<size_t>(i)] - mx) / s;
      for (int d = 0; d < 3; ++d)
        grad.at(i, d) += resp * (p[d] - gmm.means.at(i, d)) / gmm.variances.at(i, d);
    }
  }
  return grad;
}

}  // namespace diffcom::prior
