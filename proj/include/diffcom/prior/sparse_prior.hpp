// SPDX-License-Identifier: Apache-2.0
//
// Sparse prior stack: a steeper-rate point encoder summarizes the cloud
// into a few anchor points, a conv analysis transform turns anchors into
// codeable symbols plus hyper symbols, and the synthesis transform emits
// two heads: Laplace (mu, sigma) per symbol channel for entropy coding
// and per-anchor Gaussian offsets/variances for the geometric mixture.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcom/ae/autoencoder.hpp"
#include "diffcom/geom/point_cloud.hpp"
#include "diffcom/nn/graph.hpp"
#include "diffcom/nn/rng.hpp"

namespace diffcom::prior {

inline constexpr double kSigmaFloor = 1e-6;

struct PriorConfig {
  ae::EncoderConfig encoder;   // steeper rates than the latent encoder
  int analysis_channels = 8;   // c: symbol channels of Y
  int hyper_channels = 8;      // h: symbol channels of Z
  int conv_width = 16;         // trunk width of the transforms
  bool preserved_size = true;  // Z row count matches Y (else ceil(N_s/2))
  bool analyze_features = true;  // Feat variant: analyze (X_s || F_s); Pt: X_s only
  bool use_hyperprior = true;  // off: Y coded by its own factorized model

  int64_t sparse_count(int64_t n) const;
  void validate() const;
};

enum class QuantizeMode { kRound, kNoise };

// Round: nearest integer, ties away from zero. Noise: v + U(-1/2, 1/2)
// from the caller-supplied stream (training only).
nn::Tensor quantize(const nn::Tensor& v, QuantizeMode mode, nn::Rng* rng = nullptr);
// Graph version used in training graphs (adds constant noise / offsets).
nn::Var quantize_noise(nn::Graph& g, nn::Var v, nn::Rng& rng);

struct SynthesisOut {
  nn::Var mu_code;     // N_s x c
  nn::Var sigma_code;  // N_s x c, >= kSigmaFloor
  nn::Var gmm_offset;  // N_s x 3 (mean = anchor + offset)
  nn::Var gmm_var;     // N_s x 3, >= kSigmaFloor
};

class SparsePrior {
 public:
  SparsePrior(PriorConfig cfg, std::string prefix = "sp")
      : cfg_(cfg), encoder_(cfg.encoder, prefix + ".enc"), prefix_(std::move(prefix)) {}

  // (X_s, F_s) from a normalized cloud.
  ae::StageResult encode_sparse(nn::Graph& g, nn::ParamStore& ps,
                                const std::vector<geom::Vec3>& pts) const;

  // Y = g_a(X_s [|| F_s]); rows = N_s, cols = analysis_channels.
  nn::Var analysis(nn::Graph& g, nn::ParamStore& ps, const nn::Tensor& sparse_pos,
                   nn::Var sparse_feats) const;

  // Z = h_a(Y); rows = N_s (preserved) or ceil(N_s/2).
  nn::Var hyper_analysis(nn::Graph& g, nn::ParamStore& ps, nn::Var y) const;

  // (mu, sigma, gmm offset, gmm var) from quantized Z; n_sparse fixes the
  // output row count when the bottleneck halves rows.
  SynthesisOut synthesis(nn::Graph& g, nn::ParamStore& ps, nn::Var z_hat,
                         int64_t n_sparse) const;

  const PriorConfig& config() const { return cfg_; }
  const ae::PointEncoder& encoder() const { return encoder_; }

 private:
  PriorConfig cfg_;
  ae::PointEncoder encoder_;
  std::string prefix_;
};

struct GmmParams {
  nn::Tensor means;      // N_s x 3
  nn::Tensor variances;  // N_s x 3, diagonal
  std::vector<double> weights;  // simplex; uniform by default
};

// Sum over cloud points of log sum_i w_i N(x | mean_i, diag(var_i)),
// evaluated with log-sum-exp stabilization.
double gmm_log_likelihood(const std::vector<geom::Vec3>& pts, const GmmParams& gmm);

// Analytic gradient w.r.t. means (responsibility-weighted), for
// verification against finite differences.
nn::Tensor gmm_log_likelihood_mean_grad(const std::vector<geom::Vec3>& pts,
                                        const GmmParams& gmm);

}  // namespace diffcom::prior
