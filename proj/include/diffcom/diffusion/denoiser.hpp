// SPDX-License-Identifier: Apache-2.0
//
// Conditional U-shaped denoiser over the latent point set. Encoder levels
// fuse sparse anchors into the working set before each set-abstraction
// step; decoder levels propagate features back through attention and fuse
// again. Anchor distributions enter through cross-attention where the
// coarse features are the queries, anchor positions the keys, and the
// (mean, variance) pairs the values.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcom/diffusion/schedule.hpp"
#include "diffcom/geom/point_cloud.hpp"
#include "diffcom/nn/graph.hpp"
#include "diffcom/nn/layers.hpp"
#include "diffcom/nn/rng.hpp"

namespace diffcom::diffusion {

struct DenoiserConfig {
  int levels = 2;
  std::vector<double> level_rates;  // per-level downsample rate
  std::vector<int> widths;          // per-level feature width
  int k_neighbors = 8;
  int time_dim = 16;
  bool fuse_sparse = true;      // concatenate anchors into the working set
  bool cross_attention = true;  // distribution-guided attention

  void validate() const;
};

// Everything the denoiser may condition on; all rows ordered by the
// canonical FPS ordering of the anchors so per-level prefixes nest.
struct CondVars {
  nn::Tensor sparse_pos;  // N_s x 3
  nn::Var feats;          // N_s x c (decoded symbols; noisy during training)
  nn::Var gmm_mean;       // N_s x 3
  nn::Var gmm_var;        // N_s x 3
  bool has_distributions = false;
};

// Distribution-guided refinement: coarse features query anchor positions,
// values are the projected (mean, variance) pairs, and the attended result
// is residual-added to the queries.
nn::Var prior_cross_attention(nn::Graph& g, nn::ParamStore& ps,
                              const std::string& prefix, nn::Var coarse,
                              nn::Var anchor_pos, nn::Var mean, nn::Var variance);

struct LevelPlan {
  int64_t working_rows = 0;  // latent rows + fused anchor rows at this level
  int64_t sa_target = 0;     // rows after the level's set abstraction
  int64_t anchor_rows = 0;   // anchors fused at this level
};

class Denoiser {
 public:
  Denoiser(DenoiserConfig cfg, std::string prefix = "dn")
      : cfg_(cfg), prefix_(std::move(prefix)) {}

  // eps_hat with the same shape as x_t (rows = N_l, cols = 3 + d).
  nn::Var predict_noise(nn::Graph& g, nn::ParamStore& ps, const nn::Tensor& x_t,
                        int64_t t, const CondVars& cond) const;

  // Single DDPM ancestral step; z is the injected noise (ignored at t = 1).
  nn::Tensor reverse_step_ddpm(nn::ParamStore& ps, const nn::Tensor& x_t, int64_t t,
                               const CondVars& cond, const DiffusionSchedule& sched,
                               const nn::Tensor* z) const;

  // Deterministic DDIM sampling (eta = 0) from seed-derived noise.
  nn::Tensor ddim_sample(nn::ParamStore& ps, int64_t rows, int64_t cols,
                         const CondVars& cond, const DiffusionSchedule& sched,
                         int64_t steps, uint64_t seed) const;

  // Row bookkeeping per encoder level, for inspection and tests.
  std::vector<LevelPlan> level_plan(int64_t n_latents, int64_t n_sparse) const;

  const DenoiserConfig& config() const { return cfg_; }

 private:
  nn::Tensor predict_noise_value(nn::ParamStore& ps, const nn::Tensor& x_t, int64_t t,
                                 const CondVars& cond) const;
  int64_t sparse_rows_at_level(int64_t n_sparse, int level) const;
  DenoiserConfig cfg_;
  std::string prefix_;
};

// Rebuilds constant CondVars on a fresh graph (inference path).
CondVars make_cond_vars(nn::Graph& g, const nn::Tensor& sparse_pos,
                        const nn::Tensor& feats, const nn::Tensor& gmm_mean,
                        const nn::Tensor& gmm_var, bool has_distributions);

}  // namespace diffcom::diffusion
