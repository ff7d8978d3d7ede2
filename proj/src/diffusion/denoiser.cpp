// SPDX-License-Identifier: Apache-2.0

#include "diffcom/diffusion/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "diffcom/geom/sampling.hpp"

namespace diffcom::diffusion {

using geom::Vec3;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

void DenoiserConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("DenoiserConfig: levels >= 1");
  if (static_cast<int>(level_rates.size()) != levels ||
      static_cast<int>(widths.size()) != levels)
    throw std::invalid_argument("DenoiserConfig: rates/widths must match levels");
  if (time_dim < 2) throw std::invalid_argument("DenoiserConfig: time_dim too small");
}

CondVars make_cond_vars(Graph& g, const Tensor& sparse_pos, const Tensor& feats,
                        const Tensor& gmm_mean, const Tensor& gmm_var,
                        bool has_distributions) {
  CondVars c;
  c.sparse_pos = sparse_pos;
  c.feats = g.input(feats);
  if (has_distributions) {
    c.gmm_mean = g.input(gmm_mean);
    c.gmm_var = g.input(gmm_var);
  } else {
    c.gmm_mean = g.input(Tensor(sparse_pos.rows(), 3));
    c.gmm_var = g.input(Tensor(sparse_pos.rows(), 3));
  }
  c.has_distributions = has_distributions;
  return c;
}

int64_t Denoiser::sparse_rows_at_level(int64_t n_sparse, int level) const {
  double f = 1.0;
  for (int i = 0; i < level; ++i) f *= cfg_.level_rates[static_cast<size_t>(i)];
  return std::max<int64_t>(
      1, static_cast<int64_t>(std::ceil(f * static_cast<double>(n_sparse))));
}

std::vector<LevelPlan> Denoiser::level_plan(int64_t n_latents, int64_t n_sparse) const {
  std::vector<LevelPlan> plan;
  int64_t rows = n_latents;
  for (int level = 0; level < cfg_.levels; ++level) {
    LevelPlan p;
    p.anchor_rows = cfg_.fuse_sparse ? sparse_rows_at_level(n_sparse, level) : 0;
    p.working_rows = rows + p.anchor_rows;
    p.sa_target = std::max<int64_t>(
        1, static_cast<int64_t>(std::ceil(cfg_.level_rates[static_cast<size_t>(level)] *
                                          static_cast<double>(p.working_rows))));
    plan.push_back(p);
    rows = p.sa_target;
  }
  return plan;
}

Var prior_cross_attention(Graph& g, ParamStore& ps, const std::string& prefix,
                          Var coarse, Var anchor_pos, Var mean, Var variance) {
  const int64_t width = coarse.val().cols();
  Var q = nn::linear(g, ps, prefix + ".q", coarse, width);
  Var keys = nn::linear(g, ps, prefix + ".k", anchor_pos, width);
  Var vals = nn::linear(g, ps, prefix + ".v", concat_cols(mean, variance), width);
  Var logits = scale(matmul(q, transpose(keys)),
                     1.0 / std::sqrt(static_cast<double>(width)));
  Var attn = row_softmax(logits);
  return add(coarse, matmul(attn, vals));
}

namespace {

struct LevelState {
  std::vector<Vec3> pos;
  Var feats;
};

}  // namespace

Var Denoiser::predict_noise(Graph& g, ParamStore& ps, const Tensor& x_t, int64_t t,
                            const CondVars& cond) const {
  cfg_.validate();
  const int64_t n_l = x_t.rows();
  const int64_t state_dim = x_t.cols();
  const int64_t n_s = cond.sparse_pos.rows();

  // Split the diffusion state into noisy positions (geometry for FPS/kNN)
  // and the full feature payload.
  Tensor pos_t(n_l, 3);
  for (int64_t i = 0; i < n_l; ++i)
    for (int64_t c = 0; c < 3; ++c) pos_t.at(i, c) = x_t.at(i, c);
  const std::vector<Vec3> noisy_pos = nn::to_points(pos_t);
  Var state = g.input(x_t);

  const std::vector<Vec3> anchor_pos = nn::to_points(cond.sparse_pos);
  // Canonical FPS ordering of anchors; level prefixes are nested subsets.
  const auto anchor_order = geom::farthest_point_sampling_from(
      anchor_pos, n_s, geom::lexicographic_min_index(anchor_pos));

  auto anchor_prefix = [&](int64_t count) {
    std::vector<int64_t> idx(anchor_order.begin(), anchor_order.begin() + count);
    return idx;
  };
  auto gather_pos = [&](const std::vector<int64_t>& idx) {
    std::vector<Vec3> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = anchor_pos[static_cast<size_t>(idx[i])];
    return out;
  };

  // Stage-0 lift of the raw state.
  Var feats = silu(nn::linear(g, ps, prefix_ + ".lift", state,
                              cfg_.widths[0]));
  LevelState cur{noisy_pos, feats};

  auto time_embed = [&](const std::string& tag, int64_t width) {
    Var e = g.input(nn::sinusoidal_embedding(static_cast<double>(t), cfg_.time_dim));
    return nn::linear(g, ps, prefix_ + ".temb." + tag, silu(nn::linear(
        g, ps, prefix_ + ".temb_in." + tag, e, cfg_.time_dim)), width);
  };

  auto fuse_level = [&](LevelState& st, int level, const std::string& tag,
                        int64_t width) {
    // Align anchors to the working width and merge them into the set.
    if (!cfg_.fuse_sparse) {
      st.feats = silu(nn::linear(g, ps, prefix_ + "." + tag + ".phi", st.feats, width));
      return static_cast<int64_t>(0);
    }
    const int64_t rows = sparse_rows_at_level(n_s, level);
    const auto idx = anchor_prefix(rows);
    Var a_feat = gather_rows(cond.feats, idx);
    Var a_pos = g.input(nn::to_tensor(gather_pos(idx)));
    Var aligned = silu(nn::linear(g, ps, prefix_ + "." + tag + ".align",
                                  concat_cols(a_pos, a_feat), width));
    Var lat_in = st.feats;
    if (lat_in.val().cols() != width)
      lat_in = silu(nn::linear(g, ps, prefix_ + "." + tag + ".latproj", lat_in, width));
    Var combined = concat_rows(lat_in, aligned);
    combined = silu(nn::linear(g, ps, prefix_ + "." + tag + ".phi", combined, width));
    const auto a_pts = gather_pos(idx);
    st.pos.insert(st.pos.end(), a_pts.begin(), a_pts.end());
    st.feats = combined;
    return rows;
  };

  auto cross_attend = [&](LevelState& st, int level, const std::string& tag) {
    if (!cfg_.cross_attention || !cond.has_distributions) return;
    const int64_t rows = sparse_rows_at_level(n_s, level);
    const auto idx = anchor_prefix(rows);
    st.feats = prior_cross_attention(g, ps, prefix_ + "." + tag, st.feats,
                                     g.input(nn::to_tensor(gather_pos(idx))),
                                     gather_rows(cond.gmm_mean, idx),
                                     gather_rows(cond.gmm_var, idx));
  };

  auto set_abstraction = [&](const LevelState& st, int64_t target,
                             const std::string& tag, int64_t width) {
    const int64_t k = std::min<int64_t>(cfg_.k_neighbors,
                                        static_cast<int64_t>(st.pos.size()));
    const auto order = geom::farthest_point_sampling_from(
        st.pos, target, geom::lexicographic_min_index(st.pos));
    std::vector<Vec3> q_pos(order.size());
    for (size_t i = 0; i < order.size(); ++i) q_pos[i] = st.pos[static_cast<size_t>(order[i])];
    const auto nbr = geom::knn(q_pos, st.pos, k);
    Var geo = g.input(nn::neighbor_geometry(q_pos, st.pos, nbr));
    Var nf = gather_rows(st.feats, nn::flatten_indices(nbr));
    Var emb = silu(nn::linear(g, ps, prefix_ + "." + tag + ".emb",
                              concat_cols(geo, nf), width));
    Var qf = gather_rows(st.feats, order);
    Var agg = nn::neighborhood_attention(g, ps, prefix_ + "." + tag + ".attn", qf, emb,
                                         k, width);
    Var skip = nn::linear(g, ps, prefix_ + "." + tag + ".skip", qf, width);
    Var out = silu(nn::linear(g, ps, prefix_ + "." + tag + ".merge",
                              concat_cols(agg, skip), width));
    out = nn::layer_norm(g, ps, prefix_ + "." + tag + ".ln", out);
    return LevelState{std::move(q_pos), out};
  };

  auto feature_propagation = [&](const LevelState& coarse, const LevelState& fine_skip,
                                 const std::string& tag, int64_t width) {
    const int64_t k = std::min<int64_t>(cfg_.k_neighbors,
                                        static_cast<int64_t>(coarse.pos.size()));
    const auto nbr = geom::knn(fine_skip.pos, coarse.pos, k);
    Var geo = g.input(nn::neighbor_geometry(fine_skip.pos, coarse.pos, nbr));
    Var nf = gather_rows(coarse.feats, nn::flatten_indices(nbr));
    Var emb = silu(nn::linear(g, ps, prefix_ + "." + tag + ".emb",
                              concat_cols(geo, nf), width));
    Var qf = nn::linear(g, ps, prefix_ + "." + tag + ".qproj", fine_skip.feats, width);
    Var agg = nn::neighborhood_attention(g, ps, prefix_ + "." + tag + ".attn", qf, emb,
                                         k, width);
    Var merged = silu(nn::linear(g, ps, prefix_ + "." + tag + ".merge",
                                 concat_cols(agg, fine_skip.feats), width));
    merged = nn::layer_norm(g, ps, prefix_ + "." + tag + ".ln", merged);
    return LevelState{fine_skip.pos, merged};
  };

  // Encoder path.
  std::vector<LevelState> skips;
  for (int level = 0; level < cfg_.levels; ++level) {
    const std::string tag = "enc" + std::to_string(level);
    const int64_t width = cfg_.widths[static_cast<size_t>(level)];
    fuse_level(cur, level, tag + ".fuse", width);
    cur.feats = add(cur.feats, time_embed(tag, width));
    skips.push_back(cur);  // resolution-k rows (latents first, fused anchors after)
    const int64_t target = std::max<int64_t>(
        1, static_cast<int64_t>(std::ceil(cfg_.level_rates[static_cast<size_t>(level)] *
                                          static_cast<double>(cur.pos.size()))));
    cur = set_abstraction(cur, target, tag + ".sa", width);
    cross_attend(cur, level + 1, tag + ".xattn");
  }

  // Mid block.
  cur.feats = silu(nn::linear(g, ps, prefix_ + ".mid", cur.feats,
                              cfg_.widths.back()));

  // Decoder path.
  for (int level = cfg_.levels - 1; level >= 0; --level) {
    const std::string tag = "dec" + std::to_string(level);
    const int64_t width = cfg_.widths[static_cast<size_t>(level)];
    cur = feature_propagation(cur, skips[static_cast<size_t>(level)], tag + ".fp", width);
    cur.feats = add(cur.feats, time_embed(tag, width));
    cross_attend(cur, level, tag + ".xattn");
  }

  // The first n_l rows of level 0 are the latent rows, aligned with x_t.
  Var head_in = cur.feats;
  if (static_cast<int64_t>(cur.pos.size()) != n_l)
    head_in = slice_rows(head_in, 0, n_l);
  return nn::linear(g, ps, prefix_ + ".head", head_in, state_dim);
}

Tensor Denoiser::predict_noise_value(ParamStore& ps, const Tensor& x_t, int64_t t,
                                     const CondVars& cond) const {
  // cond belongs to some other graph; rebuild constants on a local one.
  Graph g;
  CondVars local = make_cond_vars(g, cond.sparse_pos, cond.feats.val(),
                                  cond.gmm_mean.val(), cond.gmm_var.val(),
                                  cond.has_distributions);
  return predict_noise(g, ps, x_t, t, local).val();
}

Tensor Denoiser::reverse_step_ddpm(ParamStore& ps, const Tensor& x_t, int64_t t,
                                   const CondVars& cond, const DiffusionSchedule& sched,
                                   const Tensor* z) const {
  if (t < 1 || t > sched.T) throw std::invalid_argument("reverse_step_ddpm: t out of range");
  const Tensor eps = predict_noise_value(ps, x_t, t, cond);
  Tensor out = ddpm_mean(x_t, t, eps, sched);
  if (t > 1 && z != nullptr) {
    const double sb = std::sqrt(sched.beta_at(t));
    for (int64_t i = 0; i < out.size(); ++i) out[i] += sb * (*z)[i];
  }
  return out;
}

Tensor Denoiser::ddim_sample(ParamStore& ps, int64_t rows, int64_t cols,
                             const CondVars& cond, const DiffusionSchedule& sched,
                             int64_t steps, uint64_t seed) const {
  const auto taus = ddim_timesteps(sched.T, steps);
  nn::Rng rng(seed);
  Tensor x(rows, cols);
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  for (size_t i = taus.size(); i-- > 0;) {
    const int64_t t = taus[i];
    const Tensor eps = predict_noise_value(ps, x, t, cond);
    const double ab_t = sched.alpha_bar_at(t);
    const double ab_prev = i == 0 ? 1.0 : sched.alpha_bar_at(taus[i - 1]);
    const double sa_t = std::sqrt(ab_t);
    const double sb_t = std::sqrt(1.0 - ab_t);
    const double sa_p = std::sqrt(ab_prev);
    const double sb_p = std::sqrt(1.0 - ab_prev);
    for (int64_t j = 0; j < x.size(); ++j) {
      const double x0 = (x[j] - sb_t * eps[j]) / sa_t;
      x[j] = sa_p * x0 + sb_p * eps[j];
    }
  }
  return x;
}

}  // namespace diffcom::diffusion
