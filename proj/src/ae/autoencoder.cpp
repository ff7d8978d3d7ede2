// SPDX-License-Identifier: Apache-2.0

#include "diffcom/ae/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffcom/geom/sampling.hpp"

namespace diffcom::ae {

using geom::Vec3;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

int64_t stage_count(int64_t n, double rate) {
  const int64_t m = static_cast<int64_t>(std::ceil(rate * static_cast<double>(n)));
  return std::max<int64_t>(1, m);
}

// The 26 unit directions of the 3x3x3 lattice, the predefined hypotheses
// for upsampling residuals. Uniform weights cancel to the zero vector.
const Tensor& lattice_directions() {
  static const Tensor dirs = [] {
    Tensor d(26, 3);
    int64_t r = 0;
    for (int x = -1; x <= 1; ++x)
      for (int y = -1; y <= 1; ++y)
        for (int z = -1; z <= 1; ++z) {
          if (x == 0 && y == 0 && z == 0) continue;
          const double len = std::sqrt(static_cast<double>(x * x + y * y + z * z));
          d.at(r, 0) = x / len;
          d.at(r, 1) = y / len;
          d.at(r, 2) = z / len;
          ++r;
        }
    return d;
  }();
  return dirs;
}

}  // namespace

int64_t AeConfig::latent_count(int64_t n) const {
  int64_t m = n;
  for (double r : encoder.rates) m = stage_count(m, r);
  return m;
}

int64_t AeConfig::output_count(int64_t latent_n) const {
  int64_t m = latent_n;
  for (int f : decoder.factors) m *= f;
  return m;
}

void AeConfig::validate() const {
  if (encoder.rates.empty() || encoder.rates.size() != encoder.dims.size())
    throw std::invalid_argument("AeConfig: encoder rates/dims mismatch");
  if (decoder.factors.empty() || decoder.factors.size() != decoder.dims.size())
    throw std::invalid_argument("AeConfig: decoder factors/dims mismatch");
  for (int f : decoder.factors)
    if (decoder.k_candidates <= f)
      throw std::invalid_argument("AeConfig: k_candidates must exceed every factor");
  if (decoder.refine_candidates < 1)
    throw std::invalid_argument("AeConfig: refine_candidates must be >= 1");
}

StageResult PointEncoder::downsample_block(Graph& g, ParamStore& ps, int stage,
                                           const std::vector<Vec3>& pts,
                                           Var feats) const {
  const std::string name = prefix_ + ".s" + std::to_string(stage);
  const int64_t n = static_cast<int64_t>(pts.size());
  const int64_t m = stage_count(n, cfg_.rates[static_cast<size_t>(stage)]);
  const int64_t k = std::min<int64_t>(cfg_.k_neighbors, n);
  const int dim = cfg_.dims[static_cast<size_t>(stage)];

  const auto order = geom::farthest_point_sampling_from(
      pts, m, geom::lexicographic_min_index(pts));
  std::vector<Vec3> q_pos(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i)
    q_pos[static_cast<size_t>(i)] = pts[static_cast<size_t>(order[static_cast<size_t>(i)])];

  const auto nbr = geom::knn(q_pos, pts, k);
  const auto flat = nn::flatten_indices(nbr);

  // Explicit local geometry embedding with self-gating.
  Var geo = g.input(nn::neighbor_geometry(q_pos, pts, nbr));
  Var nbr_feats = gather_rows(feats, flat);
  Var e = silu(nn::linear(g, ps, name + ".emb", concat_cols(geo, nbr_feats), dim));
  Var gate = sigmoid(nn::linear(g, ps, name + ".gate", e, dim));
  e = mul(e, gate);
  Var explicit_emb = group_mean(e, k);

  // Neighborhood attention: selected points query their source neighborhood.
  Var q_feat = gather_rows(feats, order);
  Var agg = nn::neighborhood_attention(g, ps, name + ".attn", q_feat, e, k, dim);

  Var merged = silu(nn::linear(g, ps, name + ".merge",
                               concat_cols(explicit_emb, agg), dim));
  merged = nn::layer_norm(g, ps, name + ".ln", merged);
  return StageResult{std::move(q_pos), merged};
}

StageResult PointEncoder::encode(Graph& g, ParamStore& ps,
                                 const std::vector<Vec3>& pts) const {
  if (pts.empty()) throw std::invalid_argument("encode: empty cloud");
  Var feats = silu(nn::linear(g, ps, prefix_ + ".lift",
                              g.input(nn::to_tensor(pts)), cfg_.lift_dim));
  StageResult cur{pts, feats};
  for (int s = 0; s < static_cast<int>(cfg_.rates.size()); ++s)
    cur = downsample_block(g, ps, s, cur.positions, cur.features);
  cur.features = tanh_op(nn::linear(g, ps, prefix_ + ".head", cur.features,
                                    cfg_.dims.back()));
  return cur;
}

PointDecoder::UpResult PointDecoder::upsample_block(Graph& g, ParamStore& ps,
                                                    const std::string& name, Var pos,
                                                    Var feats, int factor,
                                                    int candidates,
                                                    int out_dim) const {
  const int64_t m = pos.val().rows();
  const Tensor& dirs = lattice_directions();
  Var dirs_v = g.input(dirs);

  // Residual heads start at zero so candidates coincide with parents.
  Var dir_logits = nn::linear(g, ps, name + ".dirw", feats, candidates * 26,
                              nn::Init::kZeros);
  Var scales = softplus(nn::linear(g, ps, name + ".scale", feats, candidates,
                                   nn::Init::kZeros));
  Var conf = sigmoid(nn::linear(g, ps, name + ".conf", feats, candidates));

  std::vector<Var> cand_pos, cand_feat;
  cand_pos.reserve(static_cast<size_t>(candidates));
  for (int c = 0; c < candidates; ++c) {
    Var w = row_softmax(slice_cols(dir_logits, c * 26, (c + 1) * 26));
    Var dir = matmul(w, dirs_v);
    Var res = mul(dir, slice_cols(scales, c, c + 1));
    cand_pos.push_back(add(pos, res));
    Var f = silu(nn::linear(g, ps, name + ".sub" + std::to_string(c), feats, out_dim));
    cand_feat.push_back(f);
  }

  // Keep the top `factor` candidates per parent by confidence, ties to the
  // lowest candidate index; features are gated by their confidence so the
  // head receives training signal.
  const Tensor& cv = conf.val();
  std::vector<int64_t> pick;  // parent-major selected candidate ids
  pick.reserve(static_cast<size_t>(m * factor));
  std::vector<int> cand_ids(static_cast<size_t>(candidates));
  for (int64_t i = 0; i < m; ++i) {
    for (int c = 0; c < candidates; ++c) cand_ids[static_cast<size_t>(c)] = c;
    std::stable_sort(cand_ids.begin(), cand_ids.end(), [&](int a, int b) {
      return cv.at(i, a) > cv.at(i, b);
    });
    std::vector<int> sel(cand_ids.begin(), cand_ids.begin() + factor);
    std::sort(sel.begin(), sel.end());
    for (int c : sel) pick.push_back(i * candidates + c);
  }

  // Stack candidates parent-major: row i*candidates + c.
  Var all_pos = cand_pos[0];
  Var all_feat = cand_feat[0];
  if (candidates > 1) {
    // interleave by building (m*candidates) rows via per-candidate gather
    std::vector<Var> pos_parts(cand_pos), feat_parts(cand_feat);
    // concat then permute with gather: rows c*m + i -> want i*candidates + c
    Var pos_cat = pos_parts[0], feat_cat = feat_parts[0];
    for (int c = 1; c < candidates; ++c) {
      pos_cat = concat_rows(pos_cat, pos_parts[static_cast<size_t>(c)]);
      feat_cat = concat_rows(feat_cat, feat_parts[static_cast<size_t>(c)]);
    }
    std::vector<int64_t> perm(static_cast<size_t>(m * candidates));
    for (int64_t i = 0; i < m; ++i)
      for (int c = 0; c < candidates; ++c)
        perm[static_cast<size_t>(i * candidates + c)] = c * m + i;
    all_pos = gather_rows(pos_cat, perm);
    all_feat = gather_rows(feat_cat, perm);
  }

  Var sel_pos = gather_rows(all_pos, pick);
  Var sel_feat = gather_rows(all_feat, pick);
  // flatten conf (m x candidates) to (m*candidates x 1), parent-major
  Var conf_col = slice_cols(conf, 0, 1);
  if (candidates > 1) {
    Var cat = conf_col;
    for (int c = 1; c < candidates; ++c)
      cat = concat_rows(cat, slice_cols(conf, c, c + 1));
    std::vector<int64_t> perm(static_cast<size_t>(m * candidates));
    for (int64_t i = 0; i < m; ++i)
      for (int c = 0; c < candidates; ++c)
        perm[static_cast<size_t>(i * candidates + c)] = c * m + i;
    conf_col = gather_rows(cat, perm);
  }
  Var sel_conf = gather_rows(conf_col, pick);
  sel_feat = mul(sel_feat, sel_conf);
  return UpResult{sel_pos, sel_feat};
}

Var PointDecoder::decode(Graph& g, ParamStore& ps, Var latent_pos,
                         Var latent_feats) const {
  Var pos = latent_pos;
  Var feats = latent_feats;
  for (int s = 0; s < static_cast<int>(cfg_.factors.size()); ++s) {
    const std::string name = prefix_ + ".s" + std::to_string(s);
    auto up = upsample_block(g, ps, name, pos, feats, cfg_.factors[static_cast<size_t>(s)],
                             cfg_.k_candidates, cfg_.dims[static_cast<size_t>(s)]);
    pos = up.positions;
    feats = up.features;
  }
  auto refine = upsample_block(g, ps, prefix_ + ".refine", pos, feats, 1,
                               cfg_.refine_candidates, cfg_.dims.back());
  return refine.positions;
}

StageResult PointAutoencoder::encode_vars(Graph& g, ParamStore& ps,
                                          const std::vector<Vec3>& pts) const {
  return encoder_.encode(g, ps, pts);
}

Var PointAutoencoder::decode_vars(Graph& g, ParamStore& ps,
                                  const LatentSet& latents) const {
  return decoder_.decode(g, ps, g.input(latents.positions), g.input(latents.features));
}

LatentSet PointAutoencoder::encode(ParamStore& ps, const std::vector<Vec3>& pts) const {
  Graph g;
  StageResult r = encoder_.encode(g, ps, pts);
  return LatentSet{nn::to_tensor(r.positions), r.features.val()};
}

std::vector<Vec3> PointAutoencoder::decode(ParamStore& ps,
                                           const LatentSet& latents) const {
  Graph g;
  Var out = decoder_.decode(g, ps, g.input(latents.positions),
                            g.input(latents.features));
  return nn::to_points(out.val());
}

Var chamfer_loss(Graph& g, Var decoded, const std::vector<Vec3>& target) {
  const Tensor& dv = decoded.val();
  const auto dec_pts = nn::to_points(dv);
  if (dec_pts.empty() || target.empty())
    throw std::invalid_argument("chamfer_loss: empty cloud");

  // dec -> target assignments
  const auto a = geom::knn(dec_pts, target, 1);
  std::vector<int64_t> a_idx(dec_pts.size());
  for (size_t i = 0; i < dec_pts.size(); ++i) a_idx[i] = a[i][0];
  Tensor tgt_a(static_cast<int64_t>(dec_pts.size()), 3);
  for (size_t i = 0; i < dec_pts.size(); ++i) {
    tgt_a.at(static_cast<int64_t>(i), 0) = target[static_cast<size_t>(a_idx[i])].x;
    tgt_a.at(static_cast<int64_t>(i), 1) = target[static_cast<size_t>(a_idx[i])].y;
    tgt_a.at(static_cast<int64_t>(i), 2) = target[static_cast<size_t>(a_idx[i])].z;
  }
  Var term1 = mean_all(row_sum(square(sub(decoded, g.input(tgt_a)))));

  // target -> dec assignments
  const auto b = geom::knn(target, dec_pts, 1);
  std::vector<int64_t> b_idx(target.size());
  for (size_t i = 0; i < target.size(); ++i) b_idx[i] = b[i][0];
  Var dec_b = gather_rows(decoded, b_idx);
  Var term2 = mean_all(row_sum(square(sub(dec_b, g.input(nn::to_tensor(target))))));

  return add(term1, term2);
}

}  // namespace diffcom::ae
