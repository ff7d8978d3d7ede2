// SPDX-License-Identifier: Apache-2.0

#include "diffcom/nn/layers.hpp"

#include <cmath>

#include "diffcom/nn/detmath.hpp"

namespace diffcom::nn {

Var linear(Graph& g, ParamStore& ps, const std::string& prefix, Var x,
           int64_t out_dim, Init w_init) {
  const int64_t in_dim = x.val().cols();
  ps.ensure(prefix + ".w", in_dim, out_dim, w_init);
  ps.ensure(prefix + ".b", 1, out_dim, Init::kZeros);
  return add(matmul(x, g.param(ps, prefix + ".w")), g.param(ps, prefix + ".b"));
}

Var layer_norm(Graph& g, ParamStore& ps, const std::string& prefix, Var x) {
  const int64_t d = x.val().cols();
  ps.ensure(prefix + ".gain", 1, d, Init::kConstant, 1.0);
  ps.ensure(prefix + ".bias", 1, d, Init::kZeros);
  return add(mul(row_norm(x), g.param(ps, prefix + ".gain")),
             g.param(ps, prefix + ".bias"));
}

Tensor sinusoidal_embedding(double t, int64_t dim) {
  Tensor e(1, dim);
  const int64_t half = dim / 2;
  for (int64_t i = 0; i < half; ++i) {
    const double freq =
        detmath::exp(-detmath::kLn2 * 10.0 * static_cast<double>(i) /
                     static_cast<double>(half));
    e[2 * i] = detmath::sin(t * freq);
    e[2 * i + 1] = detmath::cos(t * freq);
  }
  if (dim % 2 == 1) e[dim - 1] = 1.0;
  return e;
}

Tensor to_tensor(const std::vector<geom::Vec3>& pts) {
  Tensor t(static_cast<int64_t>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) {
    t.at(static_cast<int64_t>(i), 0) = pts[i].x;
    t.at(static_cast<int64_t>(i), 1) = pts[i].y;
    t.at(static_cast<int64_t>(i), 2) = pts[i].z;
  }
  return t;
}

std::vector<geom::Vec3> to_points(const Tensor& t) {
  std::vector<geom::Vec3> pts(static_cast<size_t>(t.rows()));
  for (int64_t i = 0; i < t.rows(); ++i)
    pts[static_cast<size_t>(i)] = geom::Vec3{t.at(i, 0), t.at(i, 1), t.at(i, 2)};
  return pts;
}

Tensor neighbor_geometry(const std::vector<geom::Vec3>& queries,
                         const std::vector<geom::Vec3>& refs,
                         const std::vector<std::vector<int64_t>>& nbr) {
  const int64_t k = static_cast<int64_t>(nbr.empty() ? 0 : nbr[0].size());
  Tensor out(static_cast<int64_t>(queries.size()) * k, 4);
  for (size_t i = 0; i < queries.size(); ++i) {
    for (size_t j = 0; j < nbr[i].size(); ++j) {
      const geom::Vec3& q = queries[i];
      const geom::Vec3& p = refs[static_cast<size_t>(nbr[i][j])];
      const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      const int64_t r = static_cast<int64_t>(i) * k + static_cast<int64_t>(j);
      if (d > 0.0) {
        out.at(r, 0) = dx / d;
        out.at(r, 1) = dy / d;
        out.at(r, 2) = dz / d;
      }
      out.at(r, 3) = d;
    }
  }
  return out;
}

std::vector<int64_t> flatten_indices(const std::vector<std::vector<int64_t>>& nbr) {
  std::vector<int64_t> flat;
  flat.reserve(nbr.size() * (nbr.empty() ? 0 : nbr[0].size()));
  for (const auto& row : nbr)
    for (int64_t v : row) flat.push_back(v);
  return flat;
}

Var neighborhood_attention(Graph& g, ParamStore& ps, const std::string& prefix,
                           Var q_feat, Var nbr_emb, int64_t k, int64_t dim) {
  Var q = linear(g, ps, prefix + ".q", q_feat, dim);
  Var kk = linear(g, ps, prefix + ".k", nbr_emb, dim);
  Var v = linear(g, ps, prefix + ".v", nbr_emb, dim);
  Var logits = scale(group_dot(q, kk, k), 1.0 / std::sqrt(static_cast<double>(dim)));
  Var attn = row_softmax(logits);
  return group_weighted_sum(attn, v, k);
}

}  // namespace diffcom::nn
