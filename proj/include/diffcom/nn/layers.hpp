// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "diffcom/geom/point_cloud.hpp"
#include "diffcom/nn/graph.hpp"

namespace diffcom::nn {

// y = x W + b with parameters "<prefix>.w" / "<prefix>.b".
Var linear(Graph& g, ParamStore& ps, const std::string& prefix, Var x,
           int64_t out_dim, Init w_init = Init::kXavier);

// Learned per-row layer norm: gain * row_norm(x) + bias.
Var layer_norm(Graph& g, ParamStore& ps, const std::string& prefix, Var x);

// Sinusoidal embedding of a scalar step index (no parameters).
Tensor sinusoidal_embedding(double t, int64_t dim);

Tensor to_tensor(const std::vector<geom::Vec3>& pts);
std::vector<geom::Vec3> to_points(const Tensor& t);

// [unit_dir, dist] rows for each (query, neighbor) pair, computed outside
// the graph when both sides are constants. Coincident pairs give exact
// zeros.
Tensor neighbor_geometry(const std::vector<geom::Vec3>& queries,
                         const std::vector<geom::Vec3>& refs,
                         const std::vector<std::vector<int64_t>>& nbr);

std::vector<int64_t> flatten_indices(const std::vector<std::vector<int64_t>>& nbr);

// Grouped single-head attention over k-neighborhoods.
// q_feat: n x dq (per query), nbr_emb: (n*k) x de. Projects to `dim` and
// returns n x dim.
Var neighborhood_attention(Graph& g, ParamStore& ps, const std::string& prefix,
                           Var q_feat, Var nbr_emb, int64_t k, int64_t dim);

}  // namespace diffcom::nn
