// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "diffcom/geom/point_cloud.hpp"

namespace diffcom::geom {

// Farthest point sampling. The first index is drawn uniformly from a
// seed-derived RNG; each following pick maximizes the minimum distance to
// the already-selected set, ties broken by lowest index.
std::vector<int64_t> farthest_point_sampling(const std::vector<Vec3>& pts,
                                             int64_t m, uint64_t seed);

// Same procedure with a forced first index. Selecting m = n yields a
// permutation. Used by the encoders with a geometry-canonical start.
std::vector<int64_t> farthest_point_sampling_from(const std::vector<Vec3>& pts,
                                                  int64_t m, int64_t first);

// Index of the lexicographically smallest (x, y, z) point; ties broken by
// lowest index. Permutation-invariant start for encoder-internal FPS.
int64_t lexicographic_min_index(const std::vector<Vec3>& pts);

// k nearest neighbors of each query among refs, sorted by ascending
// distance, distance ties broken by lowest index. Throws if k > |refs|.
std::vector<std::vector<int64_t>> knn(const std::vector<Vec3>& queries,
                                      const std::vector<Vec3>& refs, int64_t k);

}  // namespace diffcom::geom
