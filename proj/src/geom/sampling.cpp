// SPDX-License-Identifier: Apache-2.0

#include "diffcom/geom/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "diffcom/nn/rng.hpp"

namespace diffcom::geom {

std::vector<int64_t> farthest_point_sampling_from(const std::vector<Vec3>& pts,
                                                  int64_t m, int64_t first) {
  const int64_t n = static_cast<int64_t>(pts.size());
  if (m < 1 || m > n) throw std::invalid_argument("fps: m out of range");
  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(m));
  std::vector<double> min_d(static_cast<size_t>(n),
                            std::numeric_limits<double>::infinity());
  int64_t cur = first;
  picked.push_back(cur);
  for (int64_t step = 1; step < m; ++step) {
    int64_t best = -1;
    double best_d = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = sq_dist(pts[static_cast<size_t>(i)], pts[static_cast<size_t>(cur)]);
      if (d < min_d[static_cast<size_t>(i)]) min_d[static_cast<size_t>(i)] = d;
      if (min_d[static_cast<size_t>(i)] > best_d) {
        best_d = min_d[static_cast<size_t>(i)];
        best = i;  // strict > keeps the lowest index on ties
      }
    }
    picked.push_back(best);
    cur = best;
  }
  return picked;
}

std::vector<int64_t> farthest_point_sampling(const std::vector<Vec3>& pts,
                                             int64_t m, uint64_t seed) {
  const int64_t n = static_cast<int64_t>(pts.size());
  if (m < 1 || m > n) throw std::invalid_argument("fps: m out of range");
  nn::Rng rng(seed);
  const int64_t first = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n)));
  return farthest_point_sampling_from(pts, m, first);
}

int64_t lexicographic_min_index(const std::vector<Vec3>& pts) {
  int64_t best = 0;
  for (int64_t i = 1; i < static_cast<int64_t>(pts.size()); ++i) {
    const Vec3& a = pts[static_cast<size_t>(i)];
    const Vec3& b = pts[static_cast<size_t>(best)];
    if (a.x < b.x || (a.x == b.x && (a.y < b.y || (a.y == b.y && a.z < b.z))))
      best = i;
  }
  return best;
}

std::vector<std::vector<int64_t>> knn(const std::vector<Vec3>& queries,
                                      const std::vector<Vec3>& refs, int64_t k) {
  const int64_t r = static_cast<int64_t>(refs.size());
  if (k < 1 || k > r) throw std::invalid_argument("knn: k out of range");
  std::vector<std::vector<int64_t>> out(queries.size());
  std::vector<std::pair<double, int64_t>> d(static_cast<size_t>(r));
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    for (int64_t i = 0; i < r; ++i)
      d[static_cast<size_t>(i)] = {sq_dist(queries[qi], refs[static_cast<size_t>(i)]), i};
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    out[qi].resize(static_cast<size_t>(k));
    for (int64_t j = 0; j < k; ++j) out[qi][static_cast<size_t>(j)] = d[static_cast<size_t>(j)].second;
  }
  return out;
}

}  // namespace diffcom::geom
