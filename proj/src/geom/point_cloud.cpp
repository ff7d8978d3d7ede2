// SPDX-License-Identifier: Apache-2.0

#include "diffcom/geom/point_cloud.hpp"

#include <algorithm>
#include <cmath>

namespace diffcom::geom {

PointCloud normalize_unit_cube(const PointCloud& pc) {
  if (pc.empty()) throw std::invalid_argument("normalize_unit_cube: empty cloud");
  Vec3 lo = pc[0], hi = pc[0];
  for (const Vec3& p : pc.points()) {
    for (int i = 0; i < 3; ++i) {
      if (!std::isfinite(p[i]))
        throw std::invalid_argument("normalize_unit_cube: non-finite coordinate");
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  }
  NormalizationInfo info;
  info.center = Vec3{(lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, (lo.z + hi.z) / 2.0};
  const double edge = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  info.scale = edge > 0.0 ? edge : 1.0;

  PointCloud out;
  out.points().reserve(pc.size());
  for (const Vec3& p : pc.points())
    out.points().push_back(Vec3{(p.x - info.center.x) / info.scale,
                                (p.y - info.center.y) / info.scale,
                                (p.z - info.center.z) / info.scale});
  out.set_norm(info);
  return out;
}

PointCloud denormalize(const PointCloud& pc, const NormalizationInfo& info) {
  PointCloud out;
  out.points().reserve(pc.size());
  for (const Vec3& p : pc.points())
    out.points().push_back(Vec3{p.x * info.scale + info.center.x,
                                p.y * info.scale + info.center.y,
                                p.z * info.scale + info.center.z});
  return out;
}

double bbox_diagonal(const PointCloud& pc) {
  if (pc.empty()) return 0.0;
  Vec3 lo = pc[0], hi = pc[0];
  for (const Vec3& p : pc.points())
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  return std::sqrt(sq_dist(lo, hi));
}

}  // namespace diffcom::geom
