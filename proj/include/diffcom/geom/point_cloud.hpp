// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace diffcom::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

struct NormalizationInfo {
  Vec3 center;
  double scale = 1.0;  // original units per normalized unit, > 0
};

class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points_(std::move(pts)) {}

  size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  Vec3& operator[](size_t i) { return points_[i]; }
  const Vec3& operator[](size_t i) const { return points_[i]; }
  std::vector<Vec3>& points() { return points_; }
  const std::vector<Vec3>& points() const { return points_; }

  const std::optional<NormalizationInfo>& norm() const { return norm_; }
  void set_norm(NormalizationInfo n) { norm_ = n; }

 private:
  std::vector<Vec3> points_;
  std::optional<NormalizationInfo> norm_;
};

struct RDPoint {
  double bpp = 0.0;   // >= 0
  double psnr = 0.0;  // dB
};

// Recentres to the bounding-box midpoint and scales so the longest box
// edge is 1. A single point (or fully degenerate box) maps to the origin
// with scale 1. Throws std::invalid_argument on non-finite input.
PointCloud normalize_unit_cube(const PointCloud& pc);

PointCloud denormalize(const PointCloud& pc, const NormalizationInfo& info);

// Bounding-box diagonal length, the default PSNR peak.
double bbox_diagonal(const PointCloud& pc);

}  // namespace diffcom::geom
