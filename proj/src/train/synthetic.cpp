// SPDX-License-Identifier: Apache-2.0

#include "diffcom/train/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffcom/nn/rng.hpp"

namespace diffcom::train {

using geom::PointCloud;
using geom::Vec3;

namespace {

Vec3 sample_sphere(nn::Rng& rng) {
  // Uniform on the unit sphere via z and azimuth.
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * detmath::kPi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Vec3{r * detmath::cos(phi), r * detmath::sin(phi), z};
}

Vec3 sample_cube(nn::Rng& rng) {
  // Area-uniform over the 6 faces of the [-1,1]^3 cube.
  const int face = static_cast<int>(rng.uniform_index(6));
  const double u = rng.uniform(-1.0, 1.0);
  const double v = rng.uniform(-1.0, 1.0);
  const double s = face % 2 == 0 ? -1.0 : 1.0;
  switch (face / 2) {
    case 0: return Vec3{s, u, v};
    case 1: return Vec3{u, s, v};
    default: return Vec3{u, v, s};
  }
}

Vec3 sample_cylinder(nn::Rng& rng) {
  // Lateral surface plus two caps, area-weighted; radius 1, height 2.
  const double lateral = 2.0 * detmath::kPi * 1.0 * 2.0;
  const double caps = 2.0 * detmath::kPi;
  const bool on_side = rng.uniform01() < lateral / (lateral + caps);
  const double phi = rng.uniform(0.0, 2.0 * detmath::kPi);
  if (on_side)
    return Vec3{detmath::cos(phi), detmath::sin(phi), rng.uniform(-1.0, 1.0)};
  const double r = std::sqrt(rng.uniform01());
  const double z = rng.uniform01() < 0.5 ? -1.0 : 1.0;
  return Vec3{r * detmath::cos(phi), r * detmath::sin(phi), z};
}

Vec3 sample_torus(nn::Rng& rng) {
  // Major radius 1, minor 0.4; rejection keeps the surface uniform.
  constexpr double R = 1.0, r = 0.4;
  for (;;) {
    const double u = rng.uniform(0.0, 2.0 * detmath::kPi);
    const double v = rng.uniform(0.0, 2.0 * detmath::kPi);
    const double w = rng.uniform01();
    if (w <= (R + r * detmath::cos(v)) / (R + r)) {
      return Vec3{(R + r * detmath::cos(v)) * detmath::cos(u),
                  (R + r * detmath::cos(v)) * detmath::sin(u), r * detmath::sin(v)};
    }
  }
}

}  // namespace

std::vector<PointCloud> make_synthetic_dataset(const std::string& recipe, int count,
                                               int points, uint64_t seed) {
  if (points < 64) throw std::invalid_argument("make_synthetic_dataset: points >= 64");
  std::vector<std::string> kinds;
  if (recipe == "mixed") {
    kinds = {"sphere", "cube", "cylinder", "torus"};
  } else if (recipe == "sphere" || recipe == "cube" || recipe == "cylinder" ||
             recipe == "torus") {
    kinds = {recipe};
  } else {
    throw std::invalid_argument("make_synthetic_dataset: unknown recipe " + recipe);
  }

  std::vector<PointCloud> out;
  out.reserve(static_cast<size_t>(count));
  for (int idx = 0; idx < count; ++idx) {
    const std::string kind = kinds[static_cast<size_t>(idx) % kinds.size()];
    nn::Rng rng(nn::hash_combine(nn::hash_combine(seed, kind), static_cast<uint64_t>(idx)));
    // Mild anisotropic stretch so same-kind clouds are distinct shapes;
    // the first cycle stays canonical.
    Vec3 sc{1.0, 1.0, 1.0};
    if (idx >= static_cast<int>(kinds.size())) {
      sc = Vec3{rng.uniform(0.7, 1.3), rng.uniform(0.7, 1.3), rng.uniform(0.7, 1.3)};
    }
    // Analytic half-extents of the unstretched surface, so normalization
    // is exact rather than sample-dependent.
    Vec3 half{1.0, 1.0, 1.0};
    if (kind == "torus") half = Vec3{1.4, 1.4, 0.4};
    const double scale =
        2.0 * std::max({half.x * sc.x, half.y * sc.y, half.z * sc.z});

    PointCloud pc;
    pc.points().reserve(static_cast<size_t>(points));
    for (int i = 0; i < points; ++i) {
      Vec3 p;
      if (kind == "sphere") p = sample_sphere(rng);
      else if (kind == "cube") p = sample_cube(rng);
      else if (kind == "cylinder") p = sample_cylinder(rng);
      else p = sample_torus(rng);
      pc.points().push_back(
          Vec3{p.x * sc.x / scale, p.y * sc.y / scale, p.z * sc.z / scale});
    }
    pc.set_norm(geom::NormalizationInfo{Vec3{0.0, 0.0, 0.0}, scale});
    out.push_back(std::move(pc));
  }
  return out;
}

}  // namespace diffcom::train
