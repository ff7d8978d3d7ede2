// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcom/geom/point_cloud.hpp"

namespace diffcom::train {

// Uniform surface samples of a primitive, normalized to the unit cube.
// recipe: one of "sphere", "cube", "cylinder", "torus", or "mixed"
// (cycles through all four). Per-index anisotropic stretch keeps clouds
// distinct; same seed reproduces the same dataset.
std::vector<geom::PointCloud> make_synthetic_dataset(const std::string& recipe,
                                                     int count, int points,
                                                     uint64_t seed);

}  // namespace diffcom::train
