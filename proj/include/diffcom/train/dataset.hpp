// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcom/geom/point_cloud.hpp"

namespace diffcom::train {

// Normalized clouds with exactly points_per_cloud points each.
struct Dataset {
  std::vector<std::vector<geom::Vec3>> clouds;
  std::vector<std::string> names;
};

// source: "synth:<recipe>:<count>" or a directory of .ply/.xyz files.
// Larger clouds are FPS-downsampled; smaller ones are resampled with
// replacement (flagged on stderr). Synthetic sets are cached under
// $DIFFCOM_CACHE when it is set.
Dataset load_dataset(const std::string& source, int points_per_cloud, uint64_t seed);

}  // namespace diffcom::train
