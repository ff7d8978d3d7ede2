// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include "diffcom/geom/point_cloud.hpp"

namespace diffcom::geom {

enum class Format { kPlyAscii, kPlyBinaryLE, kXyzText, kAuto };

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyCloudError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reads all vertices in file order; no deduplication. PLY vertex elements
// must provide float or double x/y/z; other scalar properties are skipped.
// kAuto sniffs the PLY magic and falls back to XYZ text.
PointCloud load_point_cloud(const std::string& path, Format format = Format::kAuto);

void save_point_cloud(const std::string& path, const PointCloud& pc,
                      Format format = Format::kPlyBinaryLE);

}  // namespace diffcom::geom
