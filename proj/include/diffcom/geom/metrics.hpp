// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "diffcom/geom/point_cloud.hpp"

namespace diffcom::geom {

// Symmetric squared-distance Chamfer distance: mean over a of squared
// nearest-neighbor distance to b, plus the same in the other direction.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// Directional mean squared nearest-neighbor distance from a to b.
double mse_nn(const PointCloud& a, const PointCloud& b);

inline constexpr double kPsnrCap = 999.0;

// D1 point-to-point PSNR: 10*log10(peak^2 / max(mse(ref->rec), mse(rec->ref))).
// peak <= 0 selects the reference bounding-box diagonal. Zero error returns
// the 999.0 cap so JSON reports stay finite.
double d1_psnr(const PointCloud& ref, const PointCloud& rec, double peak = 0.0);

struct BDResult {
  double bd_psnr = 0.0;  // dB, positive favors curve_b
  double bd_rate = 0.0;  // percent, negative favors curve_b
};

// Bjontegaard deltas between two RD curves (>= 4 points each, strictly
// increasing bpp, overlapping ranges). Cubic fit of psnr vs log10(bpp)
// and the inverse fit for the rate delta.
BDResult bd_metrics(const std::vector<RDPoint>& curve_a,
                    const std::vector<RDPoint>& curve_b);

// Least-squares polynomial fit (degree 3 for 4+ points). Exposed for the
// test-side numeric integration oracle.
std::vector<double> polyfit_cubic(const std::vector<double>& x,
                                  const std::vector<double>& y);

}  // namespace diffcom::geom
