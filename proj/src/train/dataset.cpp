// SPDX-License-Identifier: Apache-2.0

#include "diffcom/train/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "diffcom/geom/io.hpp"
#include "diffcom/geom/sampling.hpp"
#include "diffcom/nn/rng.hpp"
#include "diffcom/train/synthetic.hpp"

namespace diffcom::train {

using geom::PointCloud;
using geom::Vec3;

namespace {

std::vector<Vec3> fit_count(const std::vector<Vec3>& pts, int target, uint64_t seed,
                            const std::string& name) {
  const int64_t n = static_cast<int64_t>(pts.size());
  if (n == target) return pts;
  if (n > target) {
    const auto idx = geom::farthest_point_sampling(pts, target, seed);
    std::vector<Vec3> out(static_cast<size_t>(target));
    for (int i = 0; i < target; ++i) out[static_cast<size_t>(i)] = pts[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    return out;
  }
  std::cerr << "dataset: " << name << " has " << n << " points < " << target
            << ", resampling with replacement\n";
  nn::Rng rng(seed);
  std::vector<Vec3> out(pts);
  out.reserve(static_cast<size_t>(target));
  while (static_cast<int>(out.size()) < target)
    out.push_back(pts[static_cast<size_t>(rng.uniform_index(static_cast<uint64_t>(n)))]);
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& source, int points_per_cloud, uint64_t seed) {
  Dataset ds;
  if (source.rfind("synth:", 0) == 0) {
    std::string rest = source.substr(6);
    const size_t colon = rest.find(':');
    const std::string recipe = colon == std::string::npos ? rest : rest.substr(0, colon);
    const int count = colon == std::string::npos
                          ? 8
                          : std::max(1, std::atoi(rest.substr(colon + 1).c_str()));

    // Optional on-disk cache keyed by the full request.
    std::filesystem::path cache_dir;
    if (const char* cache = std::getenv("DIFFCOM_CACHE"); cache != nullptr) {
      cache_dir = std::filesystem::path(cache) /
                  ("synth_" + recipe + "_" + std::to_string(count) + "_" +
                   std::to_string(points_per_cloud) + "_" + std::to_string(seed));
    }
    if (!cache_dir.empty() && std::filesystem::exists(cache_dir)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(cache_dir))
        if (e.path().extension() == ".ply") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (static_cast<int>(files.size()) == count) {
        for (const auto& f : files) {
          ds.clouds.push_back(geom::load_point_cloud(f.string()).points());
          ds.names.push_back(f.filename().string());
        }
        return ds;
      }
    }

    const auto clouds = make_synthetic_dataset(recipe, count, points_per_cloud, seed);
    for (size_t i = 0; i < clouds.size(); ++i) {
      ds.clouds.push_back(clouds[i].points());
      ds.names.push_back(recipe + "_" + std::to_string(i));
    }
    if (!cache_dir.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(cache_dir, ec);
      if (!ec) {
        for (size_t i = 0; i < clouds.size(); ++i) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%04zu.ply", i);
          geom::save_point_cloud((cache_dir / buf).string(), clouds[i]);
        }
      }
    }
    return ds;
  }

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(source)) {
    const auto ext = e.path().extension();
    if (ext == ".ply" || ext == ".xyz") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::invalid_argument("load_dataset: no .ply/.xyz in " + source);
  for (size_t i = 0; i < files.size(); ++i) {
    PointCloud pc = geom::load_point_cloud(files[i].string());
    PointCloud normed = geom::normalize_unit_cube(pc);
    ds.clouds.push_back(fit_count(normed.points(), points_per_cloud,
                                  nn::hash_combine(seed, static_cast<uint64_t>(i)),
                                  files[i].filename().string()));
    ds.names.push_back(files[i].filename().string());
  }
  return ds;
}

}  // namespace diffcom::train
