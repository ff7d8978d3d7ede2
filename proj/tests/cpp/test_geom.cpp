// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "diffcom/geom/io.hpp"
#include "diffcom/geom/metrics.hpp"
#include "diffcom/geom/point_cloud.hpp"
#include "diffcom/geom/sampling.hpp"
#include "diffcom/nn/rng.hpp"

using namespace diffcom;
using geom::PointCloud;
using geom::Vec3;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("diffcom_geom_" + name);
}

PointCloud random_cloud(nn::Rng& rng, int n, double s = 1.0) {
  PointCloud pc;
  for (int i = 0; i < n; ++i)
    pc.points().push_back(
        Vec3{s * rng.normal(), s * rng.normal(), s * rng.normal()});
  return pc;
}

// Brute-force FPS oracle: recomputes all pairwise distances each step.
std::vector<int64_t> fps_oracle(const std::vector<Vec3>& pts, int64_t m, int64_t first) {
  std::vector<int64_t> sel{first};
  while (static_cast<int64_t>(sel.size()) < m) {
    int64_t best = -1;
    double best_d = -1.0;
    for (int64_t i = 0; i < static_cast<int64_t>(pts.size()); ++i) {
      double mind = std::numeric_limits<double>::infinity();
      for (int64_t s : sel)
        mind = std::min(mind, geom::sq_dist(pts[static_cast<size_t>(i)],
                                            pts[static_cast<size_t>(s)]));
      if (mind > best_d) {
        best_d = mind;
        best = i;
      }
    }
    sel.push_back(best);
  }
  return sel;
}

PointCloud rotate(const PointCloud& pc, double ax, double ay, double az) {
  const double ca = std::cos(ax), sa = std::sin(ax);
  const double cb = std::cos(ay), sb = std::sin(ay);
  const double cc = std::cos(az), sc = std::sin(az);
  PointCloud out;
  for (const Vec3& p : pc.points()) {
    // Rz * Ry * Rx applied in sequence
    Vec3 q{p.x, p.y * ca - p.z * sa, p.y * sa + p.z * ca};
    Vec3 r{q.x * cb + q.z * sb, q.y, -q.x * sb + q.z * cb};
    out.points().push_back(Vec3{r.x * cc - r.y * sc, r.x * sc + r.y * cc, r.z});
  }
  return out;
}

}  // namespace

TEST_CASE("ply ascii load: order preserved") {
  const auto path = temp_file("tri.ply");
  {
    std::ofstream f(path);
    f << "ply\nformat ascii 1.0\nelement vertex 3\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n"
      << "0 0 0\n1 0 0\n0 1 0\n";
  }
  const PointCloud pc = geom::load_point_cloud(path.string());
  REQUIRE(pc.size() == 3);
  CHECK(pc[1].x == 1.0);
  CHECK(pc[2].y == 1.0);
}

TEST_CASE("ply binary little-endian matches ascii geometry") {
  PointCloud pc;
  pc.points() = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const auto pa = temp_file("a.ply");
  const auto pb = temp_file("b.ply");
  geom::save_point_cloud(pa.string(), pc, geom::Format::kPlyAscii);
  geom::save_point_cloud(pb.string(), pc, geom::Format::kPlyBinaryLE);
  const PointCloud a = geom::load_point_cloud(pa.string());
  const PointCloud b = geom::load_point_cloud(pb.string());
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].z == b[i].z);
  }
}

TEST_CASE("ply declaring more vertices than present is a parse error") {
  const auto path = temp_file("short.ply");
  {
    std::ofstream f(path);
    f << "ply\nformat ascii 1.0\nelement vertex 5\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n"
      << "0 0 0\n1 0 0\n0 1 0\n";
  }
  CHECK_THROWS_AS(geom::load_point_cloud(path.string()), geom::ParseError);
}

TEST_CASE("ply with zero vertices is an empty-cloud error") {
  const auto path = temp_file("empty.ply");
  {
    std::ofstream f(path);
    f << "ply\nformat ascii 1.0\nelement vertex 0\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n";
  }
  CHECK_THROWS_AS(geom::load_point_cloud(path.string()), geom::EmptyCloudError);
}

TEST_CASE("xyz text roundtrip") {
  const auto path = temp_file("c.xyz");
  {
    std::ofstream f(path);
    f << "# comment\n0.5 -1 2\n3 4 5\n";
  }
  const PointCloud pc = geom::load_point_cloud(path.string(), geom::Format::kXyzText);
  REQUIRE(pc.size() == 2);
  CHECK(pc[0].x == 0.5);
  CHECK(pc[1].z == 5.0);
}

TEST_CASE("normalize_unit_cube examples") {
  {
    PointCloud pc;
    pc.points() = {{0, 0, 0}, {2, 0, 0}};
    const PointCloud n = geom::normalize_unit_cube(pc);
    CHECK(n[0].x == doctest::Approx(-0.5));
    CHECK(n[1].x == doctest::Approx(0.5));
    CHECK(n.norm()->center.x == doctest::Approx(1.0));
    CHECK(n.norm()->scale == doctest::Approx(2.0));
  }
  {
    PointCloud pc;
    pc.points() = {{7, 7, 7}};
    const PointCloud n = geom::normalize_unit_cube(pc);
    CHECK(n[0].x == 0.0);
    CHECK(n.norm()->scale == 1.0);
  }
  {
    nn::Rng rng(5);
    PointCloud pc = random_cloud(rng, 64, 10.0);
    const PointCloud n = geom::normalize_unit_cube(pc);
    for (const Vec3& p : n.points()) {
      CHECK(p.x >= -0.5 - 1e-12);
      CHECK(p.x <= 0.5 + 1e-12);
    }
    const PointCloud back = geom::denormalize(n, *n.norm());
    for (size_t i = 0; i < pc.size(); ++i) {
      CHECK(back[i].x == doctest::Approx(pc[i].x).epsilon(1e-6));
      CHECK(back[i].y == doctest::Approx(pc[i].y).epsilon(1e-6));
      CHECK(back[i].z == doctest::Approx(pc[i].z).epsilon(1e-6));
    }
  }
  {
    PointCloud pc;
    pc.points() = {{0, 0, 0}, {std::numeric_limits<double>::infinity(), 0, 0}};
    CHECK_THROWS_AS(geom::normalize_unit_cube(pc), std::invalid_argument);
  }
}

TEST_CASE("fps fixed example and exhaustion") {
  std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {0.1, 0, 0}, {2, 0, 0}};
  const auto idx = geom::farthest_point_sampling_from(pts, 2, 0);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 3);

  nn::Rng rng(9);
  const PointCloud pc = random_cloud(rng, 17);
  const auto perm = geom::farthest_point_sampling(pc.points(), 17, 123);
  std::vector<bool> seen(17, false);
  for (int64_t i : perm) seen[static_cast<size_t>(i)] = true;
  for (bool b : seen) CHECK(b);
}

TEST_CASE("fps matches brute-force oracle on 200 random clouds") {
  nn::Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(63));
    const PointCloud pc = random_cloud(rng, n);
    const int m = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n)));
    const int64_t first = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n)));
    const auto got = geom::farthest_point_sampling_from(pc.points(), m, first);
    const auto want = fps_oracle(pc.points(), m, first);
    CHECK(got == want);
  }
}

TEST_CASE("knn examples and oracle") {
  {
    const auto out = geom::knn({{0, 0, 0}}, {{1, 0, 0}, {3, 0, 0}}, 1);
    CHECK(out[0][0] == 0);
  }
  {
    nn::Rng rng(7);
    const PointCloud pc = random_cloud(rng, 32);
    const auto out = geom::knn(pc.points(), pc.points(), 1);
    for (size_t i = 0; i < pc.size(); ++i) CHECK(out[i][0] == static_cast<int64_t>(i));
  }
  {
    nn::Rng rng(77);
    const PointCloud q = random_cloud(rng, 128);
    const PointCloud r = random_cloud(rng, 256);
    const auto got = geom::knn(q.points(), r.points(), 8);
    for (size_t i = 0; i < q.size(); ++i) {
      std::vector<std::pair<double, int64_t>> d;
      for (size_t j = 0; j < r.size(); ++j)
        d.push_back({geom::sq_dist(q[i], r[j]), static_cast<int64_t>(j)});
      std::sort(d.begin(), d.end());
      for (int k = 0; k < 8; ++k) CHECK(got[i][static_cast<size_t>(k)] == d[static_cast<size_t>(k)].second);
    }
  }
  CHECK_THROWS_AS(geom::knn({{0, 0, 0}}, {{1, 0, 0}}, 2), std::invalid_argument);
}

TEST_CASE("chamfer examples, symmetry, oracle") {
  PointCloud a, b;
  a.points() = {{0, 0, 0}};
  b.points() = {{1, 0, 0}};
  CHECK(geom::chamfer_distance(a, a) == 0.0);
  CHECK(geom::chamfer_distance(a, b) == doctest::Approx(2.0));

  nn::Rng rng(15);
  const PointCloud x = random_cloud(rng, 512);
  const PointCloud y = random_cloud(rng, 512);
  // O(N^2) double-loop oracle
  double s1 = 0.0, s2 = 0.0;
  for (const Vec3& p : x.points()) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : y.points()) best = std::min(best, geom::sq_dist(p, q));
    s1 += best;
  }
  for (const Vec3& p : y.points()) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : x.points()) best = std::min(best, geom::sq_dist(p, q));
    s2 += best;
  }
  const double oracle = s1 / 512.0 + s2 / 512.0;
  CHECK(std::fabs(geom::chamfer_distance(x, y) - oracle) < 1e-9);
  CHECK(geom::chamfer_distance(x, y) == geom::chamfer_distance(y, x));

  const PointCloud xr = rotate(x, 0.3, -0.7, 1.1);
  const PointCloud yr = rotate(y, 0.3, -0.7, 1.1);
  CHECK(geom::chamfer_distance(xr, yr) ==
        doctest::Approx(geom::chamfer_distance(x, y)).epsilon(1e-6));
}

TEST_CASE("d1 psnr examples") {
  PointCloud ref, rec;
  ref.points() = {{0, 0, 0}};
  rec.points() = {{0, 0, 1}};
  CHECK(geom::d1_psnr(ref, ref, 1.0) == geom::kPsnrCap);
  CHECK(geom::d1_psnr(ref, rec, 1.0) == doctest::Approx(0.0));
  // doubling the peak adds 20*log10(2)
  nn::Rng rng(19);
  const PointCloud a = random_cloud(rng, 50);
  const PointCloud b = random_cloud(rng, 60);
  const double p1 = geom::d1_psnr(a, b, 1.0);
  const double p2 = geom::d1_psnr(a, b, 2.0);
  CHECK(p2 - p1 == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
  // rotation invariance
  const double base = geom::d1_psnr(a, b, 3.0);
  CHECK(geom::d1_psnr(rotate(a, 0.2, 0.4, -0.6), rotate(b, 0.2, 0.4, -0.6), 3.0) ==
        doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("bd metrics: identical, +1dB, antisymmetry, trapezoid oracle") {
  std::vector<geom::RDPoint> a = {{0.25, 58.0}, {0.5, 61.0}, {1.0, 64.5}, {2.0, 66.0}};
  CHECK(geom::bd_metrics(a, a).bd_psnr == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(geom::bd_metrics(a, a).bd_rate == doctest::Approx(0.0).epsilon(1e-9));

  std::vector<geom::RDPoint> b = a;
  for (auto& p : b) p.psnr += 1.0;
  CHECK(geom::bd_metrics(a, b).bd_psnr == doctest::Approx(1.0).epsilon(1e-9));

  std::vector<geom::RDPoint> c = {{0.3, 57.0}, {0.6, 62.0}, {1.1, 64.0}, {2.4, 67.5}};
  const auto ab = geom::bd_metrics(a, c);
  const auto ba = geom::bd_metrics(c, a);
  CHECK(ab.bd_psnr == doctest::Approx(-ba.bd_psnr).epsilon(1e-9));

  // Trapezoid oracle at 1e4 samples over the same cubic fits.
  auto logs = [](const std::vector<geom::RDPoint>& v) {
    std::vector<double> lr, ps;
    for (auto& p : v) {
      lr.push_back(std::log10(p.bpp));
      ps.push_back(p.psnr);
    }
    return std::pair{lr, ps};
  };
  auto [lra, psa] = logs(a);
  auto [lrc, psc] = logs(c);
  const auto fa = geom::polyfit_cubic(lra, psa);
  const auto fc = geom::polyfit_cubic(lrc, psc);
  const double lo = std::max(lra.front(), lrc.front());
  const double hi = std::min(lra.back(), lrc.back());
  auto peval = [](const std::vector<double>& f, double x) {
    return ((f[3] * x + f[2]) * x + f[1]) * x + f[0];
  };
  const int kSamples = 10000;
  double acc = 0.0;
  for (int i = 0; i < kSamples; ++i) {
    const double x0 = lo + (hi - lo) * i / kSamples;
    const double x1 = lo + (hi - lo) * (i + 1) / kSamples;
    acc += 0.5 * ((peval(fc, x0) - peval(fa, x0)) + (peval(fc, x1) - peval(fa, x1))) *
           (x1 - x0);
  }
  const double oracle = acc / (hi - lo);
  CHECK(ab.bd_psnr == doctest::Approx(oracle).epsilon(1e-6));

  // validation errors
  CHECK_THROWS_AS(geom::bd_metrics({{1, 1}, {2, 2}, {3, 3}}, a), std::invalid_argument);
  std::vector<geom::RDPoint> far = {{100.0, 60}, {200.0, 61}, {400.0, 62}, {800.0, 63}};
  CHECK_THROWS_AS(geom::bd_metrics(a, far), std::invalid_argument);
}
