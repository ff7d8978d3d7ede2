// SPDX-License-Identifier: Apache-2.0

#include "diffcom/geom/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace diffcom::geom {

namespace {

double nn_sq(const Vec3& p, const std::vector<Vec3>& refs) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& r : refs) best = std::min(best, sq_dist(p, r));
  return best;
}

}  // namespace

double mse_nn(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mse_nn: empty cloud");
  double s = 0.0;
  for (const Vec3& p : a.points()) s += nn_sq(p, b.points());
  return s / static_cast<double>(a.size());
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  return mse_nn(a, b) + mse_nn(b, a);
}

double d1_psnr(const PointCloud& ref, const PointCloud& rec, double peak) {
  if (ref.empty() || rec.empty()) throw std::invalid_argument("d1_psnr: empty cloud");
  if (peak <= 0.0) peak = bbox_diagonal(ref);
  const double mse = std::max(mse_nn(ref, rec), mse_nn(rec, ref));
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

// Solves the (d+1)x(d+1) normal equations with partial pivoting.
std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                 std::vector<double> b) {
  const size_t n = b.size();
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    if (a[col][col] == 0.0) throw std::runtime_error("singular polynomial fit");
    for (size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (size_t ri = n; ri-- > 0;) {
    double s = b[ri];
    for (size_t c = ri + 1; c < n; ++c) s -= a[ri][c] * x[c];
    x[ri] = s / a[ri][ri];
  }
  return x;
}

double poly_integral(const std::vector<double>& coef, double lo, double hi) {
  // coef[k] * x^k; antiderivative evaluated at the bounds.
  double slo = 0.0, shi = 0.0;
  double plo = lo, phi = hi;
  for (size_t k = 0; k < coef.size(); ++k) {
    slo += coef[k] * plo / static_cast<double>(k + 1);
    shi += coef[k] * phi / static_cast<double>(k + 1);
    plo *= lo;
    phi *= hi;
  }
  return shi - slo;
}

}  // namespace

std::vector<double> polyfit_cubic(const std::vector<double>& x,
                                  const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 4)
    throw std::invalid_argument("polyfit_cubic: need >= 4 points");
  constexpr int kDeg = 3;
  std::vector<std::vector<double>> ata(kDeg + 1, std::vector<double>(kDeg + 1, 0.0));
  std::vector<double> atb(kDeg + 1, 0.0);
  for (size_t i = 0; i < x.size(); ++i) {
    double pow_r[2 * kDeg + 1];
    pow_r[0] = 1.0;
    for (int k = 1; k <= 2 * kDeg; ++k) pow_r[k] = pow_r[k - 1] * x[i];
    for (int r = 0; r <= kDeg; ++r) {
      for (int c = 0; c <= kDeg; ++c) ata[static_cast<size_t>(r)][static_cast<size_t>(c)] += pow_r[r + c];
      atb[static_cast<size_t>(r)] += pow_r[r] * y[i];
    }
  }
  return solve_linear(std::move(ata), std::move(atb));
}

BDResult bd_metrics(const std::vector<RDPoint>& curve_a,
                    const std::vector<RDPoint>& curve_b) {
  auto validate = [](const std::vector<RDPoint>& c) {
    if (c.size() < 4) throw std::invalid_argument("bd_metrics: need >= 4 points");
    for (size_t i = 0; i < c.size(); ++i) {
      if (c[i].bpp <= 0.0) throw std::invalid_argument("bd_metrics: bpp must be > 0");
      if (i > 0 && c[i].bpp <= c[i - 1].bpp)
        throw std::invalid_argument("bd_metrics: bpp must be strictly increasing");
    }
  };
  validate(curve_a);
  validate(curve_b);

  auto split = [](const std::vector<RDPoint>& c) {
    std::vector<double> lr, ps;
    for (const RDPoint& p : c) {
      lr.push_back(std::log10(p.bpp));
      ps.push_back(p.psnr);
    }
    return std::pair{lr, ps};
  };
  auto [lra, psa] = split(curve_a);
  auto [lrb, psb] = split(curve_b);

  BDResult out;
  {
    const double lo = std::max(*std::min_element(lra.begin(), lra.end()),
                               *std::min_element(lrb.begin(), lrb.end()));
    const double hi = std::min(*std::max_element(lra.begin(), lra.end()),
                               *std::max_element(lrb.begin(), lrb.end()));
    if (lo >= hi) throw std::invalid_argument("bd_metrics: non-overlapping rate ranges");
    const auto fa = polyfit_cubic(lra, psa);
    const auto fb = polyfit_cubic(lrb, psb);
    out.bd_psnr = (poly_integral(fb, lo, hi) - poly_integral(fa, lo, hi)) / (hi - lo);
  }
  {
    const double lo = std::max(*std::min_element(psa.begin(), psa.end()),
                               *std::min_element(psb.begin(), psb.end()));
    const double hi = std::min(*std::max_element(psa.begin(), psa.end()),
                               *std::max_element(psb.begin(), psb.end()));
    if (lo >= hi) throw std::invalid_argument("bd_metrics: non-overlapping psnr ranges");
    const auto fa = polyfit_cubic(psa, lra);
    const auto fb = polyfit_cubic(psb, lrb);
    const double avg = (poly_integral(fb, lo, hi) - poly_integral(fa, lo, hi)) / (hi - lo);
    out.bd_rate = (std::pow(10.0, avg) - 1.0) * 100.0;
  }
  return out;
}

}  // namespace diffcom::geom
