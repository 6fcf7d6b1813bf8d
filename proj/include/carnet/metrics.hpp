#pragma once

#include "carnet/frame.hpp"
#include "carnet/sparse_tensor.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace carnet {

inline constexpr double kPsnrCap = 100.0;

inline double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

inline double psnr(const Vector& ref, const Vector& test, double peak) {
  if (ref.size() != test.size()) throw Error("PSNR needs aligned attributes");
  if (ref.size() == 0) return kPsnrCap;
  return psnr_from_mse((ref - test).squaredNorm() / static_cast<double>(ref.size()), peak);
}

/// Per-channel MSE between aligned frames, in code values.
inline std::array<double, 3> channel_mse(const PointCloudFrame& ref, const PointCloudFrame& test) {
  require_aligned(ref, test);
  std::array<double, 3> out{};
  if (ref.size() == 0) return out;
  for (int c = 0; c < 3; ++c)
    out[static_cast<std::size_t>(c)] =
        (ref.attributes.col(c) - test.attributes.col(c)).squaredNorm() / static_cast<double>(ref.size());
  return out;
}

inline double psnr(const PointCloudFrame& ref, const PointCloudFrame& test, int channel) {
  return psnr_from_mse(channel_mse(ref, test)[static_cast<std::size_t>(channel)], ref.peak());
}

/// Combined YUV quality with 6:1:1 weighting of the channel MSEs.
inline double psnr_yuv(const PointCloudFrame& ref, const PointCloudFrame& test) {
  const auto m = channel_mse(ref, test);
  return psnr_from_mse((6.0 * m[0] + m[1] + m[2]) / 8.0, ref.peak());
}

struct QualityReport {
  double y = 0, u = 0, v = 0, yuv = 0;
};

inline QualityReport quality(const PointCloudFrame& ref, const PointCloudFrame& test) {
  return {psnr(ref, test, 0), psnr(ref, test, 1), psnr(ref, test, 2), psnr_yuv(ref, test)};
}

struct RDPoint {
  double bpp = 0.0;
  double psnr = 0.0;
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;

  void sort() {
    std::sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  }

  void validate() const {
    if (points.size() < 4) throw Error("curve '" + label + "' has fewer than 4 RD points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(points[i].bpp > 0.0) || !std::isfinite(points[i].psnr))
        throw Error("curve '" + label + "' holds a non-positive rate or non-finite PSNR");
      if (i > 0 && !(points[i].bpp > points[i - 1].bpp))
        throw Error("curve '" + label + "' rates are not strictly increasing");
    }
  }
};

/// Least-squares cubic fit of log10(bpp) against PSNR; coefficients in
/// ascending power order.
inline std::array<double, 4> fit_log_rate_cubic(const RDCurve& c) {
  const auto n = static_cast<Eigen::Index>(c.points.size());
  Eigen::MatrixXd v(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = c.points[static_cast<std::size_t>(i)].psnr;
    v(i, 0) = 1.0;
    v(i, 1) = p;
    v(i, 2) = p * p;
    v(i, 3) = p * p * p;
    y(i) = std::log10(c.points[static_cast<std::size_t>(i)].bpp);
  }
  const Eigen::VectorXd coef = v.colPivHouseholderQr().solve(y);
  return {coef(0), coef(1), coef(2), coef(3)};
}

inline double integrate_cubic(const std::array<double, 4>& p, double lo, double hi) {
  auto prim = [&](double x) { return x * (p[0] + x * (p[1] / 2 + x * (p[2] / 3 + x * p[3] / 4))); };
  return prim(hi) - prim(lo);
}

/// Bjontegaard delta rate in percent; negative means `test` needs fewer
/// bits than `anchor` for the same quality.
inline double bd_rate(const RDCurve& anchor, const RDCurve& test) {
  anchor.validate();
  test.validate();
  auto range = [](const RDCurve& c) {
    double lo = c.points.front().psnr, hi = lo;
    for (const auto& p : c.points) {
      lo = std::min(lo, p.psnr);
      hi = std::max(hi, p.psnr);
    }
    return std::pair{lo, hi};
  };
  const auto [alo, ahi] = range(anchor);
  const auto [tlo, thi] = range(test);
  const double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
  if (!(hi > lo)) throw Error("RD curves '" + anchor.label + "' and '" + test.label + "' share no PSNR range");
  const double avg_diff =
      (integrate_cubic(fit_log_rate_cubic(test), lo, hi) - integrate_cubic(fit_log_rate_cubic(anchor), lo, hi)) /
      (hi - lo);
  return 100.0 * (std::pow(10.0, avg_diff) - 1.0);
}

}  // namespace carnet
