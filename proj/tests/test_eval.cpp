#include "carnet/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace carnet;
using namespace carnet::testing;

namespace {

RDCurve curve(const std::string& label, std::vector<std::pair<double, double>> pts) {
  RDCurve c{label, {}};
  for (auto [r, p] : pts) c.points.push_back({r, p});
  return c;
}

// Four points pin a cubic exactly, so the fitted log-rate curve is the
// Lagrange interpolant; integrate it by the trapezoid rule.
double lagrange(const RDCurve& c, double x) {
  double y = 0.0;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    double l = 1.0;
    for (std::size_t j = 0; j < c.points.size(); ++j)
      if (j != i) l *= (x - c.points[j].psnr) / (c.points[i].psnr - c.points[j].psnr);
    y += l * std::log10(c.points[i].bpp);
  }
  return y;
}

double trapezoid_bd_rate(const RDCurve& anchor, const RDCurve& test) {
  auto lo_hi = [](const RDCurve& c) {
    double lo = 1e300, hi = -1e300;
    for (const auto& p : c.points) lo = std::min(lo, p.psnr), hi = std::max(hi, p.psnr);
    return std::pair{lo, hi};
  };
  const double lo = std::max(lo_hi(anchor).first, lo_hi(test).first);
  const double hi = std::min(lo_hi(anchor).second, lo_hi(test).second);
  const int n = 10000;
  const double h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double f = lagrange(test, x) - lagrange(anchor, x);
    sum += (i == 0 || i == n) ? f / 2 : f;
  }
  return 100.0 * (std::pow(10.0, sum * h / (hi - lo)) - 1.0);
}

PointCloudFrame yuv_frame(const Matrix& a) {
  std::vector<VoxelCoord> c;
  for (Eigen::Index i = 0; i < a.rows(); ++i) c.push_back({static_cast<int>(i), 0, 0});
  return PointCloudFrame::make(c, a, 8, ColorSpace::YUV);
}

}  // namespace

TEST(Psnr, UnitErrorAt8Bit) {
  EXPECT_NEAR(psnr_from_mse(1.0, 255.0), 48.1308036, 1e-6);
  Vector a(4), b(4);
  a << 10, 20, 30, 40;
  b << 11, 19, 31, 39;
  EXPECT_NEAR(psnr(a, b, 255.0), 48.13, 0.005);
}

TEST(Psnr, IdenticalIsCapped) {
  Vector a = Vector::LinSpaced(5, 0, 100);
  EXPECT_EQ(psnr(a, a, 255.0), kPsnrCap);
}

TEST(Psnr, YuvWeighting) {
  Matrix ref = Matrix::Constant(8, 3, 100.0);
  Matrix y_err = ref, u_err = ref;
  y_err.col(0).array() += 2.0;  // Y MSE 4
  u_err.col(1).array() += 2.0;  // U MSE 4
  const auto r = yuv_frame(ref);
  const double py = psnr_yuv(r, yuv_frame(y_err));
  const double pu = psnr_yuv(r, yuv_frame(u_err));
  EXPECT_NEAR(py, 10 * std::log10(255.0 * 255.0 / (6.0 * 4.0 / 8.0)), 1e-12);
  EXPECT_NEAR(pu, 10 * std::log10(255.0 * 255.0 / (4.0 / 8.0)), 1e-12);
  EXPECT_NEAR(pu - py, 10 * std::log10(6.0), 1e-12);

  const auto q = quality(r, yuv_frame(y_err));
  EXPECT_NEAR(q.y, psnr_from_mse(4.0, 255.0), 1e-12);
  EXPECT_EQ(q.u, kPsnrCap);
  EXPECT_EQ(q.yuv, py);
}

TEST(Psnr, RejectsMisalignedFrames) {
  const auto a = yuv_frame(Matrix::Zero(3, 3));
  const auto b = yuv_frame(Matrix::Zero(4, 3));
  EXPECT_THROW(psnr_yuv(a, b), Error);
}

TEST(Color, Bt709Primaries) {
  Matrix rgb(4, 3);
  rgb << 255, 255, 255, 0, 0, 0, 255, 0, 0, 0, 0, 255;
  std::vector<VoxelCoord> c{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  const auto yuv = rgb_to_yuv(PointCloudFrame::make(c, rgb));
  EXPECT_NEAR(yuv.attributes(0, 0), 255.0, 1e-9);
  EXPECT_NEAR(yuv.attributes(0, 1), 128.0, 1e-9);
  EXPECT_NEAR(yuv.attributes(0, 2), 128.0, 1e-9);
  EXPECT_NEAR(yuv.attributes(1, 1), 128.0, 1e-9);
  EXPECT_NEAR(yuv.attributes(2, 0), 0.2126 * 255, 1e-9);
  EXPECT_NEAR(yuv.attributes(2, 2), std::min(255.0, 128.0 + (255.0 - 0.2126 * 255) / 1.5748), 1e-9);
  EXPECT_NEAR(yuv.attributes(3, 0), 0.0722 * 255, 1e-9);
}

TEST(Color, RoundTripWithinOneCode) {
  Rng rng(1);
  std::uniform_int_distribution<int> v(0, 255);
  std::vector<VoxelCoord> c;
  Matrix rgb(500, 3);
  for (int i = 0; i < 500; ++i) {
    c.push_back({i, 0, 0});
    for (int ch = 0; ch < 3; ++ch) rgb(i, ch) = v(rng);
  }
  const auto f = PointCloudFrame::make(c, rgb);
  const auto back = round_attributes(yuv_to_rgb(round_attributes(rgb_to_yuv(f))));
  const auto yuv = rgb_to_yuv(f);
  const auto raw = yuv_to_rgb(yuv);
  EXPECT_LT((raw.attributes - f.attributes).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((back.attributes - f.attributes).cwiseAbs().maxCoeff(), 1.0 + 1e-9);
}

TEST(BdRate, IdenticalCurvesGiveZero) {
  const auto a = curve("a", {{0.5, 30}, {1.0, 33}, {2.0, 36}, {4.0, 38.5}, {8.0, 40}});
  EXPECT_NEAR(bd_rate(a, a), 0.0, 1e-9);
}

TEST(BdRate, DoubledRatesGiveHundredPercent) {
  auto a = curve("a", {{0.5, 30}, {1.0, 33}, {2.0, 36}, {4.0, 38.5}});
  auto b = a;
  for (auto& p : b.points) p.bpp *= 2;
  EXPECT_NEAR(bd_rate(a, b), 100.0, 0.1);
  EXPECT_NEAR(bd_rate(b, a), -50.0, 0.05);
}

TEST(BdRate, MatchesDenseQuadrature) {
  const std::vector<std::pair<RDCurve, RDCurve>> cases{
      {curve("a", {{0.3, 28.0}, {0.7, 31.5}, {1.5, 34.0}, {3.2, 37.0}}),
       curve("b", {{0.25, 28.6}, {0.6, 32.0}, {1.4, 34.9}, {3.0, 37.5}})},
      {curve("a", {{1.0, 30.0}, {2.0, 32.0}, {4.0, 35.0}, {8.0, 39.0}}),
       curve("b", {{1.3, 31.0}, {2.2, 32.5}, {5.0, 36.0}, {9.0, 40.0}})},
      {curve("a", {{0.05, 25.0}, {0.1, 27.1}, {0.2, 29.9}, {0.4, 31.0}}),
       curve("b", {{0.06, 26.0}, {0.09, 27.0}, {0.22, 30.5}, {0.5, 33.0}})},
  };
  for (const auto& [a, b] : cases) {
    const double got = bd_rate(a, b), want = trapezoid_bd_rate(a, b);
    EXPECT_NEAR(got, want, 1e-4 * std::max(1.0, std::abs(want)));
  }
}

TEST(BdRate, SwappingCurvesInvertsTheRatio) {
  const auto a = curve("a", {{0.3, 28.0}, {0.7, 31.5}, {1.5, 34.0}, {3.2, 37.0}});
  const auto b = curve("b", {{0.25, 28.6}, {0.6, 32.0}, {1.4, 34.9}, {3.0, 37.5}});
  const double ab = bd_rate(a, b) / 100.0, ba = bd_rate(b, a) / 100.0;
  EXPECT_LT(ab, 0.0);
  EXPECT_NEAR((1 + ab) * (1 + ba), 1.0, 1e-12);
}

TEST(BdRate, CubicHelpers) {
  // x^3 integrated over [0, 2]
  EXPECT_DOUBLE_EQ(integrate_cubic({0, 0, 0, 1}, 0, 2), 4.0);
  EXPECT_DOUBLE_EQ(integrate_cubic({1, 2, 0, 0}, -1, 1), 2.0);
  const auto c = curve("c", {{1.0, 1.0}, {10.0, 2.0}, {100.0, 3.0}, {1000.0, 4.0}, {10000.0, 5.0}});
  const auto p = fit_log_rate_cubic(c);
  EXPECT_NEAR(p[0], -1.0, 1e-10);
  EXPECT_NEAR(p[1], 1.0, 1e-10);
  EXPECT_NEAR(p[2], 0.0, 1e-10);
  EXPECT_NEAR(p[3], 0.0, 1e-10);
}

TEST(BdRate, RejectsBadCurves) {
  const auto good = curve("a", {{0.5, 30}, {1.0, 33}, {2.0, 36}, {4.0, 38.5}});
  EXPECT_THROW(bd_rate(good, curve("short", {{0.5, 30}, {1.0, 33}, {2.0, 36}})), Error);
  EXPECT_THROW(bd_rate(good, curve("flat", {{0.5, 30}, {0.5, 33}, {2.0, 36}, {4.0, 38}})), Error);
  EXPECT_THROW(bd_rate(good, curve("zero", {{0.0, 30}, {1.0, 33}, {2.0, 36}, {4.0, 38}})), Error);
  EXPECT_THROW(bd_rate(good, curve("apart", {{0.5, 50}, {1.0, 53}, {2.0, 56}, {4.0, 58}})), Error);
  auto unsorted = curve("u", {{2.0, 36}, {0.5, 30}, {4.0, 38.5}, {1.0, 33}});
  EXPECT_THROW(unsorted.validate(), Error);
  unsorted.sort();
  EXPECT_NO_THROW(unsorted.validate());
}
