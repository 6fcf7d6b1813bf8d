#pragma once

#include "carnet/model.hpp"
#include "carnet/sparse_tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace carnet {

enum class ColorSpace { RGB, YUV };

/// A voxelized point cloud with three color channels in code values
/// (0 .. 2^bitdepth - 1). Rows are kept in lexicographic coordinate order.
struct PointCloudFrame {
  std::vector<VoxelCoord> coords;
  Matrix attributes;  // N x 3
  int bitdepth = 8;
  ColorSpace color_space = ColorSpace::RGB;
  std::string source;

  /// Sorts rows by coordinate and rejects duplicates.
  static PointCloudFrame make(std::vector<VoxelCoord> coords, Matrix attributes, int bitdepth = 8,
                              ColorSpace space = ColorSpace::RGB, std::string source = {}) {
    if (attributes.rows() != static_cast<Eigen::Index>(coords.size()) || attributes.cols() != 3)
      throw Error("frame attributes must be N x 3");
    std::vector<std::size_t> order(coords.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return coords[a] < coords[b]; });
    PointCloudFrame f;
    f.coords.reserve(coords.size());
    f.attributes.resize(attributes.rows(), 3);
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (r > 0 && coords[order[r]] == coords[order[r - 1]])
        throw Error("duplicate point " + to_string(coords[order[r]]));
      f.coords.push_back(coords[order[r]]);
      f.attributes.row(static_cast<Eigen::Index>(r)) = attributes.row(static_cast<Eigen::Index>(order[r]));
    }
    f.bitdepth = bitdepth;
    f.color_space = space;
    f.source = std::move(source);
    return f;
  }

  std::size_t size() const { return coords.size(); }
  double peak() const { return std::ldexp(1.0, bitdepth) - 1.0; }
  GeometryPtr geometry() const { return CoordSet::make(coords, 1); }

  /// Copy with attributes replaced, same geometry and metadata.
  PointCloudFrame with_attributes(Matrix a) const {
    PointCloudFrame f = *this;
    f.attributes = std::move(a);
    return f;
  }
};

inline void require_aligned(const PointCloudFrame& a, const PointCloudFrame& b) {
  if (a.coords != b.coords) throw Error("frames have different geometry");
  if (a.attributes.cols() != b.attributes.cols()) throw Error("frames have different channel counts");
}

/// Full-range BT.709 with a 2^(bitdepth-1) chroma offset. Results are
/// clamped to the code-value range and left unrounded.
inline PointCloudFrame rgb_to_yuv(const PointCloudFrame& in) {
  if (in.color_space != ColorSpace::RGB) throw Error("rgb_to_yuv expects an RGB frame");
  const double off = std::ldexp(1.0, in.bitdepth - 1), peak = in.peak();
  Matrix out(in.attributes.rows(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double r = in.attributes(i, 0), g = in.attributes(i, 1), b = in.attributes(i, 2);
    const double y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    out(i, 0) = std::clamp(y, 0.0, peak);
    out(i, 1) = std::clamp((b - y) / 1.8556 + off, 0.0, peak);
    out(i, 2) = std::clamp((r - y) / 1.5748 + off, 0.0, peak);
  }
  PointCloudFrame f = in.with_attributes(std::move(out));
  f.color_space = ColorSpace::YUV;
  return f;
}

inline PointCloudFrame yuv_to_rgb(const PointCloudFrame& in) {
  if (in.color_space != ColorSpace::YUV) throw Error("yuv_to_rgb expects a YUV frame");
  const double off = std::ldexp(1.0, in.bitdepth - 1), peak = in.peak();
  Matrix out(in.attributes.rows(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double y = in.attributes(i, 0), u = in.attributes(i, 1) - off, v = in.attributes(i, 2) - off;
    const double r = y + 1.5748 * v;
    const double b = y + 1.8556 * u;
    const double g = (y - 0.2126 * r - 0.0722 * b) / 0.7152;
    out(i, 0) = std::clamp(r, 0.0, peak);
    out(i, 1) = std::clamp(g, 0.0, peak);
    out(i, 2) = std::clamp(b, 0.0, peak);
  }
  PointCloudFrame f = in.with_attributes(std::move(out));
  f.color_space = ColorSpace::RGB;
  return f;
}

inline PointCloudFrame round_attributes(const PointCloudFrame& in) {
  return in.with_attributes(in.attributes.array().round().matrix());
}

/// Raw, unvoxelized input points.
struct RawPoint {
  std::array<double, 3> position;
  std::array<double, 3> color;
};

/// Maps points onto an integer grid of 2^bits cells per axis and merges
/// points sharing a voxel by averaging their colors. Points whose bounding
/// box already fits the grid are only rounded, so integer input inside the
/// grid is returned unchanged.
inline PointCloudFrame voxelize(const std::vector<RawPoint>& points, int bits, int bitdepth = 8,
                                ColorSpace space = ColorSpace::RGB) {
  if (bits < 4 || bits > 16) throw Error("voxel grid bits must lie in [4, 16]");
  if (points.empty()) throw Error("cannot voxelize an empty point set");
  const double cells = std::ldexp(1.0, bits) - 1.0;
  std::array<double, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = hi[a] = points.front().position[a];
    for (const auto& p : points) {
      lo[a] = std::min(lo[a], p.position[a]);
      hi[a] = std::max(hi[a], p.position[a]);
    }
  }
  bool fits = true;
  for (int a = 0; a < 3; ++a) fits = fits && lo[a] >= -0.5 && hi[a] < cells + 0.5;
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  const double scale = (fits || extent == 0.0) ? 1.0 : cells / extent;

  struct Acc {
    std::array<double, 3> sum{};
    int count = 0;
  };
  std::map<VoxelCoord, Acc> voxels;
  for (const auto& p : points) {
    std::array<std::int32_t, 3> q{};
    for (int a = 0; a < 3; ++a) {
      const double v = fits ? p.position[a] : (p.position[a] - lo[a]) * scale;
      q[a] = static_cast<std::int32_t>(std::clamp(std::round(v), 0.0, cells));
    }
    auto& acc = voxels[{q[0], q[1], q[2]}];
    for (int c = 0; c < 3; ++c) acc.sum[c] += p.color[c];
    ++acc.count;
  }
  std::vector<VoxelCoord> coords;
  Matrix attrs(static_cast<Eigen::Index>(voxels.size()), 3);
  Eigen::Index r = 0;
  for (const auto& [c, acc] : voxels) {
    coords.push_back(c);
    for (int ch = 0; ch < 3; ++ch) attrs(r, ch) = acc.sum[ch] / acc.count;
    ++r;
  }
  return PointCloudFrame::make(std::move(coords), std::move(attrs), bitdepth, space);
}

/// Model input for one component: [Y] for Y, [Y, U] for U, [Y, U, V] for V,
/// normalized to [0, 1] by the frame's peak value.
inline SparseTensor assemble_component_input(const PointCloudFrame& yuv, Component c,
                                             const GeometryPtr& geometry = nullptr) {
  if (yuv.color_space != ColorSpace::YUV) throw Error("component input requires a YUV frame");
  const int width = static_cast<int>(c) + 1;
  if (yuv.attributes.cols() < width)
    throw Error(std::string("frame lacks the channels needed for component ") + component_name(c));
  GeometryPtr g = geometry ? geometry : yuv.geometry();
  if (g->coords() != yuv.coords) throw Error("geometry does not match frame coordinates");
  return {g, yuv.attributes.leftCols(width) / yuv.peak()};
}

}  // namespace carnet
