#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace carnet {

/// Row-major dense matrix used for every feature table in the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VoxelCoord {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
  friend VoxelCoord operator+(VoxelCoord a, VoxelCoord b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend VoxelCoord operator*(VoxelCoord a, std::int32_t s) { return {a.x * s, a.y * s, a.z * s}; }
};

inline std::string to_string(const VoxelCoord& c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + "," + std::to_string(c.z) + ")";
}

struct VoxelCoordHash {
  std::size_t operator()(const VoxelCoord& c) const noexcept {
    // 21 bits per axis is plenty for every grid this library touches; the
    // mixing step keeps negative coordinates well distributed.
    std::uint64_t h = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x)) * 0x9E3779B97F4A7C15ull) ^
                      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y)) * 0xC2B2AE3D27D4EB4Full) ^
                      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z)) * 0x165667B19E3779F9ull);
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

/// Floor division toward negative infinity; used for every stride reduction.
inline std::int32_t floor_div(std::int32_t v, std::int32_t d) {
  std::int32_t q = v / d;
  if ((v % d != 0) && ((v < 0) != (d < 0))) --q;
  return q;
}

inline VoxelCoord floor_div(const VoxelCoord& c, std::int32_t d) {
  return {floor_div(c.x, d), floor_div(c.y, d), floor_div(c.z, d)};
}

/// Coordinate -> row lookup. Rows follow insertion order.
class CoordIndex {
 public:
  CoordIndex() = default;

  explicit CoordIndex(const std::vector<VoxelCoord>& coords) {
    map_.reserve(coords.size() * 2);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      auto [it, inserted] = map_.emplace(coords[i], static_cast<std::int64_t>(i));
      if (!inserted) throw Error("duplicate coordinate " + to_string(coords[i]));
    }
  }

  std::optional<std::int64_t> find(const VoxelCoord& c) const {
    auto it = map_.find(c);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return map_.size(); }
  bool empty() const { return map_.empty(); }

 private:
  std::unordered_map<VoxelCoord, std::int64_t, VoxelCoordHash> map_;
};

inline CoordIndex build_index(const std::vector<VoxelCoord>& coords) { return CoordIndex(coords); }

/// An immutable, lexicographically ordered coordinate set at one stride
/// level. Coordinates are stored in level units: a voxel at stride 4 with
/// coordinate (1,0,0) covers fine voxels x in [4, 8).
class CoordSet {
 public:
  CoordSet() = default;

  CoordSet(std::vector<VoxelCoord> coords, std::int32_t tensor_stride = 1)
      : coords_(std::move(coords)), stride_(tensor_stride) {
    if (stride_ < 1) throw Error("tensor stride must be positive");
    std::sort(coords_.begin(), coords_.end());
    index_ = CoordIndex(coords_);
  }

  static std::shared_ptr<const CoordSet> make(std::vector<VoxelCoord> coords, std::int32_t tensor_stride = 1) {
    return std::make_shared<const CoordSet>(std::move(coords), tensor_stride);
  }

  const std::vector<VoxelCoord>& coords() const { return coords_; }
  const VoxelCoord& operator[](std::size_t i) const { return coords_[i]; }
  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }
  std::int32_t tensor_stride() const { return stride_; }
  std::optional<std::int64_t> find(const VoxelCoord& c) const { return index_.find(c); }

  /// Coarse set obtained by floor-dividing every coordinate by `factor`.
  std::shared_ptr<const CoordSet> downsample(std::int32_t factor = 2) const {
    std::vector<VoxelCoord> coarse;
    coarse.reserve(coords_.size());
    for (const auto& c : coords_) coarse.push_back(floor_div(c, factor));
    std::sort(coarse.begin(), coarse.end());
    coarse.erase(std::unique(coarse.begin(), coarse.end()), coarse.end());
    return make(std::move(coarse), stride_ * factor);
  }

  friend bool operator==(const CoordSet& a, const CoordSet& b) {
    return a.stride_ == b.stride_ && a.coords_ == b.coords_;
  }

 private:
  std::vector<VoxelCoord> coords_;
  CoordIndex index_;
  std::int32_t stride_ = 1;
};

using GeometryPtr = std::shared_ptr<const CoordSet>;

inline bool same_geometry(const GeometryPtr& a, const GeometryPtr& b) {
  return a == b || (a && b && *a == *b);
}

/// Coordinates plus an N x C feature table; row i belongs to geometry[i].
struct SparseTensor {
  GeometryPtr geometry;
  Matrix features;

  SparseTensor() = default;
  SparseTensor(GeometryPtr g, Matrix f) : geometry(std::move(g)), features(std::move(f)) {
    if (!geometry) throw Error("sparse tensor without geometry");
    if (static_cast<std::size_t>(features.rows()) != geometry->size())
      throw Error("feature rows (" + std::to_string(features.rows()) + ") do not match coordinate count (" +
                  std::to_string(geometry->size()) + ")");
  }

  static SparseTensor zeros(GeometryPtr g, Eigen::Index channels) {
    Matrix f = Matrix::Zero(static_cast<Eigen::Index>(g->size()), channels);
    return {std::move(g), std::move(f)};
  }

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index channels() const { return features.cols(); }
  const std::vector<VoxelCoord>& coords() const { return geometry->coords(); }
};

}  // namespace carnet
