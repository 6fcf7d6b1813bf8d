#pragma once

#include "carnet/kernel_map.hpp"
#include "carnet/sparse_tensor.hpp"

#include <string>
#include <vector>

namespace carnet {

/// Fixed-weight strided averaging between a fine geometry and its
/// floor-divided coarse geometry, over the support of a k^3 kernel.
///
/// pool:     coarse[q] = mean of the occupied fine voxels in q's support
/// upsample: fine[p]   = mean of the coarse voxels whose support holds p
///
/// Both normalize by the number of occupied contributors, so constants pass
/// through either direction unchanged. With k = 2 the supports are the
/// disjoint 2^3 child cells and upsample(pool(.)) is an orthogonal-style
/// projection; with the default k = 3 supports overlap by one voxel.
class PoolingMap {
 public:
  PoolingMap(const GeometryPtr& fine, int k, int stride)
      : fine_(fine), coarse_(fine->downsample(stride)), map_(build_kernel_map(fine, coarse_, k, stride)) {
    coarse_count_.assign(coarse_->size(), 0.0);
    fine_count_.assign(fine_->size(), 0.0);
    coarse_ref_.assign(coarse_->size(), -1);
    fine_ref_.assign(fine_->size(), -1);
    for (std::size_t o = 0; o < map_.volume(); ++o) {
      for (std::size_t t = 0; t < map_.in_rows[o].size(); ++t) {
        const auto i = static_cast<std::size_t>(map_.in_rows[o][t]);
        const auto j = static_cast<std::size_t>(map_.out_rows[o][t]);
        coarse_count_[j] += 1.0;
        fine_count_[i] += 1.0;
        if (coarse_ref_[j] < 0) coarse_ref_[j] = map_.in_rows[o][t];
        if (fine_ref_[i] < 0) fine_ref_[i] = map_.out_rows[o][t];
      }
    }
    for (std::size_t j = 0; j < coarse_count_.size(); ++j)
      if (coarse_count_[j] == 0.0)
        throw Error("pooling support of coarse voxel " + to_string((*coarse_)[j]) + " holds no fine voxel");
    for (std::size_t i = 0; i < fine_count_.size(); ++i)
      if (fine_count_[i] == 0.0)
        throw Error("fine voxel " + to_string((*fine_)[i]) + " is covered by no coarse support");
  }

  const GeometryPtr& fine() const { return fine_; }
  const GeometryPtr& coarse() const { return coarse_; }
  const KernelMap& kernel_map() const { return map_; }

  Matrix pool(const Matrix& fine_features) const {
    return mean(fine_features, map_.in_rows, map_.out_rows, coarse_ref_, coarse_count_);
  }

  Matrix pool_adjoint(const Matrix& grad_coarse) const {
    Matrix scaled = grad_coarse;
    for (Eigen::Index j = 0; j < scaled.rows(); ++j) scaled.row(j) /= coarse_count_[static_cast<std::size_t>(j)];
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(fine_->size()), grad_coarse.cols());
    accumulate(out, scaled, map_.out_rows, map_.in_rows);
    return out;
  }

  Matrix upsample(const Matrix& coarse_features) const {
    return mean(coarse_features, map_.out_rows, map_.in_rows, fine_ref_, fine_count_);
  }

  Matrix upsample_adjoint(const Matrix& grad_fine) const {
    Matrix scaled = grad_fine;
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) /= fine_count_[static_cast<std::size_t>(i)];
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(coarse_->size()), grad_fine.cols());
    accumulate(out, scaled, map_.in_rows, map_.out_rows);
    return out;
  }

 private:
  // ref + sum(x - ref) / n rather than sum(x) / n: same linear map, but a
  // constant comes back bit-exact
  static Matrix mean(const Matrix& src, const std::vector<std::vector<std::int64_t>>& from,
                     const std::vector<std::vector<std::int64_t>>& to, const std::vector<std::int64_t>& ref,
                     const std::vector<double>& count) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(ref.size()), src.cols());
    for (std::size_t o = 0; o < from.size(); ++o)
      for (std::size_t t = 0; t < from[o].size(); ++t)
        out.row(to[o][t]) += src.row(from[o][t]) - src.row(ref[static_cast<std::size_t>(to[o][t])]);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      out.row(r) = out.row(r) / count[static_cast<std::size_t>(r)] + src.row(ref[static_cast<std::size_t>(r)]);
    return out;
  }

  static void accumulate(Matrix& dst, const Matrix& src, const std::vector<std::vector<std::int64_t>>& from,
                         const std::vector<std::vector<std::int64_t>>& to) {
    for (std::size_t o = 0; o < from.size(); ++o)
      for (std::size_t t = 0; t < from[o].size(); ++t) dst.row(to[o][t]) += src.row(from[o][t]);
  }

  GeometryPtr fine_;
  GeometryPtr coarse_;
  KernelMap map_;
  std::vector<double> coarse_count_;
  std::vector<double> fine_count_;
  std::vector<std::int64_t> coarse_ref_;
  std::vector<std::int64_t> fine_ref_;
};

inline SparseTensor sparse_avg_pool(const SparseTensor& in, int k = 3, int stride = 2) {
  PoolingMap pm(in.geometry, k, stride);
  return {pm.coarse(), pm.pool(in.features)};
}

/// Upsamples `in` onto `target`, the fine geometry that pooling consumed.
inline SparseTensor sparse_upsample(const SparseTensor& in, const GeometryPtr& target, int k = 3, int stride = 2) {
  PoolingMap pm(target, k, stride);
  if (!same_geometry(pm.coarse(), in.geometry))
    throw Error("upsample input is not the stride-" + std::to_string(stride) + " reduction of the target geometry");
  return {target, pm.upsample(in.features)};
}

}  // namespace carnet
