#pragma once

#include "carnet/sparse_tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace carnet {

/// Kernel offsets in lexicographic (x, y, z) order.
///
/// Odd k is centered: offsets in [-(k-1)/2, (k-1)/2]^3. Even k is only
/// meaningful for strided maps and is anchored at the coarse voxel's first
/// child: offsets in [0, k-1]^3 (k = 2 covers exactly the 2^3 child cell).
inline std::vector<VoxelCoord> kernel_offsets(int k, int stride) {
  if (k < 1) throw Error("kernel size must be positive");
  if (stride == 1 && k % 2 == 0) throw Error("stride-1 kernels must have odd size");
  const int lo = (k % 2 == 1) ? -(k - 1) / 2 : 0;
  std::vector<VoxelCoord> out;
  out.reserve(static_cast<std::size_t>(k) * k * k);
  for (int dx = lo; dx < lo + k; ++dx)
    for (int dy = lo; dy < lo + k; ++dy)
      for (int dz = lo; dz < lo + k; ++dz) out.push_back({dx, dy, dz});
  return out;
}

/// For each kernel offset, the (input row, output row) pairs it connects:
/// pair (i, j) is present iff out[j] * stride + offset == in[i].
struct KernelMap {
  int kernel_size = 1;
  int stride = 1;
  std::vector<VoxelCoord> offsets;
  std::vector<std::vector<std::int64_t>> in_rows;
  std::vector<std::vector<std::int64_t>> out_rows;
  GeometryPtr in_geometry;
  GeometryPtr out_geometry;

  std::size_t volume() const { return offsets.size(); }

  std::size_t pair_count() const {
    std::size_t n = 0;
    for (const auto& v : in_rows) n += v.size();
    return n;
  }

  std::vector<std::pair<std::int64_t, std::int64_t>> pairs(std::size_t o) const {
    std::vector<std::pair<std::int64_t, std::int64_t>> p;
    p.reserve(in_rows[o].size());
    for (std::size_t t = 0; t < in_rows[o].size(); ++t) p.emplace_back(in_rows[o][t], out_rows[o][t]);
    return p;
  }
};

inline KernelMap build_kernel_map(const GeometryPtr& in, const GeometryPtr& out, int k, int stride) {
  if (!in || !out) throw Error("kernel map needs both geometries");
  if (stride < 1) throw Error("stride must be positive");
  if (stride == 1 && !same_geometry(in, out))
    throw Error("stride-1 kernel maps require identical input and output coordinates");
  KernelMap map;
  map.kernel_size = k;
  map.stride = stride;
  map.offsets = kernel_offsets(k, stride);
  map.in_rows.resize(map.offsets.size());
  map.out_rows.resize(map.offsets.size());
  map.in_geometry = in;
  map.out_geometry = out;
  for (std::size_t o = 0; o < map.offsets.size(); ++o) {
    const VoxelCoord off = map.offsets[o];
    auto& ins = map.in_rows[o];
    auto& outs = map.out_rows[o];
    for (std::size_t j = 0; j < out->size(); ++j) {
      if (auto i = in->find((*out)[j] * stride + off)) {
        ins.push_back(*i);
        outs.push_back(static_cast<std::int64_t>(j));
      }
    }
  }
  return map;
}

inline KernelMap build_kernel_map(const SparseTensor& in, const GeometryPtr& out, int k, int stride) {
  return build_kernel_map(in.geometry, out, k, stride);
}

}  // namespace carnet
