#pragma once

#include "carnet/kernel_map.hpp"
#include "carnet/sparse_tensor.hpp"

#include <cmath>
#include <random>
#include <string>

namespace carnet {

/// Weights of one sparse convolution. `weights` stacks one C_in x C_out block
/// per kernel offset, in kernel_offsets() order.
///
/// For a transposed kernel, C_in is the coarse (input) width and C_out the
/// fine (output) width; each block maps a coarse row onto the fine rows it
/// covers.
struct ConvKernel {
  int kernel_size = 3;
  int stride = 1;
  bool transposed = false;
  Eigen::Index in_channels = 0;
  Eigen::Index out_channels = 0;
  Matrix weights;
  Vector bias;

  ConvKernel() = default;
  ConvKernel(int k, Eigen::Index c_in, Eigen::Index c_out, int s = 1, bool transpose = false)
      : kernel_size(k),
        stride(s),
        transposed(transpose),
        in_channels(c_in),
        out_channels(c_out),
        weights(Matrix::Zero(static_cast<Eigen::Index>(k) * k * k * c_in, c_out)),
        bias(Vector::Zero(c_out)) {}

  Eigen::Index volume() const { return static_cast<Eigen::Index>(kernel_size) * kernel_size * kernel_size; }

  auto block(std::size_t o) { return weights.middleRows(static_cast<Eigen::Index>(o) * in_channels, in_channels); }
  auto block(std::size_t o) const {
    return weights.middleRows(static_cast<Eigen::Index>(o) * in_channels, in_channels);
  }

  ConvKernel zeros_like() const {
    ConvKernel g = *this;
    g.weights.setZero();
    g.bias.setZero();
    return g;
  }
};

/// Kernel whose transposed convolution is the exact adjoint of `k`'s
/// forward convolution over the same kernel map (bias dropped).
inline ConvKernel adjoint_kernel(const ConvKernel& k) {
  ConvKernel t(k.kernel_size, k.out_channels, k.in_channels, k.stride, !k.transposed);
  for (std::size_t o = 0; o < static_cast<std::size_t>(k.volume()); ++o) t.block(o) = k.block(o).transpose();
  return t;
}

/// Uniform He-style init over the full k^3 * C_in fan-in.
template <class Rng>
void init_kernel(ConvKernel& k, Rng& rng, double gain = 1.0) {
  const double fan_in = static_cast<double>(k.volume() * k.in_channels);
  const double bound = gain * std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index r = 0; r < k.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < k.weights.cols(); ++c) k.weights(r, c) = dist(rng);
  k.bias.setZero();
}

namespace detail {

inline Matrix gather_rows(const Matrix& src, const std::vector<std::int64_t>& rows) {
  Matrix g(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t t = 0; t < rows.size(); ++t) g.row(static_cast<Eigen::Index>(t)) = src.row(rows[t]);
  return g;
}

inline void scatter_add_rows(Matrix& dst, const Matrix& src, const std::vector<std::int64_t>& rows) {
  for (std::size_t t = 0; t < rows.size(); ++t) dst.row(rows[t]) += src.row(static_cast<Eigen::Index>(t));
}

inline void check_map(const ConvKernel& kernel, const KernelMap& map) {
  if (static_cast<Eigen::Index>(map.volume()) != kernel.volume() || map.stride != kernel.stride)
    throw Error("kernel map (k=" + std::to_string(map.kernel_size) + ", stride=" + std::to_string(map.stride) +
                ") does not match kernel (k=" + std::to_string(kernel.kernel_size) +
                ", stride=" + std::to_string(kernel.stride) + ")");
}

}  // namespace detail

/// out[j] = bias + sum over pairs (i, j) of offset o of in[i] * W_o.
inline SparseTensor sparse_conv(const SparseTensor& in, const ConvKernel& kernel, const KernelMap& map) {
  if (kernel.transposed) throw Error("sparse_conv called with a transposed kernel");
  if (in.channels() != kernel.in_channels)
    throw Error("channel mismatch: input has " + std::to_string(in.channels()) + ", kernel expects " +
                std::to_string(kernel.in_channels));
  detail::check_map(kernel, map);
  if (!same_geometry(in.geometry, map.in_geometry)) throw Error("kernel map built for a different input geometry");

  Matrix out(static_cast<Eigen::Index>(map.out_geometry->size()), kernel.out_channels);
  out.rowwise() = kernel.bias.transpose();
  for (std::size_t o = 0; o < map.volume(); ++o) {
    if (map.in_rows[o].empty()) continue;
    const Matrix x = detail::gather_rows(in.features, map.in_rows[o]);
    detail::scatter_add_rows(out, x * kernel.block(o), map.out_rows[o]);
  }
  return {map.out_geometry, std::move(out)};
}

/// Transposed convolution onto the input geometry of `map` (the cached finer
/// level). Each coarse row scatters through the reversed pairs.
inline SparseTensor sparse_conv_transpose(const SparseTensor& in, const ConvKernel& kernel, const KernelMap& map) {
  if (!kernel.transposed) throw Error("sparse_conv_transpose called with a forward kernel");
  if (in.channels() != kernel.in_channels)
    throw Error("channel mismatch: input has " + std::to_string(in.channels()) + ", kernel expects " +
                std::to_string(kernel.in_channels));
  detail::check_map(kernel, map);
  if (!same_geometry(in.geometry, map.out_geometry))
    throw Error("transposed kernel map built for a different coarse geometry");

  Matrix out(static_cast<Eigen::Index>(map.in_geometry->size()), kernel.out_channels);
  out.rowwise() = kernel.bias.transpose();
  for (std::size_t o = 0; o < map.volume(); ++o) {
    if (map.out_rows[o].empty()) continue;
    const Matrix y = detail::gather_rows(in.features, map.out_rows[o]);
    detail::scatter_add_rows(out, y * kernel.block(o), map.in_rows[o]);
  }
  return {map.in_geometry, std::move(out)};
}

inline SparseTensor sparse_conv_transpose(const SparseTensor& in, const ConvKernel& kernel, const GeometryPtr& target) {
  if (target->empty()) return SparseTensor::zeros(target, kernel.out_channels);
  return sparse_conv_transpose(in, kernel, build_kernel_map(target, in.geometry, kernel.kernel_size, kernel.stride));
}

struct ConvGrads {
  Matrix input;
  ConvKernel kernel;  // weight and bias gradients, same shapes as the kernel
};

/// Reverse-mode gradients of sparse_conv (or sparse_conv_transpose when the
/// kernel is transposed) given the upstream gradient of its output.
inline ConvGrads conv_backward(const SparseTensor& in, const ConvKernel& kernel, const KernelMap& map,
                               const Matrix& grad_out) {
  detail::check_map(kernel, map);
  const auto& src_rows = kernel.transposed ? map.out_rows : map.in_rows;
  const auto& dst_rows = kernel.transposed ? map.in_rows : map.out_rows;
  const auto& dst_geometry = kernel.transposed ? map.in_geometry : map.out_geometry;
  if (in.channels() != kernel.in_channels || grad_out.cols() != kernel.out_channels ||
      static_cast<std::size_t>(grad_out.rows()) != dst_geometry->size() ||
      static_cast<std::size_t>(in.size()) != (kernel.transposed ? map.out_geometry : map.in_geometry)->size())
    throw Error("conv_backward: shape mismatch");

  ConvGrads g{Matrix::Zero(in.size(), in.channels()), kernel.zeros_like()};
  g.kernel.bias = grad_out.colwise().sum().transpose();
  for (std::size_t o = 0; o < map.volume(); ++o) {
    if (src_rows[o].empty()) continue;
    const Matrix x = detail::gather_rows(in.features, src_rows[o]);
    const Matrix gy = detail::gather_rows(grad_out, dst_rows[o]);
    g.kernel.block(o).noalias() = x.transpose() * gy;
    detail::scatter_add_rows(g.input, gy * kernel.block(o).transpose(), src_rows[o]);
  }
  return g;
}

}  // namespace carnet
