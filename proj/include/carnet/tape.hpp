#pragma once

#include "carnet/conv.hpp"
#include "carnet/kernel_map.hpp"
#include "carnet/pooling.hpp"
#include "carnet/sparse_tensor.hpp"

#include <algorithm>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace carnet {

/// Memoizes kernel maps and pooling maps for one forward pass so every layer
/// at the same level shares the same pair lists.
class MapCache {
 public:
  std::shared_ptr<const KernelMap> kernel_map(const GeometryPtr& in, const GeometryPtr& out, int k, int stride) {
    auto key = std::make_tuple(in.get(), out.get(), k, stride);
    auto it = kernel_maps_.find(key);
    if (it != kernel_maps_.end()) return it->second;
    auto m = std::make_shared<const KernelMap>(build_kernel_map(in, out, k, stride));
    kernel_maps_.emplace(key, m);
    keep_alive_.push_back(in);
    keep_alive_.push_back(out);
    return m;
  }

  std::shared_ptr<const PoolingMap> pooling_map(const GeometryPtr& fine, int k, int stride) {
    auto key = std::make_tuple(fine.get(), k, stride);
    auto it = pooling_maps_.find(key);
    if (it != pooling_maps_.end()) return it->second;
    auto m = std::make_shared<const PoolingMap>(fine, k, stride);
    pooling_maps_.emplace(key, m);
    keep_alive_.push_back(fine);
    return m;
  }

  /// Coarse geometry of `fine`, shared by every caller asking for it.
  GeometryPtr downsample(const GeometryPtr& fine, int stride = 2) {
    auto key = std::make_pair(fine.get(), stride);
    auto it = coarse_.find(key);
    if (it != coarse_.end()) return it->second;
    auto c = fine->downsample(stride);
    coarse_.emplace(key, c);
    keep_alive_.push_back(fine);
    return c;
  }

 private:
  std::map<std::tuple<const CoordSet*, const CoordSet*, int, int>, std::shared_ptr<const KernelMap>> kernel_maps_;
  std::map<std::tuple<const CoordSet*, int, int>, std::shared_ptr<const PoolingMap>> pooling_maps_;
  std::map<std::pair<const CoordSet*, int>, GeometryPtr> coarse_;
  std::vector<GeometryPtr> keep_alive_;
};

inline SparseTensor relu(const SparseTensor& t) { return {t.geometry, t.features.cwiseMax(0.0)}; }

inline SparseTensor concat_channels(const SparseTensor& a, const SparseTensor& b) {
  if (!same_geometry(a.geometry, b.geometry)) {
    std::vector<VoxelCoord> diff;
    std::set_symmetric_difference(a.coords().begin(), a.coords().end(), b.coords().begin(), b.coords().end(),
                                  std::back_inserter(diff));
    throw Error("concat_channels: coordinate sets differ (symmetric difference holds " + std::to_string(diff.size()) +
                " coordinates)");
  }
  Matrix f(a.size(), a.channels() + b.channels());
  f.leftCols(a.channels()) = a.features;
  f.rightCols(b.channels()) = b.features;
  return {a.geometry, std::move(f)};
}

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode recorder for the fixed layer vocabulary of the network:
/// sparse (transposed) convolution, ReLU, add, subtract, channel concat and
/// fixed-weight pooling/upsampling. Kernels are referenced, not copied, and
/// must outlive the tape.
class Tape {
 public:
  Var leaf(SparseTensor t) { return push(std::move(t), {}); }

  Var conv(Var x, const ConvKernel& kernel, std::shared_ptr<const KernelMap> map) {
    SparseTensor y = kernel.transposed ? sparse_conv_transpose(value(x), kernel, *map) : sparse_conv(value(x), kernel, *map);
    const ConvKernel* kp = &kernel;
    return push(std::move(y), [this, x, kp, map](std::size_t self) {
      ConvGrads g = conv_backward(value(x), *kp, *map, grads_[self]);
      accumulate(x, g.input);
      auto [it, inserted] = kernel_grads_.try_emplace(kp, std::move(g.kernel));
      if (!inserted) {
        it->second.weights += g.kernel.weights;
        it->second.bias += g.kernel.bias;
      }
    });
  }

  Var relu(Var x) {
    return push(carnet::relu(value(x)), [this, x](std::size_t self) {
      const Matrix mask = (value(x).features.array() > 0.0).cast<double>().matrix();
      accumulate(x, grads_[self].cwiseProduct(mask));
    });
  }

  Var add(Var a, Var b) {
    if (!same_geometry(value(a).geometry, value(b).geometry) || value(a).channels() != value(b).channels())
      throw Error("add: operands differ in geometry or width");
    return push({value(a).geometry, value(a).features + value(b).features}, [this, a, b](std::size_t self) {
      accumulate(a, grads_[self]);
      accumulate(b, grads_[self]);
    });
  }

  Var sub(Var a, Var b) {
    if (!same_geometry(value(a).geometry, value(b).geometry) || value(a).channels() != value(b).channels())
      throw Error("sub: operands differ in geometry or width");
    return push({value(a).geometry, value(a).features - value(b).features}, [this, a, b](std::size_t self) {
      accumulate(a, grads_[self]);
      accumulate(b, -grads_[self]);
    });
  }

  Var concat(const std::vector<Var>& parts) {
    SparseTensor acc = value(parts.front());
    for (std::size_t p = 1; p < parts.size(); ++p) acc = concat_channels(acc, value(parts[p]));
    return push(std::move(acc), [this, parts](std::size_t self) {
      Eigen::Index col = 0;
      for (Var p : parts) {
        const Eigen::Index w = value(p).channels();
        accumulate(p, grads_[self].middleCols(col, w));
        col += w;
      }
    });
  }

  Var pool(Var x, std::shared_ptr<const PoolingMap> pm) {
    return push({pm->coarse(), pm->pool(value(x).features)},
                [this, x, pm](std::size_t self) { accumulate(x, pm->pool_adjoint(grads_[self])); });
  }

  Var upsample(Var x, std::shared_ptr<const PoolingMap> pm) {
    return push({pm->fine(), pm->upsample(value(x).features)},
                [this, x, pm](std::size_t self) { accumulate(x, pm->upsample_adjoint(grads_[self])); });
  }

  /// Subtracts each channel's mean over the points.
  Var center_channels(Var x) {
    const Matrix& f = value(x).features;
    Matrix y = f;
    if (f.rows() > 0) y.rowwise() -= f.colwise().mean();
    return push({value(x).geometry, std::move(y)}, [this, x](std::size_t self) {
      Matrix g = grads_[self];
      if (g.rows() > 0) g.rowwise() -= g.colwise().mean();
      accumulate(x, g);
    });
  }

  /// Rescales every channel to root-mean-square `target` over the points.
  /// All-zero channels stay zero.
  Var normalize_channels(Var x, double target) {
    const Matrix& f = value(x).features;
    const double n = static_cast<double>(std::max<Eigen::Index>(f.rows(), 1));
    Vector scale(f.cols());
    for (Eigen::Index c = 0; c < f.cols(); ++c) scale(c) = target / std::sqrt(f.col(c).squaredNorm() / n + kNormEpsilon);
    Matrix y = f * scale.asDiagonal();
    return push({value(x).geometry, std::move(y)}, [this, x, scale, n](std::size_t self) {
      const Matrix& xf = value(x).features;
      const Matrix& g = grads_[self];
      Matrix gx(xf.rows(), xf.cols());
      for (Eigen::Index c = 0; c < xf.cols(); ++c) {
        const double ms = xf.col(c).squaredNorm() / n + kNormEpsilon;
        const double proj = xf.col(c).dot(g.col(c)) / (n * ms);
        gx.col(c) = scale(c) * (g.col(c) - proj * xf.col(c));
      }
      accumulate(x, gx);
    });
  }

  static constexpr double kNormEpsilon = 1e-18;

  const SparseTensor& value(Var v) const { return values_.at(v.id); }

  /// Seeds d(loss)/d(out) and propagates to every recorded value and kernel.
  void backward(Var out, const Matrix& seed) {
    grads_.assign(values_.size(), Matrix());
    kernel_grads_.clear();
    if (seed.rows() != value(out).size() || seed.cols() != value(out).channels())
      throw Error("backward seed shape does not match output");
    grads_[out.id] = seed;
    for (std::size_t n = out.id + 1; n-- > 0;) {
      if (grads_[n].size() == 0 || !backward_[n]) continue;
      backward_[n](n);
    }
  }

  /// Gradient w.r.t. a recorded value (zeros if nothing flowed into it).
  Matrix grad(Var v) const {
    if (v.id < grads_.size() && grads_[v.id].size() != 0) return grads_[v.id];
    return Matrix::Zero(value(v).size(), value(v).channels());
  }

  /// Gradient w.r.t. a kernel used on this tape, or nullptr if unused.
  const ConvKernel* kernel_grad(const ConvKernel& k) const {
    auto it = kernel_grads_.find(&k);
    return it == kernel_grads_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return values_.size(); }

 private:
  Var push(SparseTensor t, std::function<void(std::size_t)> bw) {
    values_.push_back(std::move(t));
    backward_.push_back(std::move(bw));
    return Var{values_.size() - 1};
  }

  template <class M>
  void accumulate(Var v, const M& g) {
    Matrix& dst = grads_[v.id];
    if (dst.size() == 0)
      dst = g;
    else
      dst += g;
  }

  std::vector<SparseTensor> values_;
  std::vector<std::function<void(std::size_t)>> backward_;
  std::vector<Matrix> grads_;
  std::unordered_map<const ConvKernel*, ConvKernel> kernel_grads_;
};

}  // namespace carnet
