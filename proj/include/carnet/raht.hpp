#pragma once

#include "carnet/frame.hpp"
#include "carnet/sparse_tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

namespace carnet {

/// One axis pass of the transform. Output node k is built from input nodes
/// first[k] and second[k]; second[k] < 0 means node first[k] passed through
/// unpaired. Every pair emits one high-pass coefficient.
struct RahtStep {
  int axis = 0;
  std::vector<std::int64_t> first;
  std::vector<std::int64_t> second;
  std::vector<double> w1;
  std::vector<double> w2;
  std::size_t high_offset = 0;  // index of this step's first high-pass coefficient
  std::size_t pair_count = 0;
};

/// Merge schedule of a region-adaptive Haar transform over one geometry.
/// Coefficients are laid out as [DC, high-pass coefficients in emission
/// order]; there are exactly as many coefficients as points.
struct RahtTree {
  std::size_t leaf_count = 0;
  std::vector<RahtStep> steps;
  double root_weight = 0.0;
};

/// Builds the merge schedule: per level, siblings are merged along x, then
/// y, then z, halving the coordinate on that axis each pass.
inline RahtTree build_raht_tree(const std::vector<VoxelCoord>& leaf_coords) {
  if (leaf_coords.empty()) throw Error("cannot transform an empty frame");
  RahtTree tree;
  tree.leaf_count = leaf_coords.size();

  VoxelCoord lo = leaf_coords.front();
  for (const auto& c : leaf_coords) lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
  std::vector<std::array<std::int64_t, 3>> coords;
  coords.reserve(leaf_coords.size());
  for (const auto& c : leaf_coords)
    coords.push_back({std::int64_t{c.x} - lo.x, std::int64_t{c.y} - lo.y, std::int64_t{c.z} - lo.z});
  std::vector<double> weight(coords.size(), 1.0);

  {
    std::vector<std::size_t> order(coords.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return coords[a] < coords[b]; });
    for (std::size_t i = 1; i < order.size(); ++i)
      if (coords[order[i]] == coords[order[i - 1]])
        throw Error("duplicate coordinate " + to_string(leaf_coords[order[i]]));
  }

  std::size_t high = 1;
  while (coords.size() > 1) {
    for (int axis = 0; axis < 3 && coords.size() > 1; ++axis) {
      // Group by the parent coordinate along `axis`.
      std::map<std::array<std::int64_t, 3>, std::array<std::int64_t, 2>> groups;
      for (std::size_t i = 0; i < coords.size(); ++i) {
        auto key = coords[i];
        key[axis] >>= 1;
        auto [it, inserted] = groups.try_emplace(key, std::array<std::int64_t, 2>{-1, -1});
        const int slot = static_cast<int>(coords[i][axis] & 1);
        it->second[slot] = static_cast<std::int64_t>(i);
      }
      RahtStep step;
      step.axis = axis;
      step.high_offset = high;
      std::vector<std::array<std::int64_t, 3>> next_coords;
      std::vector<double> next_weight;
      next_coords.reserve(groups.size());
      for (const auto& [key, members] : groups) {
        const auto a = members[0], b = members[1];
        if (a >= 0 && b >= 0) {
          step.first.push_back(a);
          step.second.push_back(b);
          step.w1.push_back(weight[static_cast<std::size_t>(a)]);
          step.w2.push_back(weight[static_cast<std::size_t>(b)]);
          next_weight.push_back(weight[static_cast<std::size_t>(a)] + weight[static_cast<std::size_t>(b)]);
          ++step.pair_count;
        } else {
          const auto only = a >= 0 ? a : b;
          step.first.push_back(only);
          step.second.push_back(-1);
          step.w1.push_back(weight[static_cast<std::size_t>(only)]);
          step.w2.push_back(0.0);
          next_weight.push_back(weight[static_cast<std::size_t>(only)]);
        }
        next_coords.push_back(key);
      }
      high += step.pair_count;
      coords = std::move(next_coords);
      weight = std::move(next_weight);
      tree.steps.push_back(std::move(step));
    }
  }
  tree.root_weight = weight.front();
  return tree;
}

/// Forward transform of one channel, values in leaf (input) order.
inline Vector raht_forward(const RahtTree& tree, const Vector& values) {
  if (static_cast<std::size_t>(values.size()) != tree.leaf_count) throw Error("tree/value size mismatch");
  Vector coeffs(values.size());
  std::vector<double> cur(values.data(), values.data() + values.size());
  for (const auto& step : tree.steps) {
    std::vector<double> next(step.first.size());
    std::size_t h = step.high_offset;
    for (std::size_t k = 0; k < step.first.size(); ++k) {
      const double v1 = cur[static_cast<std::size_t>(step.first[k])];
      if (step.second[k] < 0) {
        next[k] = v1;
        continue;
      }
      const double v2 = cur[static_cast<std::size_t>(step.second[k])];
      const double s = std::sqrt(step.w1[k] + step.w2[k]);
      const double a = std::sqrt(step.w1[k]) / s, b = std::sqrt(step.w2[k]) / s;
      next[k] = a * v1 + b * v2;
      coeffs(static_cast<Eigen::Index>(h++)) = -b * v1 + a * v2;
    }
    cur = std::move(next);
  }
  coeffs(0) = cur.front();
  return coeffs;
}

/// Exact inverse of raht_forward.
inline Vector raht_inverse(const RahtTree& tree, const Vector& coeffs) {
  if (static_cast<std::size_t>(coeffs.size()) != tree.leaf_count)
    throw Error("coefficient count (" + std::to_string(coeffs.size()) + ") does not match the tree (" +
                std::to_string(tree.leaf_count) + " points)");
  std::vector<double> cur{coeffs(0)};
  for (auto it = tree.steps.rbegin(); it != tree.steps.rend(); ++it) {
    const auto& step = *it;
    std::size_t inputs = 0;
    for (std::size_t k = 0; k < step.first.size(); ++k)
      inputs += step.second[k] < 0 ? 1 : 2;
    std::vector<double> prev(inputs);
    std::size_t h = step.high_offset;
    for (std::size_t k = 0; k < step.first.size(); ++k) {
      const double low = cur[k];
      if (step.second[k] < 0) {
        prev[static_cast<std::size_t>(step.first[k])] = low;
        continue;
      }
      const double high = coeffs(static_cast<Eigen::Index>(h++));
      const double s = std::sqrt(step.w1[k] + step.w2[k]);
      const double a = std::sqrt(step.w1[k]) / s, b = std::sqrt(step.w2[k]) / s;
      prev[static_cast<std::size_t>(step.first[k])] = a * low - b * high;
      prev[static_cast<std::size_t>(step.second[k])] = b * low + a * high;
    }
    cur = std::move(prev);
  }
  return Eigen::Map<const Vector>(cur.data(), static_cast<Eigen::Index>(cur.size()));
}

struct RahtCoefficients {
  Vector coeffs;
  RahtTree tree;
};

inline RahtCoefficients raht_forward(const PointCloudFrame& frame, int channel) {
  if (frame.size() == 0) throw Error("cannot transform an empty frame");
  RahtTree tree = build_raht_tree(frame.coords);
  Vector values = frame.attributes.col(channel) / frame.peak();
  return {raht_forward(tree, values), std::move(tree)};
}

/// Zeroth-order entropy in bits per symbol.
inline double empirical_entropy(const std::vector<std::int64_t>& symbols) {
  if (symbols.empty()) return 0.0;
  std::map<std::int64_t, std::size_t> hist;
  for (auto s : symbols) ++hist[s];
  const double n = static_cast<double>(symbols.size());
  double h = 0.0;
  for (const auto& [s, c] : hist) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

struct DistortResult {
  PointCloudFrame compressed;
  double bpp = 0.0;
  std::array<double, 3> channel_bpp{};
};

/// Simplified lossy attribute codec. Per channel, in normalized scale:
/// RAHT, uniform quantization with step q (the DC term with a step fine
/// enough to pin the mean to a quarter code value), dequantization, inverse
/// RAHT, clamp to [0, 1], and rounding to integer code values. The rate is
/// the zeroth-order entropy of the quantized integers. q == 0 selects the
/// lossless path: attributes pass through and the rate is the entropy of the
/// raw code values.
inline DistortResult distort(const PointCloudFrame& frame, double q) {
  if (!(q >= 0.0) || !std::isfinite(q)) throw Error("quantization step must be finite and non-negative");
  if (frame.size() == 0) throw Error("cannot distort an empty frame");
  DistortResult out;
  const double peak = frame.peak();
  const double n = static_cast<double>(frame.size());
  Matrix rec(frame.attributes.rows(), frame.attributes.cols());
  if (q == 0.0) {
    rec = frame.attributes.array().round().matrix();
    for (int c = 0; c < 3; ++c) {
      std::vector<std::int64_t> sym(frame.size());
      for (std::size_t i = 0; i < frame.size(); ++i) sym[i] = static_cast<std::int64_t>(rec(static_cast<Eigen::Index>(i), c));
      out.channel_bpp[static_cast<std::size_t>(c)] = empirical_entropy(sym);
    }
  } else {
    const RahtTree tree = build_raht_tree(frame.coords);
    const double dc_step = std::sqrt(n) / (4.0 * peak);
    for (int c = 0; c < 3; ++c) {
      const Vector coeffs = raht_forward(tree, Vector(frame.attributes.col(c) / peak));
      std::vector<std::int64_t> sym(frame.size());
      Vector deq(coeffs.size());
      for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
        const double step = i == 0 ? dc_step : q;
        sym[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::llround(coeffs(i) / step));
        deq(i) = static_cast<double>(sym[static_cast<std::size_t>(i)]) * step;
      }
      const Vector values = raht_inverse(tree, deq);
      for (Eigen::Index i = 0; i < values.size(); ++i) rec(i, c) = std::round(std::clamp(values(i), 0.0, 1.0) * peak);
      out.channel_bpp[static_cast<std::size_t>(c)] = empirical_entropy(sym);
    }
  }
  out.bpp = out.channel_bpp[0] + out.channel_bpp[1] + out.channel_bpp[2];
  out.compressed = frame.with_attributes(std::move(rec));
  return out;
}

}  // namespace carnet
