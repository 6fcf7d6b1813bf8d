#pragma once

#include "carnet/combiner.hpp"
#include "carnet/frame.hpp"
#include "carnet/model.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace carnet {

/// One trained network per component, applied in Y, U, V order. Each
/// network sees the compressed channels up to and including its own.
struct ComponentModels {
  std::array<std::optional<ModelWeights>, 3> models;

  const ModelWeights& at(Component c) const {
    const auto& m = models[static_cast<std::size_t>(c)];
    if (!m) throw Error(std::string("no model loaded for component ") + component_name(c));
    if (m->config.component != c)
      throw Error(std::string("model for slot ") + component_name(c) + " was trained for component " +
                  component_name(m->config.component));
    return *m;
  }
};

struct EncodedFrame {
  PointCloudFrame filtered;
  std::vector<CoefficientRecord> records;
};

namespace detail {

inline Vector to_code_values(const Vector& normalized, double peak) {
  return (normalized * peak).array().round().matrix();
}

}  // namespace detail

/// Encoder side: derives MPSOs per component, solves and quantizes the
/// combination against the original, and keeps a component unfiltered
/// (all-zero record) unless the rounded result strictly lowers its MSE.
inline EncodedFrame encode_frame(const PointCloudFrame& original, const PointCloudFrame& compressed,
                                 const ComponentModels& models) {
  if (original.color_space != ColorSpace::YUV || compressed.color_space != ColorSpace::YUV)
    throw Error("in-loop filtering operates on YUV frames");
  require_aligned(original, compressed);
  EncodedFrame out{compressed, {}};
  const GeometryPtr geometry = compressed.geometry();
  const double peak = compressed.peak();
  for (int c = 0; c < 3; ++c) {
    const auto comp = static_cast<Component>(c);
    const Matrix r = forward_mpsos(assemble_component_input(compressed, comp, geometry), models.at(comp));
    const Vector f = original.attributes.col(c) / peak;
    const Vector f_hat = compressed.attributes.col(c) / peak;
    CoefficientRecord rec = quantize_coeffs(lse_solve(r, compression_distortion(f, f_hat)), comp);
    Vector filtered = detail::to_code_values(apply_offsets(f_hat, r, rec), peak);
    const Vector orig_codes = original.attributes.col(c);
    const Vector comp_codes = compressed.attributes.col(c);
    if (!(mean_squared_error(orig_codes, filtered) < mean_squared_error(orig_codes, comp_codes))) {
      rec.values.assign(rec.values.size(), 0);
      filtered = comp_codes;
    }
    out.filtered.attributes.col(c) = filtered;
    out.records.push_back(std::move(rec));
  }
  return out;
}

/// Decoder side: needs only the compressed frame, the networks and the
/// signaled records.
inline PointCloudFrame decode_frame(const PointCloudFrame& compressed, const ComponentModels& models,
                                    const std::vector<CoefficientRecord>& records) {
  if (compressed.color_space != ColorSpace::YUV) throw Error("in-loop filtering operates on YUV frames");
  PointCloudFrame out = compressed;
  const GeometryPtr geometry = compressed.geometry();
  const double peak = compressed.peak();
  for (const auto& rec : records) {
    const int c = static_cast<int>(rec.component);
    if (rec.is_zero()) continue;
    const Matrix r = forward_mpsos(assemble_component_input(compressed, rec.component, geometry), models.at(rec.component));
    const Vector f_hat = compressed.attributes.col(c) / peak;
    out.attributes.col(c) = detail::to_code_values(apply_offsets(f_hat, r, rec), peak);
  }
  return out;
}

}  // namespace carnet
