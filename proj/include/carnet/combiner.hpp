#pragma once

#include "carnet/binary_io.hpp"
#include "carnet/model.hpp"
#include "carnet/sparse_tensor.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace carnet {

inline constexpr int kCoeffScale = 128;
inline constexpr int kCoeffMin = -16;
inline constexpr int kCoeffMax = 15;
inline constexpr int kCoeffBits = 5;

/// Frame-level linear weights of the MPSOs for one component, as signaled:
/// a_i = values[i] / 128 with values[i] in [-16, 15].
struct CoefficientRecord {
  Component component = Component::Y;
  std::vector<int> values;

  std::size_t mpso_count() const { return values.size(); }
  std::size_t payload_bits() const { return values.size() * kCoeffBits; }

  Vector dequantized() const {
    Vector a(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) a(static_cast<Eigen::Index>(i)) = double(values[i]) / kCoeffScale;
    return a;
  }

  bool is_zero() const {
    return std::all_of(values.begin(), values.end(), [](int v) { return v == 0; });
  }

  void validate() const {
    for (int v : values)
      if (v < kCoeffMin || v > kCoeffMax) throw Error("coefficient " + std::to_string(v) + " outside [-16, 15]");
  }

  friend bool operator==(const CoefficientRecord&, const CoefficientRecord&) = default;
};

/// D = F - F_hat for the component under processing.
inline Vector compression_distortion(const Vector& original, const Vector& compressed) {
  if (original.size() != compressed.size())
    throw Error("distortion needs aligned attributes (" + std::to_string(original.size()) + " vs " +
                std::to_string(compressed.size()) + " points)");
  return original - compressed;
}

inline Vector compression_distortion(const SparseTensor& original, const SparseTensor& compressed) {
  if (!same_geometry(original.geometry, compressed.geometry)) throw Error("distortion needs aligned geometry");
  if (original.channels() != 1 || compressed.channels() != 1) throw Error("distortion is computed per component");
  return compression_distortion(Vector(original.features.col(0)), Vector(compressed.features.col(0)));
}

/// Minimum-norm minimizer of ||D - R A||^2. Equals (R^T R)^-1 R^T D when
/// R has full column rank.
inline Vector lse_solve(const Matrix& r, const Vector& d) {
  if (r.rows() != d.size()) throw Error("offset matrix and distortion differ in point count");
  if (r.rows() < 1) throw Error("least-squares combination needs at least one point");
  Eigen::MatrixXd rc = r;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(rc);
  return cod.solve(d);
}

/// 128 * a rounded half away from zero, then clamped to [-16, 15].
inline CoefficientRecord quantize_coeffs(const Vector& a, Component component = Component::Y) {
  CoefficientRecord rec;
  rec.component = component;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double s = std::round(kCoeffScale * a(i));  // std::round rounds halves away from zero
    rec.values.push_back(static_cast<int>(std::clamp(s, double(kCoeffMin), double(kCoeffMax))));
  }
  return rec;
}

/// F_filtered = clamp(F_hat + sum_i (s_i / 128) d_i, 0, 1).
inline Vector apply_offsets(const Vector& compressed, const Matrix& r, const CoefficientRecord& rec) {
  if (static_cast<std::size_t>(r.cols()) != rec.mpso_count())
    throw Error("record carries " + std::to_string(rec.mpso_count()) + " coefficients for " +
                std::to_string(r.cols()) + " MPSOs");
  if (r.rows() != compressed.size()) throw Error("offset matrix and attributes differ in point count");
  rec.validate();
  Vector out = compressed + r * rec.dequantized();
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

inline double mean_squared_error(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("MSE needs aligned vectors");
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

struct FilterResult {
  Vector filtered;
  CoefficientRecord record;
};

/// Solve, quantize, apply; falls back to the all-zero record whenever the
/// quantized combination would not lower the MSE.
inline FilterResult encode_with_fallback(const Vector& original, const Vector& compressed, const Matrix& r,
                                         Component component = Component::Y) {
  const Vector d = compression_distortion(original, compressed);
  CoefficientRecord rec = quantize_coeffs(lse_solve(r, d), component);
  Vector filtered = apply_offsets(compressed, r, rec);
  const double before = mean_squared_error(original, compressed);
  if (rec.is_zero() || !(mean_squared_error(original, filtered) < before)) {
    rec.values.assign(rec.values.size(), 0);
    filtered = apply_offsets(compressed, r, rec);
  }
  return {std::move(filtered), std::move(rec)};
}

// Coefficient bitstream:
//   "CARC" | version u8 = 1 | record count u8
//   per record: component u8 (0 = Y, 1 = U, 2 = V) | H u8 |
//               H x 5-bit two's-complement values, MSB first, zero-padded to a byte

inline constexpr std::uint8_t kCoeffStreamVersion = 1;

inline std::vector<char> write_coeff_stream(const std::vector<CoefficientRecord>& records) {
  if (records.size() > 255) throw Error("at most 255 coefficient records per stream");
  ByteWriter out;
  out.bytes("CARC");
  out.u8(kCoeffStreamVersion);
  out.u8(static_cast<std::uint8_t>(records.size()));
  for (const auto& rec : records) {
    rec.validate();
    if (rec.values.size() > 255) throw Error("at most 255 coefficients per record");
    out.u8(static_cast<std::uint8_t>(rec.component));
    out.u8(static_cast<std::uint8_t>(rec.values.size()));
    std::uint32_t acc = 0;
    int filled = 0;
    for (int v : rec.values) {
      acc = (acc << kCoeffBits) | (static_cast<std::uint32_t>(v) & 0x1Fu);
      filled += kCoeffBits;
      while (filled >= 8) {
        out.u8(static_cast<std::uint8_t>((acc >> (filled - 8)) & 0xFFu));
        filled -= 8;
      }
    }
    if (filled > 0) out.u8(static_cast<std::uint8_t>((acc << (8 - filled)) & 0xFFu));
  }
  return out.take();
}

inline std::vector<CoefficientRecord> read_coeff_stream(const std::vector<char>& bytes) {
  ByteReader in(bytes);
  if (in.bytes(4) != "CARC") throw Error("not a coefficient stream (bad magic)");
  if (const auto v = in.u8(); v != kCoeffStreamVersion)
    throw Error("unsupported coefficient stream version " + std::to_string(v));
  std::vector<CoefficientRecord> records(in.u8());
  for (auto& rec : records) {
    const auto tag = in.u8();
    if (tag > 2) throw Error("bad component tag " + std::to_string(tag));
    rec.component = static_cast<Component>(tag);
    const std::size_t h = in.u8();
    const std::size_t nbytes = (h * kCoeffBits + 7) / 8;
    std::uint32_t acc = 0;
    int filled = 0;
    std::size_t consumed = 0;
    for (std::size_t i = 0; i < h; ++i) {
      while (filled < kCoeffBits) {
        acc = (acc << 8) | in.u8();
        filled += 8;
        ++consumed;
      }
      const std::uint32_t raw = (acc >> (filled - kCoeffBits)) & 0x1Fu;
      filled -= kCoeffBits;
      rec.values.push_back(raw & 0x10u ? static_cast<int>(raw) - 32 : static_cast<int>(raw));
    }
    if (consumed != nbytes) throw Error("coefficient record padding mismatch");
    if (filled > 0 && (acc & ((1u << filled) - 1u)) != 0) throw Error("non-zero padding bits in coefficient record");
  }
  if (in.remaining() != 0) throw Error("trailing bytes after coefficient records");
  return records;
}

/// Bits per point added by signaling `records` for a frame of `points` points.
inline double coefficient_bpp(const std::vector<CoefficientRecord>& records, std::size_t points) {
  std::size_t bits = 0;
  for (const auto& r : records) bits += r.payload_bits();
  return points == 0 ? 0.0 : static_cast<double>(bits) / static_cast<double>(points);
}

}  // namespace carnet
