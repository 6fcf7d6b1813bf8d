#pragma once

#include "carnet/adam.hpp"
#include "carnet/binary_io.hpp"
#include "carnet/model.hpp"

#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

namespace carnet {

// Weight file layout (all integers little-endian):
//   "CARW" | version u8 = 1
//   config: channels u32, kernel u32, mpso_count u32, input_channels u32, component u8
//   parameter count u32
//   per parameter: name length u16, name bytes, rank u8, dims u32 x rank,
//                  values f32 x prod(dims), row-major
// Kernel weights are rank 3 [k^3, C_in, C_out]; biases rank 1 [C_out].
// The autoencoder depth is implied by the "lfe.down<l>" names present.
//
// A checkpoint is a weight file followed by an optimizer block:
//   "CARO" | step i64 | learning rate, beta1, beta2, epsilon f64
//   moment count u32 | per moment: length u32, first moment f64 x n, second moment f64 x n

inline constexpr std::uint8_t kWeightFormatVersion = 1;

inline void write_weights(ByteWriter& out, const ModelWeights& w) {
  const auto& c = w.config;
  out.bytes("CARW");
  out.u8(kWeightFormatVersion);
  out.u32(static_cast<std::uint32_t>(c.channels));
  out.u32(static_cast<std::uint32_t>(c.kernel_size));
  out.u32(static_cast<std::uint32_t>(c.mpso_count));
  out.u32(static_cast<std::uint32_t>(c.input_channels));
  out.u8(static_cast<std::uint8_t>(c.component));
  std::uint32_t count = 0;
  w.for_each([&](const std::string&, const ConvKernel&) { count += 2; });
  out.u32(count);
  auto record = [&](const std::string& name, const std::vector<std::uint32_t>& dims, const double* values,
                    std::size_t n) {
    out.u16(static_cast<std::uint16_t>(name.size()));
    out.bytes(name);
    out.u8(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) out.u32(d);
    for (std::size_t i = 0; i < n; ++i) out.f32(static_cast<float>(values[i]));
  };
  w.for_each([&](const std::string& name, const ConvKernel& k) {
    record(name + ".weight",
           {static_cast<std::uint32_t>(k.volume()), static_cast<std::uint32_t>(k.in_channels),
            static_cast<std::uint32_t>(k.out_channels)},
           k.weights.data(), static_cast<std::size_t>(k.weights.size()));
    record(name + ".bias", {static_cast<std::uint32_t>(k.out_channels)}, k.bias.data(),
           static_cast<std::size_t>(k.bias.size()));
  });
}

inline ModelWeights read_weights(ByteReader& in) {
  if (in.bytes(4) != "CARW") throw Error("not a weight file (bad magic)");
  if (const auto v = in.u8(); v != kWeightFormatVersion)
    throw Error("unsupported weight file version " + std::to_string(v));
  CarnetConfig cfg;
  cfg.channels = static_cast<int>(in.u32());
  cfg.kernel_size = static_cast<int>(in.u32());
  cfg.mpso_count = static_cast<int>(in.u32());
  cfg.input_channels = static_cast<int>(in.u32());
  const auto tag = in.u8();
  if (tag > 2) throw Error("bad component tag " + std::to_string(tag));
  cfg.component = static_cast<Component>(tag);

  struct Record {
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
  };
  std::map<std::string, Record> records;
  const auto count = in.u32();
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = in.bytes(in.u16());
    Record rec;
    const auto rank = in.u8();
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      rec.dims.push_back(in.u32());
      n *= rec.dims.back();
    }
    if (n * 4 > in.remaining()) throw Error("parameter '" + name + "' is truncated");
    rec.values.resize(n);
    for (auto& v : rec.values) v = static_cast<double>(in.f32());
    if (!records.emplace(name, std::move(rec)).second) throw Error("duplicate parameter '" + name + "'");
  }

  cfg.lfe_levels = 0;
  while (records.count("lfe.down" + std::to_string(cfg.lfe_levels) + ".conv.weight")) ++cfg.lfe_levels;
  ModelWeights w = ModelWeights::zeros(cfg);

  std::size_t used = 0;
  w.for_each([&](const std::string& name, ConvKernel& k) {
    auto fill = [&](const std::string& key, const std::vector<std::uint32_t>& dims, double* dst) {
      auto it = records.find(key);
      if (it == records.end()) throw Error("weight file lacks parameter '" + key + "'");
      if (it->second.dims != dims) throw Error("parameter '" + key + "' has unexpected dimensions");
      std::copy(it->second.values.begin(), it->second.values.end(), dst);
      ++used;
    };
    fill(name + ".weight",
         {static_cast<std::uint32_t>(k.volume()), static_cast<std::uint32_t>(k.in_channels),
          static_cast<std::uint32_t>(k.out_channels)},
         k.weights.data());
    fill(name + ".bias", {static_cast<std::uint32_t>(k.out_channels)}, k.bias.data());
  });
  if (used != records.size()) throw Error("weight file holds parameters this architecture does not use");
  if (!w.all_finite()) throw Error("weight file holds non-finite values");
  return w;
}

inline void write_optimizer(ByteWriter& out, const AdamState& s) {
  out.bytes("CARO");
  out.i64(s.step);
  out.f64(s.learning_rate);
  out.f64(s.beta1);
  out.f64(s.beta2);
  out.f64(s.epsilon);
  out.u32(static_cast<std::uint32_t>(s.first_moment.size()));
  for (std::size_t p = 0; p < s.first_moment.size(); ++p) {
    out.u32(static_cast<std::uint32_t>(s.first_moment[p].size()));
    for (double v : s.first_moment[p]) out.f64(v);
    for (double v : s.second_moment[p]) out.f64(v);
  }
}

inline AdamState read_optimizer(ByteReader& in) {
  if (in.bytes(4) != "CARO") throw Error("checkpoint lacks optimizer block");
  AdamState s;
  s.step = in.i64();
  s.learning_rate = in.f64();
  s.beta1 = in.f64();
  s.beta2 = in.f64();
  s.epsilon = in.f64();
  const auto n = in.u32();
  for (std::uint32_t p = 0; p < n; ++p) {
    const auto len = in.u32();
    if (static_cast<std::size_t>(len) * 16 > in.remaining()) throw Error("optimizer block is truncated");
    auto& m = s.first_moment.emplace_back(len);
    auto& v = s.second_moment.emplace_back(len);
    for (auto& x : m) x = in.f64();
    for (auto& x : v) x = in.f64();
  }
  return s;
}

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write to '" + path + "' failed");
}

inline void save_weights(const std::string& path, const ModelWeights& w) {
  ByteWriter out;
  write_weights(out, w);
  write_file(path, out.data());
}

inline ModelWeights load_weights(const std::string& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes);
  return read_weights(in);
}

inline void save_checkpoint(const std::string& path, const ModelWeights& w, const AdamState& s) {
  ByteWriter out;
  write_weights(out, w);
  write_optimizer(out, s);
  write_file(path, out.data());
}

inline std::pair<ModelWeights, AdamState> load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes);
  ModelWeights w = read_weights(in);
  return {std::move(w), read_optimizer(in)};
}

}  // namespace carnet
