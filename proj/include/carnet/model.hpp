#pragma once

#include "carnet/conv.hpp"
#include "carnet/layers.hpp"
#include "carnet/tape.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace carnet {

enum class Component : std::uint8_t { Y = 0, U = 1, V = 2 };

inline const char* component_name(Component c) {
  switch (c) {
    case Component::Y: return "Y";
    case Component::U: return "U";
    case Component::V: return "V";
  }
  return "?";
}

inline Component parse_component(const std::string& s) {
  if (s == "Y" || s == "y") return Component::Y;
  if (s == "U" || s == "u") return Component::U;
  if (s == "V" || s == "v") return Component::V;
  throw Error("unknown component '" + s + "' (expected Y, U or V)");
}

struct CarnetConfig {
  int channels = 64;
  int kernel_size = 3;
  int mpso_count = 3;
  Component component = Component::Y;
  int input_channels = 1;
  int lfe_levels = 3;
  double mpso_rms = 0.3;  // per-MPSO RMS after the head, normalized attribute scale

  static CarnetConfig full(Component c) {
    CarnetConfig cfg;
    cfg.component = c;
    cfg.input_channels = static_cast<int>(c) + 1;
    return cfg;
  }

  static CarnetConfig desk(Component c) {
    CarnetConfig cfg = full(c);
    cfg.channels = 16;
    cfg.lfe_levels = 2;
    return cfg;
  }

  void validate() const {
    if (mpso_count < 1) throw Error("MPSO count must be at least 1");
    if (input_channels != static_cast<int>(component) + 1)
      throw Error(std::string("component ") + component_name(component) + " takes " +
                  std::to_string(static_cast<int>(component) + 1) + " input channels, config says " +
                  std::to_string(input_channels));
    if (kernel_size < 1 || kernel_size % 2 == 0) throw Error("kernel size must be odd");
    if (channels < 4 || channels % 4 != 0) throw Error("channel width must be a positive multiple of 4");
    if (lfe_levels < 1) throw Error("the low-frequency autoencoder needs at least one level");
    if (!(mpso_rms > 0.0)) throw Error("MPSO scale must be positive");
  }

  friend bool operator==(const CarnetConfig&, const CarnetConfig&) = default;
};

/// conv -> ReLU -> IRB at constant width.
struct EmbeddingUnit {
  ConvKernel conv;
  IRBParams irb;
};

/// conv -> stride-2 conv -> ReLU -> IRB.
struct Downsampler {
  ConvKernel conv;
  ConvKernel down;
  IRBParams irb;
};

/// stride-2 transposed conv -> conv -> ReLU -> IRB.
struct Upsampler {
  ConvKernel up;
  ConvKernel conv;
  IRBParams irb;
};

/// Every learned parameter of one per-component network.
struct ModelWeights {
  CarnetConfig config;
  ConvKernel embed;
  std::array<EmbeddingUnit, 3> dse;
  std::vector<Downsampler> lfe_down;
  std::vector<Upsampler> lfe_up;
  EmbeddingUnit fde;
  EmbeddingUnit fuse;
  ConvKernel head;

  /// All-zero parameters with the shapes implied by `cfg`.
  static ModelWeights zeros(const CarnetConfig& cfg) {
    cfg.validate();
    const Eigen::Index c = cfg.channels;
    const int k = cfg.kernel_size;
    ModelWeights w;
    w.config = cfg;
    w.embed = ConvKernel(k, cfg.input_channels, c);
    for (auto& u : w.dse) u = {ConvKernel(k, c, c), IRBParams(c)};
    for (int l = 0; l < cfg.lfe_levels; ++l) {
      w.lfe_down.push_back({ConvKernel(k, c, c), ConvKernel(3, c, c, 2), IRBParams(c)});
      w.lfe_up.push_back({ConvKernel(3, c, c, 2, true), ConvKernel(k, c, c), IRBParams(c)});
    }
    w.fde = {ConvKernel(k, 2 * c, c), IRBParams(c)};
    w.fuse = {ConvKernel(k, 2 * c, c), IRBParams(c)};
    w.head = ConvKernel(k, c, cfg.mpso_count);
    return w;
  }

  /// Seeded random init. IRB branches start small so the residual stacks
  /// begin close to identity.
  static ModelWeights random(const CarnetConfig& cfg, std::uint64_t seed) {
    ModelWeights w = zeros(cfg);
    std::mt19937_64 rng(seed);
    w.for_each([&](const std::string& name, ConvKernel& k) {
      const bool branch = name.find(".irb.") != std::string::npos;
      init_kernel(k, rng, branch ? 0.25 : 1.0);
    });
    return w;
  }

  /// Visits (name, kernel) for every kernel in a fixed, documented order.
  template <class F>
  void for_each(F&& f) {
    f(std::string("embed"), embed);
    auto unit = [&](const std::string& prefix, EmbeddingUnit& u) {
      f(prefix + ".conv", u.conv);
      u.irb.for_each([&](const char* s, ConvKernel& k) { f(prefix + ".irb." + s, k); });
    };
    for (std::size_t i = 0; i < dse.size(); ++i) unit("dse" + std::to_string(i), dse[i]);
    for (std::size_t l = 0; l < lfe_down.size(); ++l) {
      const std::string p = "lfe.down" + std::to_string(l);
      f(p + ".conv", lfe_down[l].conv);
      f(p + ".down", lfe_down[l].down);
      lfe_down[l].irb.for_each([&](const char* s, ConvKernel& k) { f(p + ".irb." + s, k); });
    }
    for (std::size_t l = 0; l < lfe_up.size(); ++l) {
      const std::string p = "lfe.up" + std::to_string(l);
      f(p + ".up", lfe_up[l].up);
      f(p + ".conv", lfe_up[l].conv);
      lfe_up[l].irb.for_each([&](const char* s, ConvKernel& k) { f(p + ".irb." + s, k); });
    }
    unit("fde", fde);
    unit("fuse", fuse);
    f(std::string("head"), head);
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelWeights*>(this)->for_each(
        [&](const std::string& n, ConvKernel& k) { f(n, static_cast<const ConvKernel&>(k)); });
  }

  std::vector<std::span<double>> parameter_spans() {
    std::vector<std::span<double>> out;
    for_each([&](const std::string&, ConvKernel& k) {
      out.emplace_back(k.weights.data(), static_cast<std::size_t>(k.weights.size()));
      out.emplace_back(k.bias.data(), static_cast<std::size_t>(k.bias.size()));
    });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const ConvKernel& k) {
      n += static_cast<std::size_t>(k.weights.size() + k.bias.size());
    });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const ConvKernel& k) { ok = ok && k.weights.allFinite() && k.bias.allFinite(); });
    return ok;
  }
};

/// Variables recorded by one network pass.
struct CarnetGraph {
  Var input;
  Var embedded;
  Var dse;
  Var lfe;
  Var hfe;
  Var fde;
  Var fused;
  Var head;
  Var mpsos;
};

inline Var embed_input(Tape& tape, MapCache& maps, Var attrs, const ModelWeights& w) {
  if (tape.value(attrs).channels() != w.config.input_channels)
    throw Error(std::string("component ") + component_name(w.config.component) + " expects " +
                std::to_string(w.config.input_channels) + " attribute channels, got " +
                std::to_string(tape.value(attrs).channels()));
  return conv_same(tape, maps, attrs, w.embed);
}

inline Var embedding_unit(Tape& tape, MapCache& maps, Var x, const EmbeddingUnit& u) {
  return irb(tape, maps, tape.relu(conv_same(tape, maps, x, u.conv)), u.irb);
}

/// F_in + U3(U2(U1(F_in))).
inline Var dse_branch(Tape& tape, MapCache& maps, Var f_in, const ModelWeights& w) {
  Var x = f_in;
  for (const auto& u : w.dse) x = embedding_unit(tape, maps, x, u);
  return tape.add(f_in, x);
}

/// Encoder/decoder over strides 2, 4, 8, ...; the decoder emits onto the
/// coordinate sets cached by the encoder, so the output geometry equals the
/// input geometry.
inline Var lfe_branch(Tape& tape, MapCache& maps, Var f_in, const ModelWeights& w) {
  std::vector<GeometryPtr> levels{tape.value(f_in).geometry};
  if (levels.front()->empty()) throw Error("low-frequency branch needs a non-empty geometry");
  Var x = f_in;
  for (const auto& d : w.lfe_down) {
    x = conv_same(tape, maps, x, d.conv);
    const GeometryPtr fine = levels.back();
    const GeometryPtr coarse = maps.downsample(fine, 2);
    if (coarse->empty()) throw Error("geometry too small for the configured autoencoder depth");
    x = tape.conv(x, d.down, maps.kernel_map(fine, coarse, d.down.kernel_size, 2));
    x = irb(tape, maps, tape.relu(x), d.irb);
    levels.push_back(coarse);
  }
  for (std::size_t l = w.lfe_up.size(); l-- > 0;) {
    const auto& u = w.lfe_up[l];
    const GeometryPtr fine = levels[l];
    x = tape.conv(x, u.up, maps.kernel_map(fine, levels[l + 1], u.up.kernel_size, 2));
    x = conv_same(tape, maps, x, u.conv);
    x = irb(tape, maps, tape.relu(x), u.irb);
  }
  return x;
}

/// F_in - upsample(avg_pool(F_in)) with k = 3, S = 2. Parameter-free.
inline Var hfe_branch(Tape& tape, MapCache& maps, Var f_in) {
  auto pm = maps.pooling_map(tape.value(f_in).geometry, 3, 2);
  return tape.sub(f_in, tape.upsample(tape.pool(f_in, pm), pm));
}

/// Records the full network on `tape`. The result's `mpsos` value is the
/// N x H offset matrix R: the linear head output with each column rescaled
/// to RMS `mpso_rms`. The least-squares combination is blind to column
/// scale, so fixing it keeps the solved coefficients on the 1/128 grid.
inline CarnetGraph record_carnet(Tape& tape, MapCache& maps, const SparseTensor& attrs, const ModelWeights& w) {
  CarnetGraph g;
  g.input = tape.leaf(attrs);
  // the frame mean carries no offset information and would otherwise
  // dominate every MPSO column
  g.embedded = embed_input(tape, maps, tape.center_channels(g.input), w);
  g.dse = dse_branch(tape, maps, g.embedded, w);
  g.lfe = lfe_branch(tape, maps, g.embedded, w);
  g.hfe = hfe_branch(tape, maps, g.embedded);
  g.fde = embedding_unit(tape, maps, tape.concat({g.lfe, g.hfe}), w.fde);
  g.fused = tape.add(g.dse, embedding_unit(tape, maps, tape.concat({g.fde, g.dse}), w.fuse));
  g.head = conv_same(tape, maps, g.fused, w.head);
  g.mpsos = tape.normalize_channels(g.head, w.config.mpso_rms);
  return g;
}

inline Matrix forward_mpsos(const SparseTensor& attrs, const ModelWeights& w) {
  Tape tape;
  MapCache maps;
  return tape.value(record_carnet(tape, maps, attrs, w).mpsos).features;
}

/// Plain-value wrappers over the recorded branches.
inline SparseTensor embed_input(const SparseTensor& attrs, const ModelWeights& w) {
  Tape tape;
  MapCache maps;
  return tape.value(embed_input(tape, maps, tape.leaf(attrs), w));
}

inline SparseTensor dse_branch(const SparseTensor& f_in, const ModelWeights& w) {
  Tape tape;
  MapCache maps;
  return tape.value(dse_branch(tape, maps, tape.leaf(f_in), w));
}

inline SparseTensor lfe_branch(const SparseTensor& f_in, const ModelWeights& w) {
  Tape tape;
  MapCache maps;
  return tape.value(lfe_branch(tape, maps, tape.leaf(f_in), w));
}

inline SparseTensor hfe_branch(const SparseTensor& f_in) {
  Tape tape;
  MapCache maps;
  return tape.value(hfe_branch(tape, maps, tape.leaf(f_in)));
}

/// Gradients of every kernel in `w`, collected from a tape after backward().
inline ModelWeights collect_gradients(const Tape& tape, const ModelWeights& w) {
  ModelWeights g = w;
  std::vector<const ConvKernel*> originals;
  w.for_each([&](const std::string&, const ConvKernel& k) { originals.push_back(&k); });
  std::size_t i = 0;
  g.for_each([&](const std::string&, ConvKernel& k) {
    const ConvKernel* kg = tape.kernel_grad(*originals[i++]);
    if (kg) {
      k.weights = kg->weights;
      k.bias = kg->bias;
    } else {
      k.weights.setZero();
      k.bias.setZero();
    }
  });
  return g;
}

}  // namespace carnet
