#pragma once

#include "carnet/conv.hpp"
#include "carnet/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace carnet {

/// Inception Residual Block over width C (C divisible by 4).
///
///   branch1: 3^3 C->C/2
///   branch2: 3^3 C->C/4, ReLU, 3^3 C/4->C/4
///   branch3: 1^3 C->C/4, ReLU, 3^3 C/4->C/4, ReLU, 1^3 C/4->C/4
///   out = x + concat(branch1, branch2, branch3)
struct IRBParams {
  ConvKernel b1;
  ConvKernel b2a, b2b;
  ConvKernel b3a, b3b, b3c;

  IRBParams() = default;
  explicit IRBParams(Eigen::Index c) {
    if (c < 4 || c % 4 != 0) throw Error("IRB width must be a positive multiple of 4, got " + std::to_string(c));
    const Eigen::Index half = c / 2, quarter = c / 4;
    b1 = ConvKernel(3, c, half);
    b2a = ConvKernel(3, c, quarter);
    b2b = ConvKernel(3, quarter, quarter);
    b3a = ConvKernel(1, c, quarter);
    b3b = ConvKernel(3, quarter, quarter);
    b3c = ConvKernel(1, quarter, quarter);
  }

  Eigen::Index width() const { return b1.in_channels; }

  /// Visits (suffix, kernel) pairs in a fixed order.
  template <class F>
  void for_each(F&& f) {
    f("b1", b1);
    f("b2a", b2a);
    f("b2b", b2b);
    f("b3a", b3a);
    f("b3b", b3b);
    f("b3c", b3c);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<IRBParams*>(this)->for_each([&](const char* n, ConvKernel& k) { f(n, static_cast<const ConvKernel&>(k)); });
  }
};

/// Stride-1 convolution on the tape, pulling the kernel map from the cache.
inline Var conv_same(Tape& tape, MapCache& maps, Var x, const ConvKernel& k) {
  const auto& g = tape.value(x).geometry;
  return tape.conv(x, k, maps.kernel_map(g, g, k.kernel_size, 1));
}

inline Var irb(Tape& tape, MapCache& maps, Var x, const IRBParams& p) {
  if (tape.value(x).channels() != p.width())
    throw Error("IRB expects width " + std::to_string(p.width()) + ", got " + std::to_string(tape.value(x).channels()));
  Var b1 = conv_same(tape, maps, x, p.b1);
  Var b2 = conv_same(tape, maps, tape.relu(conv_same(tape, maps, x, p.b2a)), p.b2b);
  Var b3 = tape.relu(conv_same(tape, maps, x, p.b3a));
  b3 = tape.relu(conv_same(tape, maps, b3, p.b3b));
  b3 = conv_same(tape, maps, b3, p.b3c);
  return tape.add(x, tape.concat({b1, b2, b3}));
}

inline SparseTensor irb_forward(const SparseTensor& t, const IRBParams& p) {
  Tape tape;
  MapCache maps;
  return tape.value(irb(tape, maps, tape.leaf(t), p));
}

}  // namespace carnet
