#pragma once

#include "carnet/sparse_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace carnet {

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

struct AdamResult {
  bool applied = true;
  std::string reason;
};

/// One bias-corrected Adam update. Moments are created lazily on the first
/// call and must keep matching the parameter shapes afterwards. A non-finite
/// gradient anywhere skips the whole step.
inline AdamResult adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                            AdamState& s) {
  if (params.size() != grads.size()) throw Error("adam_step: parameter and gradient counts differ");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != grads[p].size()) throw Error("adam_step: shape mismatch in parameter " + std::to_string(p));
    for (double g : grads[p])
      if (!std::isfinite(g)) return {false, "non-finite gradient in parameter " + std::to_string(p)};
  }
  if (s.first_moment.empty()) {
    for (auto p : params) {
      s.first_moment.emplace_back(p.size(), 0.0);
      s.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (s.first_moment.size() != params.size()) throw Error("adam_step: optimizer state tracks a different parameter set");

  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = s.first_moment[p];
    auto& v = s.second_moment[p];
    if (m.size() != params[p].size()) throw Error("adam_step: moment shape mismatch in parameter " + std::to_string(p));
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = grads[p][i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
      params[p][i] -= s.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.epsilon);
    }
  }
  return {};
}

/// Geometric decay from `initial` to `final` over `decay_epochs`, then flat.
struct LearningRateSchedule {
  double initial = 1e-4;
  double final = 1e-5;
  int decay_epochs = 10;

  double at_epoch(int epoch) const {
    const double t = std::clamp(static_cast<double>(epoch) / decay_epochs, 0.0, 1.0);
    return initial * std::pow(final / initial, t);
  }
};

}  // namespace carnet
