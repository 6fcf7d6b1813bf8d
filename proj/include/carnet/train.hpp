#pragma once

#include "carnet/adam.hpp"
#include "carnet/combiner.hpp"
#include "carnet/frame.hpp"
#include "carnet/model.hpp"
#include "carnet/raht.hpp"
#include "carnet/weights_io.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace carnet {

enum class SurfaceType { Sphere, BoxShell, Union };

struct SyntheticCloudSpec {
  int grid_bits = 5;
  SurfaceType surface = SurfaceType::Sphere;
  double radius = 10.0;                          // sphere
  std::array<double, 3> half_extent{8, 6, 10};   // box shell
  std::array<double, 3> center{16, 16, 16};
  int polynomial_degree = 2;
  bool edge = true;
  double noise = 2.0;  // uniform noise amplitude in code values
};

/// Varied shell geometry for a 2^grid_bits grid, drawn from `seed`.
inline SyntheticCloudSpec random_cloud_spec(std::uint64_t seed, int grid_bits = 5) {
  std::mt19937_64 rng(seed ^ 0x5DEECE66Dull);
  const double n = std::ldexp(1.0, grid_bits);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticCloudSpec s;
  s.grid_bits = grid_bits;
  s.surface = static_cast<SurfaceType>(rng() % 3);
  s.radius = n * (0.22 + 0.12 * u(rng));
  for (auto& h : s.half_extent) h = n * (0.15 + 0.17 * u(rng));
  for (auto& c : s.center) c = n / 2 + (u(rng) - 0.5);
  s.edge = u(rng) < 0.7;
  s.noise = 1.0 + 2.0 * u(rng);
  return s;
}

namespace detail {

inline bool on_sphere(const SyntheticCloudSpec& s, double x, double y, double z) {
  const double d = std::sqrt((x - s.center[0]) * (x - s.center[0]) + (y - s.center[1]) * (y - s.center[1]) +
                             (z - s.center[2]) * (z - s.center[2]));
  return std::abs(d - s.radius) <= 0.5;
}

/// Voxels on the boundary of an axis-aligned box (Chebyshev shell).
inline bool on_box(const SyntheticCloudSpec& s, double x, double y, double z) {
  const std::array<double, 3> p{x, y, z};
  double m = 0.0;
  for (int a = 0; a < 3; ++a) m = std::max(m, std::abs(p[a] - s.center[a]) / s.half_extent[a]);
  double thickness = 1e9;
  for (int a = 0; a < 3; ++a) thickness = std::min(thickness, 0.5 / s.half_extent[a]);
  return std::abs(m - 1.0) <= thickness;
}

}  // namespace detail

/// Colored voxel shell. Colors are a smooth polynomial field per RGB
/// channel, optionally split by a planar edge, plus uniform noise, rounded
/// to 8-bit code values.
inline PointCloudFrame generate_cloud(const SyntheticCloudSpec& spec, std::uint64_t seed) {
  if (spec.grid_bits < 2 || spec.grid_bits > 10) throw Error("synthetic grid bits must lie in [2, 10]");
  const int n = 1 << spec.grid_bits;
  std::vector<VoxelCoord> coords;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        const double fx = x, fy = y, fz = z;
        bool hit = false;
        if (spec.surface == SurfaceType::Sphere || spec.surface == SurfaceType::Union)
          hit = hit || detail::on_sphere(spec, fx, fy, fz);
        if (spec.surface == SurfaceType::BoxShell || spec.surface == SurfaceType::Union)
          hit = hit || detail::on_box(spec, fx, fy, fz);
        if (hit) coords.push_back({x, y, z});
      }
  if (coords.empty()) throw Error("synthetic cloud spec produces an empty shell");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Monomials up to the requested degree in normalized coordinates.
  std::vector<std::array<int, 3>> powers;
  for (int a = 0; a <= spec.polynomial_degree; ++a)
    for (int b = 0; a + b <= spec.polynomial_degree; ++b)
      for (int c = 0; a + b + c <= spec.polynomial_degree; ++c) powers.push_back({a, b, c});
  std::array<std::vector<double>, 3> poly;
  std::array<double, 3> base{}, jump{};
  for (int ch = 0; ch < 3; ++ch) {
    base[ch] = 128.0 + 60.0 * u(rng);
    for (std::size_t m = 0; m < powers.size(); ++m) poly[ch].push_back(m == 0 ? 0.0 : 70.0 * u(rng));
    jump[ch] = 70.0 * u(rng);
  }
  std::array<double, 3> normal{u(rng), u(rng), u(rng)};
  const double norm = std::sqrt(normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]) + 1e-12;
  for (auto& v : normal) v /= norm;
  const double offset = 0.3 * u(rng);

  Matrix attrs(static_cast<Eigen::Index>(coords.size()), 3);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const std::array<double, 3> p{(coords[i].x + 0.5) / n * 2 - 1, (coords[i].y + 0.5) / n * 2 - 1,
                                  (coords[i].z + 0.5) / n * 2 - 1};
    const bool side = spec.edge && (normal[0] * p[0] + normal[1] * p[1] + normal[2] * p[2] > offset);
    for (int ch = 0; ch < 3; ++ch) {
      double v = base[ch];
      for (std::size_t m = 1; m < powers.size(); ++m)
        v += poly[ch][m] * std::pow(p[0], powers[m][0]) * std::pow(p[1], powers[m][1]) * std::pow(p[2], powers[m][2]);
      if (side) v += jump[ch];
      v += spec.noise * u(rng);
      attrs(static_cast<Eigen::Index>(i), ch) = std::round(std::clamp(v, 0.0, 255.0));
    }
  }
  return PointCloudFrame::make(std::move(coords), std::move(attrs), 8, ColorSpace::RGB, "synthetic");
}

/// An (original, compressed) YUV pair at one quantization step.
struct TrainingSample {
  PointCloudFrame original;
  PointCloudFrame compressed;
  GeometryPtr geometry;
  double bpp = 0.0;
};

inline TrainingSample make_sample(const PointCloudFrame& frame, double q) {
  PointCloudFrame yuv = frame.color_space == ColorSpace::YUV ? frame : rgb_to_yuv(frame);
  yuv = round_attributes(yuv);
  DistortResult d = distort(yuv, q);
  TrainingSample s{std::move(yuv), std::move(d.compressed), nullptr, d.bpp};
  s.geometry = s.original.geometry();
  return s;
}

enum class Profile { Desk, Full };

struct TrainConfig {
  std::uint64_t seed = 1;
  int steps = 200;
  double q = 0.1;
  Component component = Component::Y;
  Profile profile = Profile::Desk;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;
  int epoch_size = 30;       // steps per learning-rate epoch
  LearningRateSchedule schedule{};
  bool clamp_coefficients = true;

  CarnetConfig model_config() const {
    return profile == Profile::Desk ? CarnetConfig::desk(component) : CarnetConfig::full(component);
  }

  void validate() const {
    if (steps < 1) throw Error("training needs at least one step");
    if (!(q > 0.0)) throw Error("training quantization step must be positive");
    if (epoch_size < 1) throw Error("epoch size must be positive");
  }
};

struct LossEvaluation {
  double loss = 0.0;
  Vector coefficients;
  Matrix mpsos;
};

/// ||D - R A||^2 / N for one sample. Without `fixed`, A is the least-squares
/// solution, clamped to the signalable range when requested.
inline LossEvaluation evaluate_loss(const ModelWeights& w, const TrainingSample& s,
                                    const std::optional<Vector>& fixed = std::nullopt, bool clamp = false) {
  const auto comp = w.config.component;
  const int c = static_cast<int>(comp);
  const double peak = s.compressed.peak();
  const Matrix r = forward_mpsos(assemble_component_input(s.compressed, comp, s.geometry), w);
  const Vector d = compression_distortion(Vector(s.original.attributes.col(c) / peak),
                                          Vector(s.compressed.attributes.col(c) / peak));
  Vector a = fixed ? *fixed : lse_solve(r, d);
  if (!fixed && clamp) a = a.cwiseMax(double(kCoeffMin) / kCoeffScale).cwiseMin(double(kCoeffMax) / kCoeffScale);
  const double loss = (d - r * a).squaredNorm() / static_cast<double>(d.size());
  return {loss, std::move(a), r};
}

struct StepResult {
  double loss = 0.0;
  bool applied = true;
  std::string reason;
};

/// Gradient of the loss w.r.t. every kernel, with A held constant.
inline std::pair<LossEvaluation, ModelWeights> loss_gradients(const ModelWeights& w, const TrainingSample& s,
                                                              bool clamp) {
  const auto comp = w.config.component;
  const int c = static_cast<int>(comp);
  const double peak = s.compressed.peak();
  Tape tape;
  MapCache maps;
  const CarnetGraph g = record_carnet(tape, maps, assemble_component_input(s.compressed, comp, s.geometry), w);
  const Matrix& r = tape.value(g.mpsos).features;
  const Vector d = compression_distortion(Vector(s.original.attributes.col(c) / peak),
                                          Vector(s.compressed.attributes.col(c) / peak));
  Vector a = lse_solve(r, d);
  if (clamp) a = a.cwiseMax(double(kCoeffMin) / kCoeffScale).cwiseMin(double(kCoeffMax) / kCoeffScale);
  const Vector residual = d - r * a;
  const double n = static_cast<double>(d.size());
  LossEvaluation eval{residual.squaredNorm() / n, a, r};
  const Matrix seed = (-2.0 / n) * residual * a.transpose();
  tape.backward(g.mpsos, seed);
  return {std::move(eval), collect_gradients(tape, w)};
}

/// One optimization step on one frame: forward, per-frame least squares,
/// backward with A treated as a constant, Adam update.
inline StepResult train_step(ModelWeights& w, AdamState& opt, const TrainingSample& s, bool clamp = true) {
  auto [eval, grads] = loss_gradients(w, s, clamp);
  if (!std::isfinite(eval.loss)) return {eval.loss, false, "non-finite loss"};
  auto params = w.parameter_spans();
  auto grad_spans_mut = grads.parameter_spans();
  std::vector<std::span<const double>> grad_spans(grad_spans_mut.begin(), grad_spans_mut.end());
  const AdamResult r = adam_step(params, grad_spans, opt);
  return {eval.loss, r.applied, r.reason};
}

/// Convenience overload: distorts `frame` at step q first.
inline StepResult train_step(ModelWeights& w, AdamState& opt, const PointCloudFrame& frame, double q,
                             bool clamp = true) {
  return train_step(w, opt, make_sample(frame, q), clamp);
}

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

/// Sequential training over `samples`, cycling in order. Writes one
/// "step loss lr" line per step to `log` when given.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::optional<ModelWeights> init = std::nullopt)
      : cfg_(std::move(cfg)),
        weights_(init ? std::move(*init) : ModelWeights::random(cfg_.model_config(), cfg_.seed)) {
    cfg_.validate();
    if (weights_.config.component != cfg_.component) throw Error("initial weights are for a different component");
    opt_.learning_rate = cfg_.schedule.at_epoch(0);
  }

  void resume(AdamState s) { opt_ = std::move(s); }

  std::vector<TrainLogEntry> run(const std::vector<TrainingSample>& samples, std::ostream* log = nullptr) {
    if (samples.empty()) throw Error("no training samples");
    std::vector<TrainLogEntry> history;
    const int start = static_cast<int>(opt_.step);
    for (int step = start; step < start + cfg_.steps; ++step) {
      opt_.learning_rate = cfg_.schedule.at_epoch(step / cfg_.epoch_size);
      const auto& s = samples[static_cast<std::size_t>(step) % samples.size()];
      const StepResult r = train_step(weights_, opt_, s, cfg_.clamp_coefficients);
      history.push_back({step + 1, r.loss, opt_.learning_rate});
      if (log) {
        *log << (step + 1) << ' ' << r.loss << ' ' << opt_.learning_rate;
        if (!r.applied) *log << " skipped: " << r.reason;
        *log << '\n';
      }
      if (cfg_.checkpoint_every > 0 && !cfg_.checkpoint_path.empty() && (step + 1) % cfg_.checkpoint_every == 0)
        save_checkpoint(cfg_.checkpoint_path, weights_, opt_);
    }
    return history;
  }

  const ModelWeights& weights() const { return weights_; }
  const AdamState& optimizer() const { return opt_; }

 private:
  TrainConfig cfg_;
  ModelWeights weights_;
  AdamState opt_;
};

}  // namespace carnet
