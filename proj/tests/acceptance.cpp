// Acceptance run: one PASS/FAIL line per criterion.
// usage: acceptance [work_dir]

#include "carnet/combiner.hpp"
#include "carnet/filter.hpp"
#include "carnet/layers.hpp"
#include "carnet/metrics.hpp"
#include "carnet/model.hpp"
#include "carnet/ply.hpp"
#include "carnet/raht.hpp"
#include "carnet/tape.hpp"
#include "carnet/train.hpp"
#include "carnet/weights_io.hpp"
#include "test_support.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace carnet;
using namespace carnet::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_work;
ComponentModels g_trained;  // filled by the end-to-end run, reused by the CLI check

// ---- 1: sparse convolution against the dense embedding

Verdict sparse_conv_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::uniform_int_distribution<int> extent(2, 8), origin(-4, 4), chans(1, 4);
  std::uniform_real_distribution<double> fill(0.05, 0.6);
  double worst = 0.0;
  int outputs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = random_geometry(rng, extent(rng), fill(rng), 1, origin(rng));
    const auto cin = chans(rng), cout = chans(rng);
    const SparseTensor x(g, random_matrix(rng, static_cast<Eigen::Index>(g->size()), cin));
    for (int k : {1, 3})
      for (int s : {1, 2}) {
        ConvKernel kern(k, cin, cout, s);
        randomize(kern, rng);
        const auto out = s == 1 ? g : g->downsample(s);
        const auto y = sparse_conv(x, kern, build_kernel_map(g, out, k, s));
        const Matrix ref = dense_conv(g->coords(), x.features, kern, out->coords());
        for (Eigen::Index r = 0; r < ref.rows(); ++r)
          worst = std::max(worst, (y.features.row(r) - ref.row(r)).norm() / std::max(ref.row(r).norm(), 1e-300));
        outputs += static_cast<int>(ref.rows());
      }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && t < 10.0,
          fmt("100 geometries, %d outputs, worst rel err %.2e (<= 1e-12), %.2f s (< 10 s)", outputs, worst, t)};
}

// ---- 2: gradients against central differences

template <class Build>
double tape_loss(const SparseTensor& x, const Matrix& w, Build&& build) {
  Tape t;
  MapCache maps;
  Var out = build(t, maps, t.leaf(x));
  return (t.value(out).features.array() * w.array()).sum();
}

// Checks d/dx and d/dkernels of sum(w .* build(x)) over every entry.
template <class Build>
double layer_check(SparseTensor& x, const Matrix& w, std::vector<ConvKernel*> kernels, Build build) {
  auto loss = [&] { return tape_loss(x, w, build); };
  Tape t;
  MapCache maps;
  Var in = t.leaf(x);
  t.backward(build(t, maps, in), w);
  double worst = relative_error(t.grad(in), fd_gradient(loss, x.features));
  for (ConvKernel* k : kernels) {
    const ConvKernel* g = t.kernel_grad(*k);
    if (!g) return 1.0;
    worst = std::max(worst, relative_error(g->weights, fd_gradient(loss, k->weights)));
    worst = std::max(worst, relative_error(g->bias, fd_gradient(loss, k->bias)));
  }
  return worst;
}

// Relative error of sampled analytic vs finite-difference gradients over all kernels.
double sampled_check(ModelWeights& w, const ModelWeights& grads, const std::function<double()>& loss, Rng& rng,
                     int per_kernel) {
  std::vector<ConvKernel*> ks;
  std::vector<const ConvKernel*> gk;
  w.for_each([&](const std::string&, ConvKernel& k) { ks.push_back(&k); });
  grads.for_each([&](const std::string&, const ConvKernel& k) { gk.push_back(&k); });
  if (ks.size() != gk.size()) return 1.0;
  std::vector<double> fd, an;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, ks[i]->weights.size() - 1);
    for (int t = 0; t < per_kernel; ++t) {
      const Eigen::Index e = pick(rng);
      fd.push_back(central_difference(loss, ks[i]->weights.data() + e));
      an.push_back(gk[i]->weights.data()[e]);
    }
    fd.push_back(central_difference(loss, ks[i]->bias.data()));
    an.push_back(gk[i]->bias(0));
  }
  const Eigen::Map<const Vector> f(fd.data(), static_cast<Eigen::Index>(fd.size()));
  const Eigen::Map<const Vector> g(an.data(), static_cast<Eigen::Index>(an.size()));
  return (f - g).norm() / f.norm();
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double layers = 0.0;
  std::size_t max_voxels = 0;
  auto geometry = [&](int extent, double fill, std::size_t min) {
    auto g = random_geometry(rng, extent, fill, min);
    while (g->size() > 200) g = random_geometry(rng, extent, fill, min);
    max_voxels = std::max(max_voxels, g->size());
    return g;
  };

  {  // submanifold conv
    const auto g = geometry(6, 0.3, 20);
    ConvKernel k(3, 8, 8, 1);
    randomize(k, rng, 0.5);
    SparseTensor x(g, random_matrix(rng, static_cast<Eigen::Index>(g->size()), 8));
    const Matrix w = random_matrix(rng, x.size(), 8);
    layers = std::max(layers, layer_check(x, w, {&k}, [&](Tape& t, MapCache& m, Var v) {
                        return t.conv(v, k, m.kernel_map(g, g, 3, 1));
                      }));
  }
  {  // strided conv, ReLU, transposed conv
    const auto g = geometry(6, 0.3, 20);
    ConvKernel down(3, 4, 8, 2), up(3, 8, 4, 2, true);
    randomize(down, rng, 0.5);
    randomize(up, rng, 0.5);
    SparseTensor x(g, random_matrix(rng, static_cast<Eigen::Index>(g->size()), 4));
    const Matrix w = random_matrix(rng, x.size(), 4);
    layers = std::max(layers, layer_check(x, w, {&down, &up}, [&](Tape& t, MapCache& m, Var v) {
                        const auto coarse = m.downsample(g, 2);
                        const auto map = m.kernel_map(g, coarse, 3, 2);
                        return t.conv(t.relu(t.conv(v, down, map)), up, map);
                      }));
  }
  {  // inverted residual block
    const auto g = geometry(5, 0.35, 10);
    IRBParams p(8);
    std::vector<ConvKernel*> ks;
    p.for_each([&](const char*, ConvKernel& k) {
      randomize(k, rng, 0.5);
      ks.push_back(&k);
    });
    SparseTensor x(g, random_matrix(rng, static_cast<Eigen::Index>(g->size()), 8));
    const Matrix w = random_matrix(rng, x.size(), 8);
    layers = std::max(layers, layer_check(x, w, ks, [&](Tape& t, MapCache& m, Var v) { return irb(t, m, v, p); }));
  }
  {  // pooling, upsampling, centering, normalization, concat
    const auto g = geometry(6, 0.3, 20);
    SparseTensor x(g, random_matrix(rng, static_cast<Eigen::Index>(g->size()), 3));
    const Matrix w = random_matrix(rng, x.size(), 6);
    layers = std::max(layers, layer_check(x, w, {}, [&](Tape& t, MapCache& m, Var v) {
                        auto pm = m.pooling_map(g, 3, 2);
                        Var hf = t.sub(v, t.upsample(t.pool(v, pm), pm));
                        Var n = t.normalize_channels(t.add(t.center_channels(v), hf), 0.7);
                        return t.concat({n, t.relu(hf)});
                      }));
  }
  {  // whole network, all three component variants
    for (Component c : {Component::Y, Component::U, Component::V}) {
      const auto g = geometry(6, 0.3, 30);
      auto cfg = CarnetConfig::desk(c);
      cfg.channels = 8;
      auto w = ModelWeights::random(cfg, 300 + static_cast<int>(c));
      w.for_each([&](const std::string&, ConvKernel& k) { k.bias = random_matrix(rng, k.bias.size(), 1, 0.1); });
      const SparseTensor x(g, random_matrix(rng, static_cast<Eigen::Index>(g->size()), cfg.input_channels));
      const Matrix target = random_matrix(rng, static_cast<Eigen::Index>(g->size()), cfg.mpso_count, 0.3);
      Tape tape;
      MapCache maps;
      const auto graph = record_carnet(tape, maps, x, w);
      tape.backward(graph.mpsos, target);
      const ModelWeights grads = collect_gradients(tape, w);
      auto loss = [&] { return forward_mpsos(x, w).cwiseProduct(target).sum(); };
      layers = std::max(layers, sampled_check(w, grads, loss, rng, 3));
    }
  }

  // end-to-end training loss with the combination weights held fixed
  double e2e = 0.0;
  {
    const auto s = make_sample(generate_cloud(random_cloud_spec(14, 3), 14), 0.1);
    max_voxels = std::max(max_voxels, s.original.size());
    auto cfg = CarnetConfig::desk(Component::V);
    cfg.channels = 8;
    auto w = ModelWeights::random(cfg, 5);
    Rng brng(3);
    w.for_each([&](const std::string&, ConvKernel& k) { k.bias = random_matrix(brng, k.bias.size(), 1, 0.1); });
    const auto [eval, grads] = loss_gradients(w, s, false);
    const Vector a = eval.coefficients;
    e2e = sampled_check(w, grads, [&] { return evaluate_loss(w, s, a).loss; }, rng, 2);
  }
  const double t = seconds_since(t0);
  return {layers <= 1e-6 && e2e <= 1e-5 && max_voxels <= 200 && t < 60.0,
          fmt("layers/model worst %.2e (<= 1e-6), end-to-end loss %.2e (<= 1e-5), <= %zu voxels, C <= 8, %.1f s (< 60 s)",
              layers, e2e, max_voxels, t)};
}

// ---- 3: high-frequency extractor identity

Verdict hfe_identity() {
  Rng rng(303);
  std::uniform_int_distribution<int> extent(3, 8), chans(1, 8);
  bool constant_zero = true;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_geometry(rng, extent(rng), 0.3, 2, trial % 3 - 1);
    const auto n = static_cast<Eigen::Index>(g->size());
    const auto c = chans(rng);
    const Matrix level = random_matrix(rng, 1, c);
    const SparseTensor flat(g, level.replicate(n, 1));
    constant_zero = constant_zero && hfe_branch(flat).features.isZero(0.0);
    const SparseTensor x(g, random_matrix(rng, n, c));
    const auto up = sparse_upsample(sparse_avg_pool(x, 3, 2), g, 3, 2);
    worst = std::max(worst, (hfe_branch(x).features + up.features - x.features).cwiseAbs().maxCoeff());
  }
  return {constant_zero && worst <= 1e-12,
          fmt("constant fields give exact zero: %s; max |F_hfe + F_up - F_in| = %.2e (<= 1e-12) on 50 fields",
              constant_zero ? "yes" : "no", worst)};
}

// ---- 4: least squares optimality and fallback

Verdict lse_and_fallback() {
  Rng rng(404);
  std::normal_distribution<double> nrm(0.0, 1.0);
  std::uniform_int_distribution<int> rows(10, 400);
  std::uniform_real_distribution<double> logmag(-6.0, 0.0);
  int violations = 0, worse = 0, applied = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const Eigen::Index n = rows(rng);
    Matrix r(n, 3);
    for (auto& v : r.reshaped()) v = nrm(rng);
    Vector d(n);
    const Vector truth = Vector::Random(3);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = r.row(i).dot(truth) + 0.5 * nrm(rng);
    const Vector a = lse_solve(r, d);
    const double best = (d - r * a).norm();
    for (int p = 0; p < 100; ++p) {
      Vector delta(3);
      for (auto& v : delta) v = nrm(rng);
      delta *= std::pow(10.0, logmag(rng)) / delta.norm();
      if ((d - r * (a + delta)).norm() < best) ++violations;
    }

    // normalized-scale attributes with a partly predictable distortion
    Vector orig(n), comp(n);
    Matrix m(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) orig(i) = std::clamp(0.5 + 0.2 * nrm(rng), 0.0, 1.0);
    for (auto& v : m.reshaped()) v = 0.05 * nrm(rng);
    const double mix = inst % 2 ? 0.0 : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) comp(i) = orig(i) - mix * m(i, inst % 3) + 0.03 * nrm(rng);
    const auto res = encode_with_fallback(orig, comp, m);
    if (mean_squared_error(orig, res.filtered) > mean_squared_error(orig, comp)) ++worse;
    applied += !res.record.is_zero();
  }
  return {violations == 0 && worse == 0,
          fmt("100 instances x 100 perturbations: %d beat the solver; fallback raised MSE in %d of 100 (%d applied "
              "nonzero coefficients)",
              violations, worse, applied)};
}

// ---- 5: coefficient bitstream

Verdict coefficient_codec() {
  Rng rng(505);
  std::uniform_int_distribution<int> val(kCoeffMin, kCoeffMax), h(1, 8), count(1, 3);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<CoefficientRecord> recs;
    const int m = count(rng);
    for (int i = 0; i < m; ++i) {
      CoefficientRecord r{static_cast<Component>(i), {}};
      const int hh = h(rng);
      for (int j = 0; j < hh; ++j) r.values.push_back(val(rng));
      recs.push_back(std::move(r));
    }
    if (read_coeff_stream(write_coeff_stream(recs)) != recs) ++mismatches;
  }
  const CoefficientRecord three{Component::Y, {val(rng), val(rng), val(rng)}};
  const std::size_t bits = three.payload_bits();

  // 800,000 points: a 100 x 100 x 80 block
  std::vector<VoxelCoord> c;
  c.reserve(800000);
  for (int x = 0; x < 100; ++x)
    for (int y = 0; y < 100; ++y)
      for (int z = 0; z < 80; ++z) c.push_back({x, y, z});
  const auto frame = PointCloudFrame::make(std::move(c), Matrix::Constant(800000, 3, 128.0));
  const double bpp = coefficient_bpp({three}, frame.size());
  char two_sig[32];
  std::snprintf(two_sig, sizeof two_sig, "%.1e", bpp);
  const bool ok = mismatches == 0 && bits == 15 && bpp == 1.875e-5 && std::string(two_sig) == "1.9e-05";
  return {ok, fmt("1000 records round trip with %d mismatches; H=3 payload %zu bits; %zu points -> %.4g bpp (%s to 2 s.f.)",
                  mismatches, bits, frame.size(), bpp, two_sig)};
}

// ---- 6: RAHT

Verdict raht_properties() {
  Rng rng(606);
  double energy = 0.0, inverse = 0.0, ac = 0.0, ortho = 0.0;
  for (int t = 0; t < 30; ++t) {
    const auto g = random_geometry(rng, 8, 0.2, 2, t % 2 ? -3 : 0);
    const auto tree = build_raht_tree(g->coords());
    const auto n = static_cast<Eigen::Index>(g->size());
    const Vector x = random_matrix(rng, n, 1);
    const Vector cf = raht_forward(tree, x);
    energy = std::max(energy, std::abs(cf.squaredNorm() - x.squaredNorm()) / x.squaredNorm());
    inverse = std::max(inverse, (raht_inverse(tree, cf) - x).cwiseAbs().maxCoeff());
    const Vector k = raht_forward(tree, Vector::Constant(n, 0.37));
    ac = std::max(ac, k.tail(n - 1).cwiseAbs().maxCoeff());
    if (n <= 80) {
      Eigen::MatrixXd m(n, n);
      for (Eigen::Index j = 0; j < n; ++j) m.col(j) = raht_forward(tree, Vector::Unit(n, j));
      ortho = std::max(ortho, (m * m.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff());
    }
  }
  int breaks = 0;
  const std::vector<double> steps{0.0, 0.02, 0.05, 0.1, 0.2, 0.4};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto f = round_attributes(rgb_to_yuv(generate_cloud(random_cloud_spec(seed), seed)));
    double last = -1.0;
    for (double q : steps) {
      const double m = (distort(f, q).compressed.attributes - f.attributes).squaredNorm();
      if (m < last) ++breaks;
      last = m;
    }
  }
  const bool ok = energy <= 1e-12 && ortho <= 1e-12 && inverse <= 1e-12 && ac <= 1e-12 && breaks == 0;
  return {ok, fmt("energy drift %.1e, |TT'-I| %.1e, inverse error %.1e, constant-input AC %.1e (all <= 1e-12); "
                  "%d monotonicity breaks over 20 seeds x 6 steps",
                  energy, ortho, inverse, ac, breaks)};
}

// ---- 7: BD-rate

RDCurve curve(const std::string& label, std::vector<std::pair<double, double>> pts) {
  RDCurve c{label, {}};
  for (auto [r, p] : pts) c.points.push_back({r, p});
  return c;
}

// Four points make the cubic fit an interpolant; integrate it by Simpson's rule.
double quadrature_bd_rate(const RDCurve& anchor, const RDCurve& test) {
  auto interp = [](const RDCurve& c, double x) {
    double y = 0.0;
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      double l = 1.0;
      for (std::size_t j = 0; j < c.points.size(); ++j)
        if (j != i) l *= (x - c.points[j].psnr) / (c.points[i].psnr - c.points[j].psnr);
      y += l * std::log10(c.points[i].bpp);
    }
    return y;
  };
  auto span = [](const RDCurve& c) {
    double lo = 1e300, hi = -1e300;
    for (const auto& p : c.points) lo = std::min(lo, p.psnr), hi = std::max(hi, p.psnr);
    return std::pair{lo, hi};
  };
  const double lo = std::max(span(anchor).first, span(test).first);
  const double hi = std::min(span(anchor).second, span(test).second);
  const int n = 20000;
  const double h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double f = interp(test, x) - interp(anchor, x);
    sum += (i == 0 || i == n) ? f : (i % 2 ? 4 * f : 2 * f);
  }
  return 100.0 * (std::pow(10.0, sum * h / 3.0 / (hi - lo)) - 1.0);
}

Verdict bd_rate_checks() {
  const auto a = curve("a", {{0.5, 30}, {1.0, 33}, {2.0, 36}, {4.0, 38.5}, {8.0, 40}});
  const double same = bd_rate(a, a);
  auto b = a;
  for (auto& p : b.points) p.bpp *= 2;
  const double doubled = bd_rate(a, b);
  const std::vector<std::pair<RDCurve, RDCurve>> cases{
      {curve("a", {{0.3, 28.0}, {0.7, 31.5}, {1.5, 34.0}, {3.2, 37.0}}),
       curve("b", {{0.25, 28.6}, {0.6, 32.0}, {1.4, 34.9}, {3.0, 37.5}})},
      {curve("a", {{1.0, 30.0}, {2.0, 32.0}, {4.0, 35.0}, {8.0, 39.0}}),
       curve("b", {{1.3, 31.0}, {2.2, 32.5}, {5.0, 36.0}, {9.0, 40.0}})},
      {curve("a", {{0.05, 25.0}, {0.1, 27.1}, {0.2, 29.9}, {0.4, 31.0}}),
       curve("b", {{0.06, 26.0}, {0.09, 27.0}, {0.22, 30.5}, {0.5, 33.0}})},
  };
  double worst = 0.0;
  for (const auto& [x, y] : cases) {
    const double want = quadrature_bd_rate(x, y);
    worst = std::max(worst, std::abs(bd_rate(x, y) - want) / std::abs(want));
  }
  const bool ok = std::abs(same) <= 1e-9 && std::abs(doubled - 100.0) <= 0.1 && worst <= 1e-4;
  return {ok, fmt("identical %.1e (0 +- 1e-9), doubled %+.4f%% (100 +- 0.1), quadrature oracle worst rel diff %.1e (<= 1e-4)",
                  same, doubled, worst)};
}

// ---- 8: end-to-end desk run

Verdict end_to_end() {
  const auto t0 = Clock::now();
  std::vector<TrainingSample> train, held;
  for (std::uint64_t s = 100; s < 130; ++s) train.push_back(make_sample(generate_cloud(random_cloud_spec(s), s), 0.1));
  for (std::uint64_t s = 900; s < 905; ++s) held.push_back(make_sample(generate_cloud(random_cloud_spec(s), s), 0.1));

  int steps = 0;
  for (int c = 0; c < 3; ++c) {
    TrainConfig cfg;
    cfg.steps = 1500;
    cfg.q = 0.1;
    cfg.component = static_cast<Component>(c);
    cfg.profile = Profile::Desk;
    cfg.seed = 7 + static_cast<std::uint64_t>(c);
    Trainer t(cfg);
    t.run(train);
    steps = std::max(steps, cfg.steps);
    g_trained.models[static_cast<std::size_t>(c)] = t.weights();
    save_weights((g_work / (std::string("desk_") + component_name(cfg.component) + ".carw")).string(), t.weights());
  }
  const double train_time = seconds_since(t0);
  const auto& y = *g_trained.models[0];

  double gain = 0.0;
  for (const auto& s : held) {
    const auto enc = encode_frame(s.original, s.compressed, g_trained);
    gain += psnr_yuv(s.original, enc.filtered) - psnr_yuv(s.original, s.compressed);
  }
  gain /= static_cast<double>(held.size());

  double bd = 0.0;
  for (std::uint64_t seed = 900; seed < 905; ++seed) {
    const auto frame = generate_cloud(random_cloud_spec(seed), seed);
    RDCurve anchor{"unfiltered", {}}, filtered{"filtered", {}};
    for (double q : {0.02, 0.05, 0.1, 0.2}) {
      const auto s = make_sample(frame, q);
      const auto enc = encode_frame(s.original, s.compressed, g_trained);
      anchor.points.push_back({s.bpp, psnr_yuv(s.original, s.compressed)});
      filtered.points.push_back(
          {s.bpp + coefficient_bpp(enc.records, s.original.size()), psnr_yuv(s.original, enc.filtered)});
    }
    anchor.sort();
    filtered.sort();
    bd += bd_rate(anchor, filtered);
  }
  bd /= 5.0;
  const bool shape = y.config.channels == 16 && y.config.mpso_count == 3;
  const bool ok = shape && steps <= 2000 && train_time < 1800.0 && gain >= 0.2 && bd <= -2.0;
  return {ok, fmt("C=%d H=%d, %d steps x 3 in %.0f s (< 1800 s); held-out mean YUV PSNR gain %+.3f dB (>= +0.2), "
                  "4-point BD-rate %+.2f%% (<= -2%%)",
                  y.config.channels, y.config.mpso_count, steps, train_time, gain, bd)};
}

// ---- 9: decoder-side CLI filter

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

bool cli(const std::string& args) {
  const std::string cmd = std::string(CARNET_CLI_PATH) + " " + args + " >/dev/null 2>>" + (g_work / "cli_errors.txt").string();
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) && WEXITSTATUS(raw) == 0;
}

Verdict cli_decoder_contract() {
  const fs::path dir = g_work / "fixtures";
  fs::create_directories(dir);
  ComponentModels models = g_trained;
  std::string source = "trained desk";
  for (std::size_t c = 0; c < 3; ++c)
    if (!models.models[c]) {
      models.models[c] = ModelWeights::random(CarnetConfig::desk(static_cast<Component>(c)), 40 + c);
      source = "random";
    }
  std::string flags;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::string lower(1, static_cast<char>(std::tolower(component_name(static_cast<Component>(c))[0])));
    const auto p = (dir / ("w" + lower + ".carw")).string();
    save_weights(p, *models.models[c]);
    flags += " --weights-" + lower + " " + p;
  }

  int fixtures = 0, exact = 0, failed_runs = 0, nonzero = 0;
  for (std::uint64_t seed = 900; seed < 905; ++seed) {
    const auto orig = (dir / ("cloud" + std::to_string(seed) + ".ply")).string();
    write_ply(generate_cloud(random_cloud_spec(seed), seed), orig, seed % 2 ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
    for (const char* q : {"0.02", "0.05", "0.1", "0.2"}) {
      ++fixtures;
      const auto stem = (dir / (std::to_string(seed) + "_" + q)).string();
      const bool ran = cli("distort --input " + orig + " --q " + q + " --output " + stem + "_d.ply") &&
                       cli("filter --original " + orig + " --input " + stem + "_d.ply" + flags + " --coeffs " + stem +
                           ".bin --output " + stem + "_enc.ply") &&
                       cli("filter --input " + stem + "_d.ply" + flags + " --coeffs " + stem + ".bin --output " + stem +
                           "_dec.ply");
      if (!ran) {
        ++failed_runs;
        continue;
      }
      const bool bytes = slurp(stem + "_enc.ply") == slurp(stem + "_dec.ply");
      const bool attrs = read_ply(stem + "_enc.ply").attributes == read_ply(stem + "_dec.ply").attributes;
      exact += bytes && attrs;
      for (const auto& r : read_coeff_stream(read_file(stem + ".bin"))) nonzero += !r.is_zero();
    }
  }
  return {failed_runs == 0 && exact == fixtures && nonzero > 0,
          fmt("%d/%d fixtures bit-exact (%d CLI failures), %d nonzero coefficient records, %s models", exact, fixtures,
              failed_runs, nonzero, source.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "carnet_acceptance";
  fs::create_directories(g_work);
  fs::remove(g_work / "cli_errors.txt");

  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"sparse convolution matches dense oracle", sparse_conv_oracle},
      {"gradients match central differences", gradient_suite},
      {"high-frequency extractor identity", hfe_identity},
      {"least squares optimality and fallback monotonicity", lse_and_fallback},
      {"coefficient codec", coefficient_codec},
      {"RAHT properties", raht_properties},
      {"BD-rate", bd_rate_checks},
      {"end-to-end desk run", end_to_end},
      {"decoder-side CLI filter is bit-exact", cli_decoder_contract},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << "criterion " << i + 1 << ": " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << "; "
              << v.detail << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << criteria.size() - failures << "/" << criteria.size()
            << std::endl;
  return failures ? 1 : 0;
}
