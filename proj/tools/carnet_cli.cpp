// carnet_cli: batch front end for distortion, in-loop filtering, training and evaluation.

#include "carnet/filter.hpp"
#include "carnet/metrics.hpp"
#include "carnet/ply.hpp"
#include "carnet/raht.hpp"
#include "carnet/train.hpp"
#include "carnet/weights_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

using namespace carnet;
using json = nlohmann::json;

namespace {

PointCloudFrame to_codec_yuv(const PointCloudFrame& f) {
  return f.color_space == ColorSpace::YUV ? f : round_attributes(rgb_to_yuv(f));
}

void write_frame(const PointCloudFrame& yuv, const std::string& path, bool rgb, bool ascii) {
  const auto fmt = ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian;
  write_ply(rgb ? round_attributes(yuv_to_rgb(yuv)) : yuv, path, fmt);
}

void write_json(const json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << j.dump(2) << '\n';
  if (!f) throw Error("write to '" + path + "' failed");
}

json quality_json(const QualityReport& q) { return {{"y", q.y}, {"u", q.u}, {"v", q.v}, {"yuv", q.yuv}}; }

json records_json(const std::vector<CoefficientRecord>& records) {
  json out = json::array();
  for (const auto& r : records) out.push_back({{"component", component_name(r.component)}, {"values", r.values}});
  return out;
}

Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::Desk;
  if (s == "full") return Profile::Full;
  throw Error("unknown profile '" + s + "' (expected desk or full)");
}

// ---- distort

struct DistortArgs {
  std::string input, output, stats;
  double q = 0.1;
  bool rgb = false, ascii = false;
};

void cmd_distort(const DistortArgs& a) {
  const auto yuv = to_codec_yuv(read_ply(a.input));
  const auto d = distort(yuv, a.q);
  write_frame(d.compressed, a.output, a.rgb, a.ascii);
  if (!a.stats.empty())
    write_json({{"q", a.q},
                {"points", yuv.size()},
                {"bpp", d.bpp},
                {"channel_bpp", d.channel_bpp},
                {"psnr", quality_json(quality(yuv, d.compressed))}},
               a.stats);
}

// ---- filter

struct FilterArgs {
  std::string input, original, output, coeffs, stats;
  std::array<std::string, 3> weights;
  bool rgb = false, ascii = false;
};

void cmd_filter(const FilterArgs& a) {
  ComponentModels models;
  for (std::size_t c = 0; c < 3; ++c) models.models[c] = load_weights(a.weights[c]);
  const auto compressed = to_codec_yuv(read_ply(a.input));

  json stats{{"points", compressed.size()}};
  PointCloudFrame filtered;
  std::vector<CoefficientRecord> records;
  if (!a.original.empty()) {
    const auto original = to_codec_yuv(read_ply(a.original));
    auto enc = encode_frame(original, compressed, models);
    write_file(a.coeffs, write_coeff_stream(enc.records));
    filtered = std::move(enc.filtered);
    records = std::move(enc.records);
    stats["mode"] = "encoder";
    stats["psnr_before"] = quality_json(quality(original, compressed));
    stats["psnr_after"] = quality_json(quality(original, filtered));
  } else {
    records = read_coeff_stream(read_file(a.coeffs));
    filtered = decode_frame(compressed, models, records);
    stats["mode"] = "decoder";
  }
  write_frame(filtered, a.output, a.rgb, a.ascii);
  stats["coefficients"] = records_json(records);
  stats["bpp"] = coefficient_bpp(records, compressed.size());
  if (!a.stats.empty()) write_json(stats, a.stats);
}

// ---- train

struct TrainArgs {
  std::string output, component = "Y", profile = "desk", log, checkpoint, resume;
  std::vector<std::string> inputs;
  double q = 0.1;
  std::uint64_t seed = 1, data_seed = 100;
  int steps = 200, clouds = 30, grid_bits = 5, checkpoint_every = 0, epoch_size = 30;
};

void cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.seed = a.seed;
  cfg.steps = a.steps;
  cfg.q = a.q;
  cfg.component = parse_component(a.component);
  cfg.profile = parse_profile(a.profile);
  cfg.epoch_size = a.epoch_size;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.checkpoint_path = a.checkpoint;
  cfg.validate();

  std::vector<TrainingSample> samples;
  if (!a.inputs.empty()) {
    for (const auto& p : a.inputs) samples.push_back(make_sample(read_ply(p), cfg.q));
  } else {
    if (a.clouds < 1) throw Error("--clouds must be positive");
    for (int i = 0; i < a.clouds; ++i) {
      const auto s = a.data_seed + static_cast<std::uint64_t>(i);
      samples.push_back(make_sample(generate_cloud(random_cloud_spec(s, a.grid_bits), s), cfg.q));
    }
  }

  std::optional<ModelWeights> init;
  std::optional<AdamState> state;
  if (!a.resume.empty()) {
    auto [w, s] = load_checkpoint(a.resume);
    init = std::move(w);
    state = std::move(s);
  }
  Trainer trainer(cfg, std::move(init));
  if (state) trainer.resume(*state);

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw Error("cannot write '" + a.log + "'");
    log = &log_file;
  }
  trainer.run(samples, log);
  save_weights(a.output, trainer.weights());
  if (!a.checkpoint.empty()) save_checkpoint(a.checkpoint, trainer.weights(), trainer.optimizer());
}

// ---- eval

struct EvalArgs {
  std::string original, input, label, csv;
  std::vector<std::string> stats;
  std::optional<double> bpp;
};

double stats_bpp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  const json j = json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.contains("bpp") || !j["bpp"].is_number())
    throw Error("'" + path + "' holds no numeric bpp field");
  return j["bpp"].get<double>();
}

void cmd_eval(const EvalArgs& a) {
  const auto q = quality(to_codec_yuv(read_ply(a.original)), to_codec_yuv(read_ply(a.input)));
  double bpp = a.bpp.value_or(0.0);
  for (const auto& s : a.stats) bpp += stats_bpp(s);
  if (!a.csv.empty()) {
    if (a.label.empty() || a.label.find(',') != std::string::npos) throw Error("--csv needs a --label without commas");
    if (!(bpp > 0.0)) throw Error("--csv needs a positive rate from --bpp or --stats");
  }
  json out{{"psnr", quality_json(q)}};
  if (a.bpp || !a.stats.empty()) out["bpp"] = bpp;
  std::cout << out.dump(2) << '\n';

  if (a.csv.empty()) return;
  const bool fresh = !std::filesystem::exists(a.csv) || std::filesystem::file_size(a.csv) == 0;
  std::ofstream f(a.csv, std::ios::app);
  if (!f) throw Error("cannot write '" + a.csv + "'");
  f << std::setprecision(17);
  if (fresh) f << "label,component,bpp,psnr\n";
  const std::array<std::pair<const char*, double>, 4> rows{{{"Y", q.y}, {"U", q.u}, {"V", q.v}, {"YUV", q.yuv}}};
  for (const auto& [c, p] : rows) f << a.label << ',' << c << ',' << bpp << ',' << p << '\n';
}

// ---- bdrate

const std::array<std::string, 4> kColumns{"Y", "U", "V", "YUV"};

// label -> component -> curve
using CurveTable = std::map<std::string, std::map<std::string, RDCurve>>;

CurveTable read_curves(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  CurveTable t;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (n == 1 && line.rfind("label,", 0) == 0)) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    auto bad = [&] { return Error(path + ":" + std::to_string(n) + ": expected label,component,bpp,psnr"); };
    if (cells.size() != 4) throw bad();
    double bpp = 0, psnr = 0;
    try {
      std::size_t u = 0, v = 0;
      bpp = std::stod(cells[2], &u);
      psnr = std::stod(cells[3], &v);
      if (u != cells[2].size() || v != cells[3].size()) throw bad();
    } catch (const std::logic_error&) {
      throw bad();
    }
    std::string comp = cells[1];
    std::transform(comp.begin(), comp.end(), comp.begin(), ::toupper);
    if (std::find(kColumns.begin(), kColumns.end(), comp) == kColumns.end())
      throw Error(path + ":" + std::to_string(n) + ": unknown component '" + cells[1] + "'");
    auto& curve = t[cells[0]][comp];
    curve.label = cells[0] + "/" + comp;
    curve.points.push_back({bpp, psnr});
  }
  if (t.empty()) throw Error("'" + path + "' holds no RD points");
  for (auto& [label, comps] : t)
    for (auto& [c, curve] : comps) curve.sort();
  return t;
}

void cmd_bdrate(const std::string& anchor_path, const std::string& test_path, const std::string& output) {
  const auto anchor = read_curves(anchor_path);
  const auto test = read_curves(test_path);
  json report{{"labels", json::object()}};
  std::map<std::string, std::vector<double>> per_column;
  std::ostringstream table;
  table << std::fixed << std::setprecision(2) << std::left << std::setw(16) << "label";
  for (const auto& c : kColumns) table << std::right << std::setw(10) << c;
  table << '\n';
  for (const auto& [label, comps] : anchor) {
    const auto it = test.find(label);
    if (it == test.end()) throw Error("label '" + label + "' is missing from '" + test_path + "'");
    table << std::left << std::setw(16) << label;
    for (const auto& c : kColumns) {
      const auto a = comps.find(c);
      const auto b = it->second.find(c);
      if (a == comps.end() || b == it->second.end()) {
        table << std::right << std::setw(10) << "-";
        continue;
      }
      const double r = bd_rate(a->second, b->second);
      report["labels"][label][c] = r;
      per_column[c].push_back(r);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << r << '%';
      table << std::right << std::setw(10) << cell.str();
    }
    table << '\n';
  }
  table << std::left << std::setw(16) << "Average";
  for (const auto& c : kColumns) {
    const auto& v = per_column[c];
    if (v.empty()) {
      table << std::right << std::setw(10) << "-";
      continue;
    }
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    report["average"][c] = m;
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(2) << m << '%';
    table << std::right << std::setw(10) << cell.str();
  }
  table << '\n';
  std::cout << table.str();
  if (!output.empty()) write_json(report, output);
}

// ---- coeffs

void cmd_coeffs(const std::string& path, std::size_t points) {
  const auto records = read_coeff_stream(read_file(path));
  std::size_t bits = 0;
  for (const auto& r : records) bits += r.payload_bits();
  json out{{"records", records_json(records)}, {"payload_bits", bits}};
  if (points > 0) out["bpp"] = coefficient_bpp(records, points);
  std::cout << out.dump(2) << '\n';
}

// ---- generate

void cmd_generate(std::uint64_t seed, int grid_bits, const std::string& output, bool ascii) {
  write_ply(generate_cloud(random_cloud_spec(seed, grid_bits), seed), output,
            ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CARNet in-loop attribute filter tools"};
  app.require_subcommand(1);

  DistortArgs da;
  auto* distort_cmd = app.add_subcommand("distort", "Lossy RAHT attribute coding of a cloud");
  distort_cmd->add_option("--input", da.input, "Input PLY")->required()->check(CLI::ExistingFile);
  distort_cmd->add_option("--output", da.output, "Compressed PLY")->required();
  distort_cmd->add_option("--q", da.q, "Quantization step in normalized scale")->check(CLI::NonNegativeNumber);
  distort_cmd->add_option("--stats", da.stats, "Stats JSON (bpp, PSNR against the input)");
  distort_cmd->add_flag("--rgb", da.rgb, "Write RGB instead of YUV");
  distort_cmd->add_flag("--ascii", da.ascii, "Write ASCII PLY");

  FilterArgs fa;
  auto* filter_cmd = app.add_subcommand("filter", "Apply the filter; decoder mode when --original is omitted");
  filter_cmd->add_option("--input", fa.input, "Compressed PLY")->required()->check(CLI::ExistingFile);
  filter_cmd->add_option("--original", fa.original, "Original PLY (encoder mode)")->check(CLI::ExistingFile);
  filter_cmd->add_option("--weights-y", fa.weights[0], "Y model")->required()->check(CLI::ExistingFile);
  filter_cmd->add_option("--weights-u", fa.weights[1], "U model")->required()->check(CLI::ExistingFile);
  filter_cmd->add_option("--weights-v", fa.weights[2], "V model")->required()->check(CLI::ExistingFile);
  filter_cmd->add_option("--coeffs", fa.coeffs, "Coefficient bitstream, written by the encoder, read by the decoder")
      ->required();
  filter_cmd->add_option("--output", fa.output, "Filtered PLY")->required();
  filter_cmd->add_option("--stats", fa.stats, "Stats JSON");
  filter_cmd->add_flag("--rgb", fa.rgb, "Write RGB instead of YUV");
  filter_cmd->add_flag("--ascii", fa.ascii, "Write ASCII PLY");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train one component model");
  train_cmd->add_option("--output", ta.output, "Weights file")->required();
  train_cmd->add_option("--component", ta.component, "Y, U or V");
  train_cmd->add_option("--profile", ta.profile, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  train_cmd->add_option("--q", ta.q, "Distortion step of the training data")->check(CLI::PositiveNumber);
  train_cmd->add_option("--steps", ta.steps, "Optimizer steps");
  train_cmd->add_option("--seed", ta.seed, "Initialization seed");
  train_cmd->add_option("--input", ta.inputs, "Training PLY files; synthetic clouds when omitted");
  train_cmd->add_option("--clouds", ta.clouds, "Number of synthetic clouds");
  train_cmd->add_option("--data-seed", ta.data_seed, "Seed of the first synthetic cloud");
  train_cmd->add_option("--grid-bits", ta.grid_bits, "Synthetic grid size as a power of two");
  train_cmd->add_option("--epoch-size", ta.epoch_size, "Steps per learning-rate epoch");
  train_cmd->add_option("--log", ta.log, "Step log file (default stdout)");
  train_cmd->add_option("--checkpoint", ta.checkpoint, "Checkpoint file");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Checkpoint cadence in steps");
  train_cmd->add_option("--resume", ta.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR of a cloud against a reference");
  eval_cmd->add_option("--original", ea.original, "Reference PLY")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--input", ea.input, "Test PLY")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--bpp", ea.bpp, "Rate of the test cloud");
  eval_cmd->add_option("--stats", ea.stats, "Stats JSON files whose bpp fields add to the rate")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--label", ea.label, "RD curve label for --csv");
  eval_cmd->add_option("--csv", ea.csv, "Append label,component,bpp,psnr rows");

  std::string anchor, test, report;
  auto* bd_cmd = app.add_subcommand("bdrate", "BD-rate of test curves against anchor curves");
  bd_cmd->add_option("--anchor", anchor, "Anchor CSV")->required()->check(CLI::ExistingFile);
  bd_cmd->add_option("--test", test, "Test CSV")->required()->check(CLI::ExistingFile);
  bd_cmd->add_option("--output", report, "Report JSON");

  std::string coeff_path;
  std::size_t points = 0;
  auto* coeffs_cmd = app.add_subcommand("coeffs", "Decode and print a coefficient bitstream");
  coeffs_cmd->add_option("--coeffs", coeff_path, "Bitstream")->required()->check(CLI::ExistingFile);
  coeffs_cmd->add_option("--points", points, "Point count, to report bpp");

  std::uint64_t gen_seed = 1;
  int gen_bits = 5;
  std::string gen_out;
  bool gen_ascii = false;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic colored shell");
  gen_cmd->add_option("--seed", gen_seed, "Cloud seed");
  gen_cmd->add_option("--grid-bits", gen_bits, "Grid size as a power of two");
  gen_cmd->add_option("--output", gen_out, "Output PLY")->required();
  gen_cmd->add_flag("--ascii", gen_ascii, "Write ASCII PLY");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*distort_cmd) cmd_distort(da);
    else if (*filter_cmd) cmd_filter(fa);
    else if (*train_cmd) cmd_train(ta);
    else if (*eval_cmd) cmd_eval(ea);
    else if (*bd_cmd) cmd_bdrate(anchor, test, report);
    else if (*coeffs_cmd) cmd_coeffs(coeff_path, points);
    else if (*gen_cmd) cmd_generate(gen_seed, gen_bits, gen_out, gen_ascii);
  } catch (const std::exception& e) {
    std::cerr << "carnet_cli: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
