#pragma once

// Sequence orchestration: configuration, per-frame tone mapping, tone-map and
// evaluation runs over frame directories, training-pair export and multi-TMO
// comparison tables.
//
// Stage order of the Retinex operator:
//   multi_scale_retinex -> sigma_clip (sigma_clip | both) -> rescale_to_ldr
//   -> contrast enhancement (global CLAHE by default)
//   -> deflicker_update (hist_match | both)
// Defaults reproduce the optimized Retinex operator: global CLAHE with clip
// limit 2 plus three-sigma clipping.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirtm/enhance.hpp"
#include "tirtm/errors.hpp"
#include "tirtm/image.hpp"
#include "tirtm/imgio.hpp"
#include "tirtm/metrics.hpp"
#include "tirtm/noise.hpp"
#include "tirtm/retinex.hpp"

namespace tirtm {

enum class Operator { msr, linear };
enum class ContrastMode { none, he, clahe };
enum class DeflickerMode { off, sigma_clip, hist_match, both };

inline std::string_view to_string(Operator op) { return op == Operator::msr ? "msr" : "linear"; }

inline std::string_view to_string(ContrastMode m) {
  switch (m) {
    case ContrastMode::none: return "none";
    case ContrastMode::he: return "he";
    case ContrastMode::clahe: return "clahe";
  }
  return "none";
}

inline std::string_view to_string(DeflickerMode m) {
  switch (m) {
    case DeflickerMode::off: return "off";
    case DeflickerMode::sigma_clip: return "sigma_clip";
    case DeflickerMode::hist_match: return "hist_match";
    case DeflickerMode::both: return "both";
  }
  return "off";
}

inline Operator parse_operator(std::string_view s) {
  if (s == "msr") return Operator::msr;
  if (s == "linear") return Operator::linear;
  throw Error(ErrorCode::invalid_config, "unknown operator '" + std::string(s) + "' (msr | linear)");
}

inline ContrastMode parse_contrast_mode(std::string_view s) {
  if (s == "none") return ContrastMode::none;
  if (s == "he") return ContrastMode::he;
  if (s == "clahe") return ContrastMode::clahe;
  throw Error(ErrorCode::invalid_config, "unknown contrast mode '" + std::string(s) + "' (none | he | clahe)");
}

inline DeflickerMode parse_deflicker_mode(std::string_view s) {
  if (s == "off") return DeflickerMode::off;
  if (s == "sigma_clip" || s == "sigma-clip") return DeflickerMode::sigma_clip;
  if (s == "hist_match" || s == "histogram-matching") return DeflickerMode::hist_match;
  if (s == "both") return DeflickerMode::both;
  throw Error(ErrorCode::invalid_config,
              "unknown deflicker mode '" + std::string(s) + "' (off | sigma_clip | hist_match | both)");
}

struct PipelineConfig {
  Operator op = Operator::msr;
  RetinexConfig retinex;
  ContrastMode contrast = ContrastMode::clahe;
  ClaheConfig clahe;
  double sigma_k = 3.0;
  DeflickerMode deflicker_mode = DeflickerMode::sigma_clip;
  std::size_t deflicker_window = 100;
  std::uint64_t noise_seed = 0;
  double noise_lambda = 100.0;

  bool clips_sigma() const noexcept {
    return deflicker_mode == DeflickerMode::sigma_clip || deflicker_mode == DeflickerMode::both;
  }
  bool matches_histograms() const noexcept {
    return deflicker_mode == DeflickerMode::hist_match || deflicker_mode == DeflickerMode::both;
  }

  void validate() const {
    if (op == Operator::msr) retinex.validate();
    clahe.validate();
    if (!(sigma_k > 0.0)) throw Error(ErrorCode::invalid_config, "sigma_k must be positive");
    if (deflicker_window < 1) throw Error(ErrorCode::invalid_config, "deflicker_window must be >= 1");
    if (!(noise_lambda > 0.0)) throw Error(ErrorCode::invalid_config, "noise_lambda must be positive");
  }

  TemporalState make_state() const { return TemporalState(deflicker_window); }
};

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["operator"] = to_string(c.op);
  j["retinex"] = {{"scales", c.retinex.scales}, {"weights", c.retinex.weights}, {"epsilon", c.retinex.epsilon}};
  j["contrast"] = to_string(c.contrast);
  j["clahe"] = {{"tiles_x", c.clahe.tiles_x}, {"tiles_y", c.clahe.tiles_y}};
  if (std::isinf(c.clahe.clip_limit)) {
    j["clahe"]["clip_limit"] = nullptr;
  } else {
    j["clahe"]["clip_limit"] = c.clahe.clip_limit;
  }
  j["sigma_k"] = c.sigma_k;
  j["deflicker_mode"] = to_string(c.deflicker_mode);
  j["deflicker_window"] = c.deflicker_window;
  j["noise_seed"] = c.noise_seed;
  j["noise_lambda"] = c.noise_lambda;
  return j;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorCode::invalid_config, "unknown key '" + key + "' in " + std::string(where));
  }
}

}  // namespace detail

// Missing keys keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::invalid_config, "config must be a JSON object");
    detail::reject_unknown_keys(j,
                                {"operator", "retinex", "contrast", "clahe", "sigma_k", "deflicker_mode",
                                 "deflicker_window", "noise_seed", "noise_lambda"},
                                "config");
    if (j.contains("operator")) c.op = parse_operator(j["operator"].get<std::string>());
    if (j.contains("retinex")) {
      const auto& r = j["retinex"];
      detail::reject_unknown_keys(r, {"scales", "weights", "epsilon"}, "retinex");
      if (r.contains("scales")) {
        c.retinex.scales = r["scales"].get<std::vector<double>>();
        if (!r.contains("weights")) {
          c.retinex.weights.assign(c.retinex.scales.size(), 1.0 / static_cast<double>(c.retinex.scales.size()));
        }
      }
      if (r.contains("weights")) c.retinex.weights = r["weights"].get<std::vector<double>>();
      if (r.contains("epsilon")) c.retinex.epsilon = r["epsilon"].get<double>();
    }
    if (j.contains("contrast")) c.contrast = parse_contrast_mode(j["contrast"].get<std::string>());
    if (j.contains("clahe")) {
      const auto& k = j["clahe"];
      detail::reject_unknown_keys(k, {"tiles_x", "tiles_y", "clip_limit"}, "clahe");
      if (k.contains("tiles_x")) c.clahe.tiles_x = k["tiles_x"].get<std::size_t>();
      if (k.contains("tiles_y")) c.clahe.tiles_y = k["tiles_y"].get<std::size_t>();
      if (k.contains("clip_limit")) {
        c.clahe.clip_limit = k["clip_limit"].is_null() ? kNoClip : k["clip_limit"].get<double>();
      }
    }
    if (j.contains("sigma_k")) c.sigma_k = j["sigma_k"].get<double>();
    if (j.contains("deflicker_mode")) c.deflicker_mode = parse_deflicker_mode(j["deflicker_mode"].get<std::string>());
    if (j.contains("deflicker_window")) c.deflicker_window = j["deflicker_window"].get<std::size_t>();
    if (j.contains("noise_seed")) c.noise_seed = j["noise_seed"].get<std::uint64_t>();
    if (j.contains("noise_lambda")) c.noise_lambda = j["noise_lambda"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_config, e.what());
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_config, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// One frame through the configured operator. `state` carries the deflicker
// reference and the output-mean history of this stream.
inline LdrFrame tonemap_frame(const PipelineConfig& config, const HdrFrame& frame, TemporalState& state) {
  LdrFrame ldr = [&] {
    if (config.op == Operator::linear && !config.clips_sigma()) return linear_downscale(frame);
    RealPlane plane = config.op == Operator::msr ? multi_scale_retinex(frame, config.retinex) : to_real(frame);
    if (config.clips_sigma()) plane = sigma_clip(plane, config.sigma_k);
    return rescale_to_ldr(plane);
  }();
  switch (config.contrast) {
    case ContrastMode::none: break;
    case ContrastMode::he: ldr = hist_equalize(ldr); break;
    case ContrastMode::clahe: ldr = clahe(ldr, config.clahe); break;
  }
  if (config.matches_histograms()) return deflicker_update(state, ldr);
  state.push_mean(mean_intensity(ldr));
  return ldr;
}

// Tone mapper bound to one stream.
class StreamToneMapper {
 public:
  explicit StreamToneMapper(PipelineConfig config) : config_(std::move(config)), state_(config_.make_state()) {
    config_.validate();
  }

  LdrFrame operator()(const HdrFrame& frame) { return tonemap_frame(config_, frame, state_); }

  const PipelineConfig& config() const noexcept { return config_; }
  const TemporalState& state() const noexcept { return state_; }

 private:
  PipelineConfig config_;
  TemporalState state_;
};

struct RunOptions {
  bool noisy_twin = false;  // also tone map a Poisson-noised copy into <out>/noisy
  bool evaluate = true;     // compute metrics and write report.json / report.csv
};

struct RunSummary {
  std::size_t frames = 0;
  std::vector<std::filesystem::path> outputs;
  std::vector<std::filesystem::path> noisy_outputs;
  std::optional<MetricsReport> report;
};

inline constexpr const char* kNoisyDir = "noisy";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportCsv = "report.csv";

inline void write_report(const std::filesystem::path& json_path, const MetricsReport& report) {
  {
    std::ofstream out(json_path);
    if (!out) throw Error(ErrorCode::io_failure, "cannot write " + json_path.string());
    out << to_json(report).dump(2) << '\n';
  }
  auto csv_path = json_path;
  csv_path.replace_extension(".csv");
  std::ofstream out(csv_path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + csv_path.string());
  out << csv_header() << '\n' << to_csv_row(report) << '\n';
}

namespace detail {

inline void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::io_failure, "cannot create directory " + dir.string());
  }
}

// Output names are the input stems with a .png extension; stems must be unique.
inline std::vector<std::string> output_names(const std::vector<std::filesystem::path>& inputs) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& p : inputs) {
    std::string name = p.stem().string() + ".png";
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::sequence_mismatch, "two input frames map to output " + name);
    }
    names.push_back(std::move(name));
  }
  return names;
}

}  // namespace detail

// Tone maps every frame of `input_dir` in sequence order into `output_dir`,
// one 8-bit PNG per input. Deterministic given config and inputs, including
// the noise seed.
inline RunSummary run_sequence(const PipelineConfig& config, const std::filesystem::path& input_dir,
                               const std::filesystem::path& output_dir, const RunOptions& options = {}) {
  config.validate();
  const auto inputs = list_sequence(input_dir);
  const auto names = detail::output_names(inputs);
  detail::make_dir(output_dir);
  if (options.noisy_twin) detail::make_dir(output_dir / kNoisyDir);

  StreamToneMapper clean(config);
  StreamToneMapper noisy(config);
  SequenceEvaluator evaluator;
  RunSummary summary;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const HdrFrame hdr = load_hdr(inputs[t]);
    const LdrFrame ldr = clean(hdr);
    summary.outputs.push_back(output_dir / names[t]);
    save_ldr(summary.outputs.back(), ldr);
    std::optional<LdrFrame> twin;
    if (options.noisy_twin) {
      twin = noisy(add_poisson_noise(hdr, config.noise_lambda, derive_seed(config.noise_seed, t)));
      summary.noisy_outputs.push_back(output_dir / kNoisyDir / names[t]);
      save_ldr(summary.noisy_outputs.back(), *twin);
    }
    if (options.evaluate) evaluator.add(hdr, ldr, twin ? &*twin : nullptr);
  }
  summary.frames = inputs.size();
  if (options.evaluate) {
    summary.report = evaluator.report();
    write_report(output_dir / kReportJson, *summary.report);
  }
  return summary;
}

// Scores existing tone-mapped frames against their HDR sources. Frames are
// paired by sequence position.
inline MetricsReport evaluate_dirs(const std::filesystem::path& hdr_dir, const std::filesystem::path& ldr_dir,
                                   const std::optional<std::filesystem::path>& noisy_dir = std::nullopt) {
  const auto hdr = list_sequence(hdr_dir);
  const auto ldr = list_sequence(ldr_dir);
  std::vector<std::filesystem::path> noisy;
  if (noisy_dir) noisy = list_sequence(*noisy_dir);
  if (hdr.size() != ldr.size() || (noisy_dir && noisy.size() != ldr.size())) {
    throw Error(ErrorCode::sequence_mismatch, "frame counts differ: " + std::to_string(hdr.size()) + " HDR vs " +
                                                  std::to_string(ldr.size()) + " LDR");
  }
  SequenceEvaluator evaluator;
  for (std::size_t t = 0; t < hdr.size(); ++t) {
    const HdrFrame h = load_hdr(hdr[t]);
    const LdrFrame l = load_ldr(ldr[t]);
    if (noisy_dir) {
      const LdrFrame n = load_ldr(noisy[t]);
      evaluator.add(h, l, &n);
    } else {
      evaluator.add(h, l);
    }
  }
  return evaluator.report();
}

struct TrainingPair {
  std::size_t index = 0;
  std::string source;  // original frame filename
  std::string input;   // 16-bit PNG, relative to the manifest
  std::string target;  // 8-bit PNG, relative to the manifest
  std::size_t width = 0;
  std::size_t height = 0;
};

struct TrainingManifest {
  PipelineConfig config;
  std::vector<TrainingPair> pairs;
};

inline constexpr const char* kManifestFormat = "tirtm-training-pairs";
inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

inline nlohmann::ordered_json to_json(const TrainingManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["config"] = to_json(m.config);
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : m.pairs) {
    j["pairs"].push_back({{"index", p.index},
                          {"source", p.source},
                          {"input", p.input},
                          {"target", p.target},
                          {"width", p.width},
                          {"height", p.height}});
  }
  return j;
}

inline TrainingManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::bad_manifest, "cannot read " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format").get<std::string>() != kManifestFormat || j.at("version").get<int>() != kManifestVersion) {
      throw Error(ErrorCode::bad_manifest, "unsupported manifest format in " + path.string());
    }
    TrainingManifest m;
    m.config = config_from_json(j.at("config"));
    for (const auto& p : j.at("pairs")) {
      m.pairs.push_back({p.at("index").get<std::size_t>(), p.at("source").get<std::string>(),
                         p.at("input").get<std::string>(), p.at("target").get<std::string>(),
                         p.at("width").get<std::size_t>(), p.at("height").get<std::size_t>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::bad_manifest, path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::bad_manifest) throw;
    throw Error(ErrorCode::bad_manifest, path.string() + ": " + e.what());
  }
}

// Writes (HDR input, tone-mapped target) pairs plus manifest.json for the
// training harness. Targets always use sigma clipping only: histogram matching
// needs genuine video order, which frame-skipped training sets lack.
inline TrainingManifest export_training_pairs(const PipelineConfig& config, const std::filesystem::path& input_dir,
                                              const std::filesystem::path& out_dir) {
  PipelineConfig target_config = config;
  target_config.deflicker_mode = DeflickerMode::sigma_clip;
  target_config.validate();
  const auto inputs = list_sequence(input_dir);
  const auto names = detail::output_names(inputs);
  detail::make_dir(out_dir / "input");
  detail::make_dir(out_dir / "target");

  StreamToneMapper mapper(target_config);
  TrainingManifest manifest;
  manifest.config = target_config;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const HdrFrame hdr = load_hdr(inputs[t]);
    const LdrFrame target = mapper(hdr);
    TrainingPair pair{t, inputs[t].filename().string(), "input/" + names[t], "target/" + names[t],
                      hdr.width(), hdr.height()};
    save_hdr(out_dir / pair.input, hdr);
    save_ldr(out_dir / pair.target, target);
    manifest.pairs.push_back(std::move(pair));
  }
  std::ofstream out(out_dir / kManifestName);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write manifest in " + out_dir.string());
  out << to_json(manifest).dump(2) << '\n';
  return manifest;
}

// Named operator variants for side-by-side comparison. Retinex scales, CLAHE
// clip limit, windows and noise settings come from the base config.
inline std::vector<std::string> preset_names() {
  return {"linear", "clahe", "msr", "msr+clahe", "msr+sigma", "optimized", "optimized+hm"};
}

inline PipelineConfig preset_config(std::string_view name, const PipelineConfig& base = {}) {
  PipelineConfig c = base;
  c.clahe.tiles_x = c.clahe.tiles_y = 1;
  if (name == "linear") {
    c.op = Operator::linear;
    c.contrast = ContrastMode::none;
    c.deflicker_mode = DeflickerMode::off;
  } else if (name == "clahe") {
    c.op = Operator::linear;
    c.contrast = ContrastMode::clahe;
    c.clahe.tiles_x = c.clahe.tiles_y = 8;
    c.deflicker_mode = DeflickerMode::off;
  } else if (name == "msr") {
    c.op = Operator::msr;
    c.contrast = ContrastMode::none;
    c.deflicker_mode = DeflickerMode::off;
  } else if (name == "msr+clahe") {
    c.op = Operator::msr;
    c.contrast = ContrastMode::clahe;
    c.deflicker_mode = DeflickerMode::off;
  } else if (name == "msr+sigma") {
    c.op = Operator::msr;
    c.contrast = ContrastMode::none;
    c.deflicker_mode = DeflickerMode::sigma_clip;
  } else if (name == "optimized") {
    c.op = Operator::msr;
    c.contrast = ContrastMode::clahe;
    c.deflicker_mode = DeflickerMode::sigma_clip;
  } else if (name == "optimized+hm") {
    c.op = Operator::msr;
    c.contrast = ContrastMode::clahe;
    c.deflicker_mode = DeflickerMode::both;
  } else {
    throw Error(ErrorCode::invalid_config, "unknown preset '" + std::string(name) + "'");
  }
  c.validate();
  return c;
}

struct ComparisonTable {
  std::vector<std::string> operators;
  std::vector<MetricsReport> reports;
};

// Runs each preset over the sequence (with a noisy twin for noise visibility)
// entirely in memory.
inline ComparisonTable compare(const PipelineConfig& base, const std::filesystem::path& input_dir,
                               const std::vector<std::string>& presets) {
  const auto inputs = list_sequence(input_dir);
  ComparisonTable table;
  for (const auto& name : presets) {
    const PipelineConfig config = preset_config(name, base);
    StreamToneMapper clean(config);
    StreamToneMapper noisy(config);
    SequenceEvaluator evaluator;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const HdrFrame hdr = load_hdr(inputs[t]);
      const LdrFrame ldr = clean(hdr);
      const LdrFrame twin = noisy(add_poisson_noise(hdr, config.noise_lambda, derive_seed(config.noise_seed, t)));
      evaluator.add(hdr, ldr, &twin);
    }
    table.operators.push_back(name);
    table.reports.push_back(evaluator.report());
  }
  return table;
}

inline constexpr std::array<const char*, 8> kMeasureLabels{
    "TMQI ↑",
    "Underexposure ↓",
    "Overexposure ↓",
    "Loss of Global Contrast ↓",
    "Loss of Local Contrast ↓",
    "Noise Visibility ↓",
    "Global Temporal Incoherence ↓",
    "Local Temporal Incoherence ↓",
};

// Measures as rows, operators as columns.
inline std::string to_markdown(const ComparisonTable& t) {
  std::ostringstream out;
  out << "| Measure |";
  for (const auto& op : t.operators) out << ' ' << op << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < t.operators.size(); ++i) out << "---|";
  out << '\n';
  for (std::size_t row = 0; row < kMeasureLabels.size(); ++row) {
    out << "| " << kMeasureLabels[row] << " |";
    for (const auto& r : t.reports) {
      const auto v = report_values(r)[row];
      char buf[32];
      if (v) {
        std::snprintf(buf, sizeof buf, std::fabs(*v) < 1e-2 && *v != 0.0 ? "%.2e" : "%.4g", *v);
      } else {
        std::snprintf(buf, sizeof buf, "-");
      }
      out << ' ' << buf << " |";
    }
    out << '\n';
  }
  return out.str();
}

inline std::string to_csv(const ComparisonTable& t) {
  std::string s = "operator," + csv_header() + "\n";
  for (std::size_t i = 0; i < t.operators.size(); ++i) s += t.operators[i] + "," + to_csv_row(t.reports[i]) + "\n";
  return s;
}

}  // namespace tirtm
