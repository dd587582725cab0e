// tirtm: tone map, evaluate and export 16-bit thermal image sequences.
//
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tirtm/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct ConfigFlags {
  std::string path;
  std::string deflicker;
  std::string contrast;
  std::optional<double> sigma_k;
  std::optional<std::size_t> window;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<double> clip_limit;
  std::optional<std::size_t> tiles;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--deflicker", deflicker, "off | sigma_clip | hist_match | both");
    app->add_option("--contrast", contrast, "none | he | clahe");
    app->add_option("--sigma-k", sigma_k, "Sigma clipping factor");
    app->add_option("--window", window, "Histogram-matching window in frames");
    app->add_option("--seed", seed, "Noise seed");
    app->add_option("--lambda", lambda, "Poisson noise intensity");
    app->add_option("--clip-limit", clip_limit, "CLAHE clip limit");
    app->add_option("--tiles", tiles, "CLAHE tile grid (N gives N x N)");
  }

  tirtm::PipelineConfig resolve() const {
    tirtm::PipelineConfig c = path.empty() ? tirtm::PipelineConfig{} : tirtm::load_config(path);
    if (!deflicker.empty()) c.deflicker_mode = tirtm::parse_deflicker_mode(deflicker);
    if (!contrast.empty()) c.contrast = tirtm::parse_contrast_mode(contrast);
    if (sigma_k) c.sigma_k = *sigma_k;
    if (window) c.deflicker_window = *window;
    if (seed) c.noise_seed = *seed;
    if (lambda) c.noise_lambda = *lambda;
    if (clip_limit) c.clahe.clip_limit = *clip_limit;
    if (tiles) c.clahe.tiles_x = c.clahe.tiles_y = *tiles;
    c.validate();
    return c;
  }
};

void print_report(const tirtm::MetricsReport& report) {
  std::cout << tirtm::to_json(report).dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw tirtm::Error(tirtm::ErrorCode::io_failure, "cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retinex tone mapping for 16-bit thermal image sequences"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tirtm 0.1.0");

  // tonemap
  auto* tonemap = app.add_subcommand("tonemap", "Tone map a frame directory");
  ConfigFlags tonemap_flags;
  tonemap_flags.attach(tonemap);
  std::string tm_input, tm_output;
  bool noisy_twin = false, no_eval = false;
  tonemap->add_option("--input", tm_input, "HDR frame directory")->required();
  tonemap->add_option("--output", tm_output, "Output directory")->required();
  tonemap->add_flag("--noisy-twin", noisy_twin, "Also tone map a Poisson-noised copy into <output>/noisy");
  tonemap->add_flag("--no-eval", no_eval, "Skip metrics and report files");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score tone-mapped frames against their HDR sources");
  std::string ev_hdr, ev_ldr, ev_noisy, ev_report;
  evaluate->add_option("--hdr", ev_hdr, "HDR frame directory")->required();
  evaluate->add_option("--ldr", ev_ldr, "Tone-mapped frame directory")->required();
  evaluate->add_option("--ldr-noisy", ev_noisy, "Tone-mapped noisy-twin directory");
  evaluate->add_option("--report", ev_report, "Write JSON report here (CSV alongside)");

  // export-pairs
  auto* export_pairs = app.add_subcommand("export-pairs", "Write training pairs and manifest.json");
  ConfigFlags export_flags;
  export_flags.attach(export_pairs);
  std::string ex_input, ex_out;
  export_pairs->add_option("--input", ex_input, "HDR frame directory")->required();
  export_pairs->add_option("--out", ex_out, "Output directory")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Metrics table across tone-mapping operators");
  ConfigFlags compare_flags;
  compare_flags.attach(compare);
  std::string cmp_input, cmp_format = "markdown", cmp_out;
  std::vector<std::string> presets = tirtm::preset_names();
  compare->add_option("--input", cmp_input, "HDR frame directory")->required();
  compare->add_option("--presets", presets, "Operators to compare")->delimiter(',');
  compare->add_option("--format", cmp_format, "markdown | csv | json")
      ->check(CLI::IsMember({"markdown", "csv", "json"}));
  compare->add_option("--out", cmp_out, "Write the table here instead of stdout");

  // bench
  auto* bench = app.add_subcommand("bench", "Measure tone-mapping throughput");
  ConfigFlags bench_flags;
  bench_flags.attach(bench);
  std::size_t bench_w = 640, bench_h = 512, bench_frames = 20;
  bench->add_option("--width", bench_w)->check(CLI::PositiveNumber);
  bench->add_option("--height", bench_h)->check(CLI::PositiveNumber);
  bench->add_option("--frames", bench_frames)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*tonemap) {
      const auto config = tonemap_flags.resolve();
      const auto summary =
          tirtm::run_sequence(config, tm_input, tm_output, {.noisy_twin = noisy_twin, .evaluate = !no_eval});
      std::cerr << "tone mapped " << summary.frames << " frames into " << tm_output << '\n';
      if (summary.report) print_report(*summary.report);
    } else if (*evaluate) {
      std::optional<fs::path> noisy;
      if (!ev_noisy.empty()) noisy = ev_noisy;
      const auto report = tirtm::evaluate_dirs(ev_hdr, ev_ldr, noisy);
      if (!ev_report.empty()) tirtm::write_report(ev_report, report);
      print_report(report);
    } else if (*export_pairs) {
      const auto manifest = tirtm::export_training_pairs(export_flags.resolve(), ex_input, ex_out);
      std::cerr << "exported " << manifest.pairs.size() << " pairs to " << ex_out << '\n';
    } else if (*compare) {
      const auto table = tirtm::compare(compare_flags.resolve(), cmp_input, presets);
      std::string text;
      if (cmp_format == "markdown") {
        text = tirtm::to_markdown(table);
      } else if (cmp_format == "csv") {
        text = tirtm::to_csv(table);
      } else {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < table.operators.size(); ++i) j[table.operators[i]] = tirtm::to_json(table.reports[i]);
        text = j.dump(2) + "\n";
      }
      if (cmp_out.empty()) {
        std::cout << text;
      } else {
        write_text(cmp_out, text);
      }
    } else if (*bench) {
      const auto config = bench_flags.resolve();
      tirtm::StreamToneMapper mapper(config);
      std::vector<std::uint16_t> px(bench_w * bench_h);
      for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint16_t>(20000 + (i * 2654435761u) % 4000);
      const tirtm::HdrFrame frame(bench_w, bench_h, std::move(px));
      (void)mapper(frame);
      const auto start = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < bench_frames; ++i) (void)mapper(frame);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("%zux%zu: %.2f frames/s (%.1f ms/frame)\n", bench_w, bench_h, bench_frames / secs,
                  1000.0 * secs / bench_frames);
    }
  } catch (const tirtm::Error& e) {
    std::cerr << "error: " << tirtm::to_string(e.code()) << ": " << e.what() << '\n';
    return e.is_config_error() ? kExitConfig : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
