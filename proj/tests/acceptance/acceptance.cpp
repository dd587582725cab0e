// Acceptance run: one PASS/FAIL (or SKIP) line per criterion, exit status 1
// if any criterion fails.
//
//   tirtm_acceptance [--cli PATH] [--data DIR]
//
// TIRTM_FLIR_VIDEO_DIR, when set, points at a directory of 16-bit FLIR video
// frames for the operator-ordering check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "../unit/support.hpp"
#include "tirtm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tirtm;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string g_cli;
fs::path g_data;

// --- Degenerate-pipeline identity -------------------------------------------

Outcome degenerate_identity() {
  const HdrFrame frame(64, 48, 27182);
  PipelineConfig off;
  off.deflicker_mode = DeflickerMode::off;
  StreamToneMapper reference(off);
  std::vector<LdrFrame> expected;
  bool mid_gray = true;
  for (int t = 0; t < 5; ++t) {
    expected.push_back(reference(frame));
    for (const std::uint8_t v : expected.back().pixels()) mid_gray &= v == 127;
  }
  bool unchanged = true;
  for (DeflickerMode mode : {DeflickerMode::sigma_clip, DeflickerMode::hist_match, DeflickerMode::both}) {
    PipelineConfig c;
    c.deflicker_mode = mode;
    StreamToneMapper mapper(c);
    for (int t = 0; t < 5; ++t) {
      const LdrFrame out = mapper(frame);
      if (t > 0) unchanged &= out.data() == expected[t].data();
    }
  }
  return verdict(mid_gray && unchanged,
                 fmt("constant->127: %s, deflicker modes unchanged from frame 2: %s", mid_gray ? "yes" : "no",
                     unchanged ? "yes" : "no"));
}

// --- MSR oracle ----------------------------------------------------------------

// Weight of source index j in output i for a clamped-edge, 3-sigma truncated,
// renormalized 1-D Gaussian, accumulated tap by tap.
std::vector<long double> folded_weights(std::size_t n, double sigma) {
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  long double norm = 0.0L;
  for (long k = -r; k <= r; ++k) norm += std::exp(-0.5L * k * k / (static_cast<long double>(sigma) * sigma));
  std::vector<long double> w(n * n, 0.0L);
  for (long i = 0; i < static_cast<long>(n); ++i) {
    for (long k = -r; k <= r; ++k) {
      const long j = std::clamp(i + k, 0L, static_cast<long>(n) - 1);
      w[i * n + j] += std::exp(-0.5L * k * k / (static_cast<long double>(sigma) * sigma)) / norm;
    }
  }
  return w;
}

RealPlane brute_msr(const HdrFrame& f, const RetinexConfig& c) {
  const std::size_t w = f.width(), h = f.height();
  RealPlane out(w, h, 0.0);
  for (std::size_t s = 0; s < c.scales.size(); ++s) {
    const auto wx = folded_weights(w, c.scales[s]);
    const auto wy = folded_weights(h, c.scales[s]);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        long double g = 0.0L;
        for (std::size_t sy = 0; sy < h; ++sy)
          for (std::size_t sx = 0; sx < w; ++sx) g += wy[y * h + sy] * wx[x * w + sx] * f(sx, sy);
        out(x, y) += static_cast<double>(c.weights[s] * (std::log(static_cast<long double>(f(x, y)) + c.epsilon) -
                                                         std::log(g + c.epsilon)));
      }
    }
  }
  return out;
}

Outcome msr_oracle() {
  std::mt19937_64 rng(2024);
  const RetinexConfig config;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const HdrFrame f = test::random_hdr(16, 16, rng);
    const RealPlane got = multi_scale_retinex(f, config);
    const RealPlane ref = brute_msr(f, config);
    for (std::size_t p = 0; p < got.size(); ++p) worst = std::max(worst, std::fabs(got.pixels()[p] - ref.pixels()[p]));
  }
  return verdict(worst <= 1e-9, fmt("20 frames 16x16, scales 15/80/250, max |diff| = %.3g (limit 1e-9)", worst));
}

// --- Gain invariance -----------------------------------------------------------

Outcome gain_invariance() {
  RetinexConfig config;
  config.epsilon = 1e-6;
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    HdrFrame base = test::thermal_scene(96, 80, rng());
    const auto [lo, hi] = std::minmax_element(base.pixels().begin(), base.pixels().end());
    const double a = *lo, b = *hi;
    HdrFrame in(base.width(), base.height());
    for (std::size_t i = 0; i < in.size(); ++i) {
      in.pixels()[i] = static_cast<std::uint16_t>(std::lround(1000.0 + 5500.0 * (base.pixels()[i] - a) / (b - a)));
    }
    const RealPlane r1 = multi_scale_retinex(in, config);
    for (int alpha : {2, 10}) {
      HdrFrame scaled(in.width(), in.height());
      for (std::size_t i = 0; i < in.size(); ++i) scaled.pixels()[i] = static_cast<std::uint16_t>(alpha * in.pixels()[i]);
      const RealPlane r2 = multi_scale_retinex(scaled, config);
      std::vector<double> d(r1.size());
      double mean = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) mean += d[i] = r2.pixels()[i] - r1.pixels()[i];
      mean /= static_cast<double>(d.size());
      for (const double v : d) worst = std::max(worst, std::fabs(v - mean));
    }
  }
  return verdict(worst <= 1e-3, fmt("alpha 2 and 10, eps 1e-6, intensities 1000..6500: max deviation %.3g (limit 1e-3)",
                                    worst));
}

// --- Monotone mappings ---------------------------------------------------------

bool order_preserved(const LdrFrame& in, const LdrFrame& out) {
  std::array<int, 256> lo{}, hi{};
  lo.fill(256);
  hi.fill(-1);
  for (std::size_t i = 0; i < in.size(); ++i) {
    lo[in.pixels()[i]] = std::min(lo[in.pixels()[i]], int{out.pixels()[i]});
    hi[in.pixels()[i]] = std::max(hi[in.pixels()[i]], int{out.pixels()[i]});
  }
  int prev = -1;
  for (std::size_t v = 0; v < 256; ++v) {
    if (hi[v] < 0) continue;
    if (lo[v] != hi[v] || lo[v] < prev) return false;
    prev = hi[v];
  }
  return true;
}

LdrFrame random_frame(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> side(8, 48);
  const std::size_t w = side(rng), h = side(rng);
  std::uniform_int_distribution<int> a(0, 255);
  int lo = a(rng), hi = a(rng);
  if (lo > hi) std::swap(lo, hi);
  switch (rng() % 3) {
    case 0: return test::random_ldr(w, h, rng, static_cast<std::uint8_t>(lo), static_cast<std::uint8_t>(hi));
    case 1: {
      std::normal_distribution<double> n(0.5 * (lo + hi), 1.0 + 0.25 * (hi - lo));
      std::vector<std::uint8_t> px(w * h);
      for (auto& v : px) v = static_cast<std::uint8_t>(std::clamp(std::lround(n(rng)), 0L, 255L));
      return LdrFrame(w, h, std::move(px));
    }
    default: {
      std::vector<std::uint8_t> px(w * h);
      std::uniform_int_distribution<int> k(1, 6);
      std::vector<std::uint8_t> levels(static_cast<std::size_t>(k(rng)));
      for (auto& l : levels) l = static_cast<std::uint8_t>(a(rng));
      for (auto& v : px) v = levels[rng() % levels.size()];
      return LdrFrame(w, h, std::move(px));
    }
  }
}

bool mapping_monotone(const std::array<double, 256>& m) {
  for (std::size_t v = 1; v < 256; ++v)
    if (m[v] < m[v - 1]) return false;
  return true;
}

Outcome monotone_mappings() {
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> clip(1.01, 8.0);
  int he_bad = 0, clahe_bad = 0, match_bad = 0, tile_bad = 0, self_worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const LdrFrame f = random_frame(rng);
    if (!order_preserved(f, hist_equalize(f))) ++he_bad;
    const double limit = i % 5 == 0 ? kNoClip : clip(rng);
    if (!order_preserved(f, clahe(f, {1, 1, limit}))) ++clahe_bad;
    std::array<double, 256> tile_hist{};
    for (const std::uint8_t v : f.pixels()) tile_hist[v] += 1.0;
    if (!mapping_monotone(clahe_tile_mapping(tile_hist, limit))) ++tile_bad;
    const LdrFrame ref = random_frame(rng);
    if (!order_preserved(f, histogram_match(f, histogram(ref)))) ++match_bad;
    const LdrFrame self = histogram_match(f, histogram(f));
    for (std::size_t p = 0; p < f.size(); ++p) self_worst = std::max(self_worst, std::abs(self.pixels()[p] - f.pixels()[p]));
  }
  const bool ok = he_bad == 0 && clahe_bad == 0 && tile_bad == 0 && match_bad == 0 && self_worst <= 1;
  return verdict(ok, fmt("1000 frames: non-monotone HE %d, CLAHE %d, tile maps %d, matching %d; "
                         "self-match max deviation %d level(s)",
                         he_bad, clahe_bad, tile_bad, match_bad, self_worst));
}

// --- Sigma-clip re-centering and deflicker -------------------------------------

double sample_std(const std::vector<double>& v) {
  double m = 0.0;
  for (const double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Static thermal scene plus a sinusoidal global offset of 10% of its range,
// tone mapped by the default pipeline. Returns the frame-mean std in grey levels.
double flicker_std(DeflickerMode mode) {
  const HdrFrame base = test::thermal_scene(160, 128, 7);
  const auto [lo, hi] = std::minmax_element(base.pixels().begin(), base.pixels().end());
  const double amplitude = 0.1 * (static_cast<double>(*hi) - *lo);
  PipelineConfig c;
  c.deflicker_mode = mode;
  StreamToneMapper mapper(c);
  std::vector<double> means;
  for (int t = 0; t < 48; ++t) {
    const double offset = amplitude * std::sin(2.0 * std::numbers::pi * t / 24.0);
    HdrFrame f(base.width(), base.height());
    for (std::size_t i = 0; i < f.size(); ++i) {
      f.pixels()[i] = static_cast<std::uint16_t>(std::clamp(std::lround(base.pixels()[i] + offset), 0L, 65535L));
    }
    means.push_back(255.0 * mean_intensity(mapper(f)));
  }
  return sample_std(means);
}

Outcome sigma_clip_recentering() {
  std::mt19937_64 rng(515);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::cauchy_distribution<double> cauchy(0.0, 1.0);
  std::student_t_distribution<double> student(2.0);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double lo_mean = 255.0, hi_mean = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> px(128 * 128);
    for (auto& v : px) {
      switch (trial % 5) {
        case 0: v = gauss(rng); break;
        case 1: v = cauchy(rng); break;
        case 2: v = student(rng); break;
        case 3: v = rng() % 2 ? expo(rng) : -expo(rng); break;
        default: v = uni(rng); break;
      }
    }
    const LdrFrame out = rescale_to_ldr(sigma_clip(RealPlane(128, 128, std::move(px))));
    const double m = 255.0 * mean_intensity(out);
    lo_mean = std::min(lo_mean, m);
    hi_mean = std::max(hi_mean, m);
  }
  const bool centred = lo_mean >= 120.0 && hi_mean <= 135.0;

  const double off = flicker_std(DeflickerMode::off);
  const double sc = flicker_std(DeflickerMode::sigma_clip);
  const double hm = flicker_std(DeflickerMode::hist_match);
  const double sc_red = 1.0 - sc / off;
  const double hm_red = 1.0 - hm / off;
  const bool ok = centred && sc_red >= 0.5 && hm_red >= 0.7;
  return verdict(ok, fmt("symmetric means in [%.2f, %.2f] (want [120,135]); flicker std off %.4f, sigma_clip %.4f "
                         "(-%.0f%%, want 50%%), hist_match %.4f (-%.0f%%, want 70%%) grey levels",
                         lo_mean, hi_mean, off, sc, 100.0 * sc_red, hm, 100.0 * hm_red));
}

// --- Temporal incoherence closed forms ----------------------------------------

Outcome temporal_closed_forms() {
  std::mt19937_64 rng(516);
  const std::vector<LdrFrame> constant(6, test::random_ldr(20, 20, rng));
  const TemporalIncoherence c = temporal_incoherence(constant);
  // Means 127.5/255 = 0.5 and 130.05/255 = 0.51.
  std::vector<std::uint8_t> a(100, 127), b(100, 130);
  std::fill(a.begin(), a.begin() + 50, 128);
  std::fill(b.begin(), b.begin() + 5, 131);
  std::vector<LdrFrame> alt;
  for (int t = 0; t < 30; ++t) alt.emplace_back(10, 10, t % 2 ? b : a);
  const double g = temporal_incoherence(alt).global;
  const bool ok = c.global == 0.0 && c.local == 0.0 && std::fabs(g - 1e-4) <= 1e-12;
  return verdict(ok, fmt("constant -> (%g, %g); alternating 0.5/0.51 -> %.15g (want 1e-4 +- 1e-12)", c.global, c.local, g));
}

// --- Noise visibility ----------------------------------------------------------

Outcome noise_visibility_monotone() {
  std::vector<HdrFrame> scene;
  for (std::uint64_t t = 0; t < 4; ++t) scene.push_back(test::thermal_scene(176, 176, 900 + t));
  const PipelineConfig config;
  StreamToneMapper clean_mapper(config);
  std::vector<LdrFrame> clean;
  for (const auto& f : scene) clean.push_back(clean_mapper(f));
  std::vector<double> db;
  for (double lambda : {25.0, 100.0, 400.0}) {
    StreamToneMapper noisy_mapper(config);
    std::vector<LdrFrame> noisy;
    for (std::size_t t = 0; t < scene.size(); ++t) noisy.push_back(noisy_mapper(add_poisson_noise(scene[t], lambda, derive_seed(3, t))));
    db.push_back(noise_visibility(clean, noisy));
  }
  const double floor = noise_visibility(clean, clean);
  const bool ok = db[0] < db[1] && db[1] < db[2] && floor == -120.0;
  return verdict(ok, fmt("lambda 25/100/400 -> %.3f / %.3f / %.3f dB; identical runs -> %.1f dB", db[0], db[1], db[2], floor));
}

// --- TMQI oracle -----------------------------------------------------------------

Outcome tmqi_oracle() {
  const fs::path dir = g_data / "tmqi";
  std::ifstream in(dir / "reference.json");
  if (!in) return {Verdict::fail, "missing " + (dir / "reference.json").string()};
  const auto records = nlohmann::json::parse(in);
  double worst_dq = 0.0;
  for (const auto& r : records) {
    const TmqiBreakdown t =
        tmqi(load_hdr(dir / r["hdr"].get<std::string>()), load_ldr(dir / r["ldr"].get<std::string>()));
    worst_dq = std::max(worst_dq, std::fabs(t.q - r["q"].get<double>()));
  }

  // Exact affine re-quantizations: a one-level-per-column ramp, uniform noise, sinusoids.
  double min_s = 1.0;
  HdrFrame ramp(256, 192);
  LdrFrame ramp8(256, 192);
  for (std::size_t y = 0; y < 192; ++y) {
    for (std::size_t x = 0; x < 256; ++x) {
      ramp(x, y) = static_cast<std::uint16_t>(x * 257);
      ramp8(x, y) = static_cast<std::uint8_t>(x);
    }
  }
  min_s = std::min(min_s, tmqi(ramp, ramp8).structural_fidelity_s);
  std::mt19937_64 rng(518);
  for (int trial = 0; trial < 3; ++trial) {
    const HdrFrame noise = test::random_hdr(180, 170, rng);
    min_s = std::min(min_s, tmqi(noise, linear_downscale(noise)).structural_fidelity_s);
    const double f = 0.1 + 0.1 * trial;
    HdrFrame wave(200, 170);
    for (std::size_t y = 0; y < wave.height(); ++y)
      for (std::size_t x = 0; x < wave.width(); ++x)
        wave(x, y) = static_cast<std::uint16_t>(std::lround(32767.5 + 32767.5 * std::sin(f * x) * std::cos(0.7 * f * y)));
    min_s = std::min(min_s, tmqi(wave, linear_downscale(wave)).structural_fidelity_s);
  }
  const bool ok = records.size() == 5 && worst_dq <= 0.005 && min_s >= 0.99;
  return verdict(ok, fmt("%zu reference pairs, max |dQ| = %.2e (limit 0.005); min S over affine re-quantizations %.5f",
                         records.size(), worst_dq, min_s));
}

// --- Operator ordering on FLIR video ------------------------------------------

Outcome flir_ordering() {
  const char* dir = std::getenv("TIRTM_FLIR_VIDEO_DIR");
  if (!dir || !*dir) return {Verdict::skip, "TIRTM_FLIR_VIDEO_DIR not set (dataset optional)"};
  const ComparisonTable t = compare(PipelineConfig{}, dir, {"msr", "optimized"});
  const MetricsReport& base = t.reports[0];
  const MetricsReport& opt = t.reports[1];
  const double ratio = *base.global_temporal_incoherence / std::max(*opt.global_temporal_incoherence, 1e-300);
  const bool ok = opt.tmqi - base.tmqi >= 0.02 && ratio >= 5.0;
  return verdict(ok, fmt("TMQI optimized %.3f vs msr %.3f (margin want 0.02); global temporal %.2e vs %.2e (ratio %.1f, want 5)",
                         opt.tmqi, base.tmqi, *opt.global_temporal_incoherence, *base.global_temporal_incoherence, ratio));
}

// --- Determinism ---------------------------------------------------------------

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  if (g_cli.empty()) return {Verdict::fail, "no CLI binary given (--cli)"};
  test::TempDir dir;
  fs::create_directories(dir / "in");
  for (int t = 0; t < 4; ++t) {
    save_hdr(dir / ("in/f" + std::to_string(t) + ".png"), test::thermal_scene(176, 176, 40 + t, 250.0 * t));
  }
  for (const char* out : {"a", "b"}) {
    const std::string cmd = "\"" + g_cli + "\" tonemap --input \"" + (dir / "in").string() + "\" --output \"" +
                            (dir / out).string() + "\" --noisy-twin --seed 1234 --deflicker both >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {Verdict::fail, "tonemap run failed: " + cmd};
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    if (slurp(e.path()) != slurp(dir / "b" / fs::relative(e.path(), dir / "a"))) ++differing;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "b")) files_b += e.is_regular_file();
  return verdict(files > 0 && files == files_b && differing == 0,
                 fmt("two tonemap runs (noisy twin, seed 1234): %zu files, %zu differ", files, differing));
}

// --- Throughput (reported, not gated) ------------------------------------------

std::string throughput() {
  StreamToneMapper mapper{PipelineConfig{}};
  const HdrFrame frame = test::thermal_scene(640, 512, 5);
  (void)mapper(frame);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 10; ++i) (void)mapper(frame);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fmt("%.1f frames/s at 640x512 (target 5)", 10.0 / s);
}

}  // namespace

int main(int argc, char** argv) {
  g_data = TIRTM_TEST_DATA;
#ifdef TIRTM_CLI_PATH
  g_cli = TIRTM_CLI_PATH;
#endif
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") g_cli = argv[i + 1];
    else if (flag == "--data") g_data = argv[i + 1];
  }

  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
      {"degenerate-pipeline-identity", degenerate_identity},
      {"msr-oracle-equivalence", msr_oracle},
      {"gain-invariance", gain_invariance},
      {"monotone-mappings", monotone_mappings},
      {"sigma-clip-recentering", sigma_clip_recentering},
      {"temporal-incoherence-closed-forms", temporal_closed_forms},
      {"noise-visibility-monotonicity", noise_visibility_monotone},
      {"tmqi-oracle", tmqi_oracle},
      {"flir-operator-ordering", flir_ordering},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : checks) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::fail;
    std::printf("%s %s (%.2fs): %s\n", tag, name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("INFO throughput: %s\n", throughput().c_str());
  return failures == 0 ? 0 : 1;
}
