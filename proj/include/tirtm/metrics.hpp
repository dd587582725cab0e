#pragma once

// Tone-mapping quality measures: TMQI, exposure, contrast loss, noise
// visibility and temporal incoherence, plus per-sequence report assembly.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirtm/detail/compensated_sum.hpp"
#include "tirtm/errors.hpp"
#include "tirtm/image.hpp"

namespace tirtm {

struct TmqiBreakdown {
  double q = 0.0;
  double structural_fidelity_s = 0.0;
  double naturalness_n = 0.0;
  std::array<double, 5> level_fidelity{};
};

// Smallest side for which the coarsest of the five levels still fits one
// 11x11 window: ceil(161 / 16) = 11.
inline constexpr std::size_t kTmqiMinSide = 161;

namespace tmqi_detail {

inline constexpr double kA = 0.8012;
inline constexpr double kAlpha = 0.3046;
inline constexpr double kBeta = 0.7088;
inline constexpr std::array<double, 5> kLevelWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr double kHdrRange = 4294967295.0;  // 2^32 - 1
inline constexpr std::size_t kWindow = 11;
inline constexpr double kWindowSigma = 1.5;

inline std::array<double, kWindow> window_1d() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// 'valid' correlation with the separable 11x11 Gaussian window.
inline RealPlane filter_valid(const RealPlane& in) {
  static const auto w = window_1d();
  const std::size_t ow = in.width() - kWindow + 1;
  const std::size_t oh = in.height() - kWindow + 1;
  RealPlane horiz(ow, in.height());
  for (std::size_t y = 0; y < in.height(); ++y) {
    const auto src = in.row(y);
    auto dst = horiz.row(y);
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += w[k] * src[x + k];
      dst[x] = s;
    }
  }
  RealPlane out(ow, oh, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    auto dst = out.row(y);
    for (std::size_t k = 0; k < kWindow; ++k) {
      const auto src = horiz.row(y + k);
      for (std::size_t x = 0; x < ow; ++x) dst[x] += w[k] * src[x];
    }
  }
  return out;
}

inline RealPlane multiply(const RealPlane& a, const RealPlane& b) {
  RealPlane out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out.pixels()[i] = a.pixels()[i] * b.pixels()[i];
  return out;
}

// 2x2 box average anchored at each even pixel, last row/column replicated.
inline RealPlane downsample(const RealPlane& in) {
  const std::size_t w = in.width();
  const std::size_t h = in.height();
  RealPlane out((w + 1) / 2, (h + 1) / 2);
  for (std::size_t y = 0; y < out.height(); ++y) {
    const std::size_t y0 = 2 * y;
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    for (std::size_t x = 0; x < out.width(); ++x) {
      const std::size_t x0 = 2 * x;
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      out(x, y) = 0.25 * (in(x0, y0) + in(x1, y0) + in(x0, y1) + in(x1, y1));
    }
  }
  return out;
}

inline double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

// Local structural fidelity at one scale. `hdr_scale` converts statistics of
// the (shifted) raw HDR values to the 2^32 range the index is defined on;
// working in raw units keeps E[x^2] - E[x]^2 free of cancellation.
inline double local_fidelity(const RealPlane& hdr, const RealPlane& ldr, double hdr_scale, double sf) {
  constexpr double c1 = 0.01;
  constexpr double c2 = 10.0;
  const RealPlane mu1 = filter_valid(hdr);
  const RealPlane mu2 = filter_valid(ldr);
  const RealPlane e11 = filter_valid(multiply(hdr, hdr));
  const RealPlane e22 = filter_valid(multiply(ldr, ldr));
  const RealPlane e12 = filter_valid(multiply(hdr, ldr));

  const double csf = 100.0 * 2.6 * (0.0192 + 0.114 * sf) * std::exp(-std::pow(0.114 * sf, 1.1));
  const double u = 128.0 / (1.4 * csf);
  const double sig = u / 3.0;

  detail::CompensatedSum sum;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double m1 = mu1.pixels()[i];
    const double m2 = mu2.pixels()[i];
    const double sigma1 = hdr_scale * std::sqrt(std::max(0.0, e11.pixels()[i] - m1 * m1));
    const double sigma2 = std::sqrt(std::max(0.0, e22.pixels()[i] - m2 * m2));
    const double sigma12 = hdr_scale * (e12.pixels()[i] - m1 * m2);
    const double p1 = normal_cdf(sigma1, u, sig);
    const double p2 = normal_cdf(sigma2, u, sig);
    const double term = (2.0 * p1 * p2 + c1) / (p1 * p1 + p2 * p2 + c1);
    sum += term * (sigma12 + c2) / (sigma1 * sigma2 + c2);
  }
  return sum.value() / static_cast<double>(mu1.size());
}

inline double naturalness(const LdrFrame& ldr) {
  detail::CompensatedSum total;
  for (const std::uint8_t v : ldr.pixels()) total += v;
  const double mean = total.value() / static_cast<double>(ldr.size());

  // Mean sample standard deviation over non-overlapping full 11x11 blocks.
  auto block_std = [&](std::size_t x0, std::size_t y0, std::size_t bw, std::size_t bh) {
    double s = 0.0;
    for (std::size_t y = y0; y < y0 + bh; ++y)
      for (std::size_t x = x0; x < x0 + bw; ++x) s += ldr(x, y);
    const double n = static_cast<double>(bw * bh);
    const double m = s / n;
    double ss = 0.0;
    for (std::size_t y = y0; y < y0 + bh; ++y)
      for (std::size_t x = x0; x < x0 + bw; ++x) ss += (ldr(x, y) - m) * (ldr(x, y) - m);
    return n > 1.0 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  };
  detail::CompensatedSum stds;
  std::size_t blocks = 0;
  for (std::size_t y = 0; y + kWindow <= ldr.height(); y += kWindow) {
    for (std::size_t x = 0; x + kWindow <= ldr.width(); x += kWindow) {
      stds += block_std(x, y, kWindow, kWindow);
      ++blocks;
    }
  }
  if (blocks == 0) {
    stds += block_std(0, 0, ldr.width(), ldr.height());
    blocks = 1;
  }
  const double contrast = stds.value() / static_cast<double>(blocks);

  // Beta(4.4, 10.1) density over contrast / 64.29, relative to its mode.
  constexpr double a = 4.4;
  constexpr double b = 10.1;
  constexpr double mode = (a - 1.0) / (a + b - 2.0);
  const double x = contrast / 64.29;
  double pc = 0.0;
  if (x > 0.0 && x < 1.0) {
    pc = std::exp((a - 1.0) * std::log(x / mode) + (b - 1.0) * std::log((1.0 - x) / (1.0 - mode)));
  }
  // Gaussian brightness density, relative to its peak.
  constexpr double mu = 115.94;
  constexpr double sigma = 27.99;
  const double pb = std::exp(-(mean - mu) * (mean - mu) / (2.0 * sigma * sigma));
  return pb * pc;
}

}  // namespace tmqi_detail

// Tone-mapped image quality index of `ldr` as a rendering of `hdr`.
inline TmqiBreakdown tmqi(const HdrFrame& hdr, const LdrFrame& ldr) {
  require_same_shape(hdr, ldr, "tmqi");
  if (hdr.width() < kTmqiMinSide || hdr.height() < kTmqiMinSide) {
    throw Error(ErrorCode::frame_too_small, "tmqi needs frames of at least " +
                                                std::to_string(kTmqiMinSide) + " pixels per side");
  }
  using namespace tmqi_detail;
  const auto [lo_it, hi_it] = std::minmax_element(hdr.pixels().begin(), hdr.pixels().end());
  const double lo = *lo_it;
  const double range = static_cast<double>(*hi_it) - lo;
  const double hdr_scale = range > 0.0 ? kHdrRange / range : 0.0;

  RealPlane h(hdr.width(), hdr.height());
  for (std::size_t i = 0; i < hdr.size(); ++i) h.pixels()[i] = hdr.pixels()[i] - lo;
  RealPlane l = to_real(ldr);

  TmqiBreakdown out;
  double s = 1.0;
  double sf = 32.0;
  for (std::size_t level = 0; level < kLevelWeights.size(); ++level) {
    sf /= 2.0;
    const double fid = std::clamp(local_fidelity(h, l, hdr_scale, sf), 0.0, 1.0);
    out.level_fidelity[level] = fid;
    s *= std::pow(fid, kLevelWeights[level]);
    if (level + 1 < kLevelWeights.size()) {
      h = downsample(h);
      l = downsample(l);
    }
  }
  out.structural_fidelity_s = s;
  out.naturalness_n = naturalness(ldr);
  out.q = kA * std::pow(out.structural_fidelity_s, kAlpha) +
          (1.0 - kA) * std::pow(out.naturalness_n, kBeta);
  return out;
}

struct ExposureThresholds {
  std::uint8_t under = 2;  // value <= under counts as underexposed
  std::uint8_t over = 253; // value >= over counts as overexposed
};

struct Exposure {
  double under_pct = 0.0;
  double over_pct = 0.0;
};

inline Exposure exposure(const LdrFrame& ldr, ExposureThresholds t = {}) {
  std::uint64_t under = 0;
  std::uint64_t over = 0;
  for (const std::uint8_t v : ldr.pixels()) {
    under += v <= t.under;
    over += v >= t.over;
  }
  const double n = static_cast<double>(ldr.size());
  return {100.0 * static_cast<double>(under) / n, 100.0 * static_cast<double>(over) / n};
}

struct ContrastLoss {
  double global = 0.0;
  double local = 0.0;
};

inline constexpr std::size_t kContrastBlock = 16;

namespace detail {

template <typename T>
RealPlane normalize_unit(const Image<T>& frame) {
  const auto [lo_it, hi_it] = std::minmax_element(frame.pixels().begin(), frame.pixels().end());
  const double lo = *lo_it;
  const double range = static_cast<double>(*hi_it) - lo;
  RealPlane out(frame.width(), frame.height(), 0.0);
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < frame.size(); ++i) out.pixels()[i] = (frame.pixels()[i] - lo) / range;
  return out;
}

// Population standard deviation over a rectangle.
inline double region_std(const RealPlane& p, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  CompensatedSum s;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) s += p(x, y);
  const double n = static_cast<double>(w * h);
  const double m = s.value() / n;
  CompensatedSum ss;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) ss += (p(x, y) - m) * (p(x, y) - m);
  return std::sqrt(ss.value() / n);
}

}  // namespace detail

// Negative values mean the rendering has more contrast than the input.
// Both frames are min-max normalized to [0, 1] as a whole; local contrast is
// compared over non-overlapping full 16x16 blocks.
inline ContrastLoss contrast_loss(const HdrFrame& hdr, const LdrFrame& ldr) {
  require_same_shape(hdr, ldr, "contrast_loss");
  const RealPlane h = detail::normalize_unit(hdr);
  const RealPlane l = detail::normalize_unit(ldr);
  ContrastLoss out;
  out.global = detail::region_std(h, 0, 0, h.width(), h.height()) -
               detail::region_std(l, 0, 0, l.width(), l.height());
  detail::CompensatedSum local;
  std::size_t blocks = 0;
  for (std::size_t y = 0; y + kContrastBlock <= h.height(); y += kContrastBlock) {
    for (std::size_t x = 0; x + kContrastBlock <= h.width(); x += kContrastBlock) {
      local += detail::region_std(h, x, y, kContrastBlock, kContrastBlock) -
               detail::region_std(l, x, y, kContrastBlock, kContrastBlock);
      ++blocks;
    }
  }
  out.local = blocks > 0 ? local.value() / static_cast<double>(blocks) : out.global;
  return out;
}

inline constexpr double kMseFloor = 1e-12;

inline double mse_to_db(double mse) { return 10.0 * std::log10(std::max(mse, kMseFloor)); }

// 10 log10 of the mean squared difference (8-bit units) between a clean run
// and a run on noise-injected input.
inline double noise_visibility(std::span<const LdrFrame> clean, std::span<const LdrFrame> noisy) {
  if (clean.size() != noisy.size() || clean.empty()) {
    throw Error(ErrorCode::sequence_mismatch, "noise visibility needs two equally long, non-empty runs");
  }
  std::uint64_t sq = 0;
  std::uint64_t n = 0;
  for (std::size_t t = 0; t < clean.size(); ++t) {
    if (!clean[t].same_shape(noisy[t])) throw Error(ErrorCode::sequence_mismatch, "frame size differs");
    for (std::size_t i = 0; i < clean[t].size(); ++i) {
      const int d = int{clean[t].pixels()[i]} - int{noisy[t].pixels()[i]};
      sq += static_cast<std::uint64_t>(d * d);
    }
    n += clean[t].size();
  }
  return mse_to_db(static_cast<double>(sq) / static_cast<double>(n));
}

struct TemporalIncoherence {
  double global = 0.0;
  double local = 0.0;
};

namespace detail {

// Frame-pair terms in [0, 1]-normalized units, from exact integer sums.
struct PairIncoherence {
  double global = 0.0;
  double local = 0.0;
};

inline PairIncoherence pair_incoherence(const LdrFrame& prev, const LdrFrame& cur) {
  std::int64_t dsum = 0;
  std::uint64_t dsq = 0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const int d = int{cur.pixels()[i]} - int{prev.pixels()[i]};
    dsum += d;
    dsq += static_cast<std::uint64_t>(d * d);
  }
  const double n = static_cast<double>(cur.size());
  const double dmean = static_cast<double>(dsum) / (255.0 * n);
  return {dmean * dmean, static_cast<double>(dsq) / (255.0 * 255.0 * n)};
}

}  // namespace detail

// global: mean squared change of the frame mean; local: mean squared
// per-pixel change. No motion compensation.
inline TemporalIncoherence temporal_incoherence(std::span<const LdrFrame> seq) {
  if (seq.size() < 2) throw Error(ErrorCode::too_few_frames, "temporal incoherence needs two frames");
  detail::CompensatedSum g, l;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    if (!seq[t].same_shape(seq[t - 1])) throw Error(ErrorCode::dimension_mismatch, "frame size changed");
    const auto p = detail::pair_incoherence(seq[t - 1], seq[t]);
    g += p.global;
    l += p.local;
  }
  const double pairs = static_cast<double>(seq.size() - 1);
  return {g.value() / pairs, l.value() / pairs};
}

struct MetricsReport {
  double tmqi = 0.0;
  double underexposure_pct = 0.0;
  double overexposure_pct = 0.0;
  double global_contrast_loss = 0.0;
  double local_contrast_loss = 0.0;
  std::optional<double> noise_visibility_db;
  std::optional<double> global_temporal_incoherence;
  std::optional<double> local_temporal_incoherence;
};

inline constexpr std::array<const char*, 8> kReportFields{
    "tmqi",
    "underexposure_pct",
    "overexposure_pct",
    "global_contrast_loss",
    "local_contrast_loss",
    "noise_visibility_db",
    "global_temporal_incoherence",
    "local_temporal_incoherence",
};

inline std::array<std::optional<double>, 8> report_values(const MetricsReport& r) {
  return {r.tmqi,
          r.underexposure_pct,
          r.overexposure_pct,
          r.global_contrast_loss,
          r.local_contrast_loss,
          r.noise_visibility_db,
          r.global_temporal_incoherence,
          r.local_temporal_incoherence};
}

// Absent measures are omitted from the object.
inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  const auto values = report_values(r);
  for (std::size_t i = 0; i < kReportFields.size(); ++i) {
    if (values[i]) j[kReportFields[i]] = *values[i];
  }
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto opt = [&](const char* key) -> std::optional<double> {
    if (j.contains(key) && !j[key].is_null()) return j[key].get<double>();
    return std::nullopt;
  };
  r.tmqi = j.at("tmqi").get<double>();
  r.underexposure_pct = j.at("underexposure_pct").get<double>();
  r.overexposure_pct = j.at("overexposure_pct").get<double>();
  r.global_contrast_loss = j.at("global_contrast_loss").get<double>();
  r.local_contrast_loss = j.at("local_contrast_loss").get<double>();
  r.noise_visibility_db = opt("noise_visibility_db");
  r.global_temporal_incoherence = opt("global_temporal_incoherence");
  r.local_temporal_incoherence = opt("local_temporal_incoherence");
  return r;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_header() {
  std::string s;
  for (std::size_t i = 0; i < kReportFields.size(); ++i) {
    if (i) s += ',';
    s += kReportFields[i];
  }
  return s;
}

// Absent measures are empty cells.
inline std::string to_csv_row(const MetricsReport& r) {
  std::string s;
  const auto values = report_values(r);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    if (values[i]) s += format_number(*values[i]);
  }
  return s;
}

// Streaming accumulation of a MetricsReport, one aligned frame at a time.
// Per-frame measures are averaged over the sequence; noise visibility pools
// all pixels of the run.
class SequenceEvaluator {
 public:
  explicit SequenceEvaluator(ExposureThresholds thresholds = {}) : thresholds_(thresholds) {}

  void add(const HdrFrame& hdr, const LdrFrame& ldr, const LdrFrame* noisy = nullptr) {
    if (frames_ > 0 && (noisy != nullptr) != has_noisy_) {
      throw Error(ErrorCode::sequence_mismatch, "noisy twin must cover every frame or none");
    }
    require_same_shape(hdr, ldr, "evaluate");
    has_noisy_ = noisy != nullptr;

    tmqi_ += tmqi(hdr, ldr).q;
    const Exposure e = exposure(ldr, thresholds_);
    under_ += e.under_pct;
    over_ += e.over_pct;
    const ContrastLoss c = contrast_loss(hdr, ldr);
    global_contrast_ += c.global;
    local_contrast_ += c.local;

    if (noisy) {
      if (!noisy->same_shape(ldr)) throw Error(ErrorCode::sequence_mismatch, "noisy frame size differs");
      for (std::size_t i = 0; i < ldr.size(); ++i) {
        const int d = int{ldr.pixels()[i]} - int{noisy->pixels()[i]};
        noise_sq_ += static_cast<std::uint64_t>(d * d);
      }
      noise_n_ += ldr.size();
    }
    if (prev_) {
      if (!prev_->same_shape(ldr)) throw Error(ErrorCode::dimension_mismatch, "frame size changed");
      const auto p = detail::pair_incoherence(*prev_, ldr);
      global_temporal_ += p.global;
      local_temporal_ += p.local;
    }
    prev_ = ldr;
    ++frames_;
  }

  std::size_t frames() const noexcept { return frames_; }

  MetricsReport report() const {
    if (frames_ == 0) throw Error(ErrorCode::empty_input, "no frames evaluated");
    const double n = static_cast<double>(frames_);
    MetricsReport r;
    r.tmqi = tmqi_.value() / n;
    r.underexposure_pct = under_.value() / n;
    r.overexposure_pct = over_.value() / n;
    r.global_contrast_loss = global_contrast_.value() / n;
    r.local_contrast_loss = local_contrast_.value() / n;
    if (has_noisy_) r.noise_visibility_db = mse_to_db(static_cast<double>(noise_sq_) / static_cast<double>(noise_n_));
    if (frames_ > 1) {
      r.global_temporal_incoherence = global_temporal_.value() / (n - 1.0);
      r.local_temporal_incoherence = local_temporal_.value() / (n - 1.0);
    }
    return r;
  }

 private:
  ExposureThresholds thresholds_;
  std::size_t frames_ = 0;
  bool has_noisy_ = false;
  detail::CompensatedSum tmqi_, under_, over_, global_contrast_, local_contrast_;
  detail::CompensatedSum global_temporal_, local_temporal_;
  std::uint64_t noise_sq_ = 0;
  std::uint64_t noise_n_ = 0;
  std::optional<LdrFrame> prev_;
};

inline MetricsReport evaluate_sequence(std::span<const HdrFrame> hdr, std::span<const LdrFrame> ldr,
                                       std::optional<std::span<const LdrFrame>> noisy = std::nullopt) {
  if (hdr.size() != ldr.size() || (noisy && noisy->size() != ldr.size())) {
    throw Error(ErrorCode::sequence_mismatch, "sequences differ in length");
  }
  if (hdr.empty()) throw Error(ErrorCode::empty_input, "empty sequence");
  SequenceEvaluator eval;
  for (std::size_t t = 0; t < hdr.size(); ++t) {
    eval.add(hdr[t], ldr[t], noisy ? &(*noisy)[t] : nullptr);
  }
  return eval.report();
}

}  // namespace tirtm
