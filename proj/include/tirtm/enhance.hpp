#pragma once

// Post-Retinex enhancement and deflickering.
//
// Every value mapping here (HE, CLAHE, histogram matching) is monotone
// non-decreasing, so the ordering of pixel values is preserved.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "tirtm/detail/compensated_sum.hpp"
#include "tirtm/errors.hpp"
#include "tirtm/image.hpp"
#include "tirtm/imgio.hpp"

namespace tirtm {

using Lut8 = std::array<std::uint8_t, 256>;

inline constexpr double kNoClip = std::numeric_limits<double>::infinity();

struct ClaheConfig {
  std::size_t tiles_x = 1;
  std::size_t tiles_y = 1;
  // Multiple of the uniform bin height (pixels / 256); kNoClip disables clipping.
  double clip_limit = 2.0;

  void validate() const {
    if (tiles_x < 1 || tiles_y < 1) throw Error(ErrorCode::invalid_config, "clahe: tiles must be >= 1");
    if (!(clip_limit > 1.0)) throw Error(ErrorCode::invalid_config, "clahe: clip_limit must exceed 1");
  }
};

inline LdrFrame apply_lut(const LdrFrame& frame, const Lut8& lut) {
  LdrFrame out(frame.width(), frame.height());
  auto dst = out.pixels().begin();
  for (const std::uint8_t v : frame.pixels()) *dst++ = lut[v];
  return out;
}

namespace detail {

// Unrounded CDF mapping 255 * (cdf(v) - cdf_min) / (N - cdf_min), where
// cdf_min is the CDF at the first occupied bin. A histogram with a single
// occupied bin has no spread to equalize; it maps to the identity.
inline std::array<double, 256> cdf_mapping(const std::array<double, 256>& hist) {
  std::array<double, 256> map{};
  std::array<double, 256> cdf{};
  double run = 0.0;
  int occupied = 0;
  double cdf_min = -1.0;
  for (std::size_t v = 0; v < 256; ++v) {
    run += hist[v];
    cdf[v] = run;
    if (hist[v] > 0.0) {
      ++occupied;
      if (cdf_min < 0.0) cdf_min = run;
    }
  }
  const double total = run;
  if (occupied <= 1 || !(total > cdf_min)) {
    for (std::size_t v = 0; v < 256; ++v) map[v] = static_cast<double>(v);
    return map;
  }
  for (std::size_t v = 0; v < 256; ++v) {
    map[v] = std::max(0.0, 255.0 * (cdf[v] - cdf_min) / (total - cdf_min));
  }
  return map;
}

// Clips bins at clip_limit * mean bin height and spreads the clipped mass
// uniformly over all 256 bins.
inline std::array<double, 256> clip_histogram(const std::array<double, 256>& hist, double clip_limit) {
  if (std::isinf(clip_limit)) return hist;
  double total = 0.0;
  for (double h : hist) total += h;
  const double limit = clip_limit * total / 256.0;
  double excess = 0.0;
  std::array<double, 256> out{};
  for (std::size_t v = 0; v < 256; ++v) {
    out[v] = std::min(hist[v], limit);
    excess += hist[v] - out[v];
  }
  if (excess > 0.0) {
    const double share = excess / 256.0;
    for (double& h : out) h += share;
  }
  return out;
}

inline std::size_t occupied_bins(const std::array<double, 256>& hist) {
  return static_cast<std::size_t>(std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0.0; }));
}

}  // namespace detail

inline Lut8 equalization_lut(const Histogram& hist) {
  std::array<double, 256> h{};
  for (std::size_t v = 0; v < 256; ++v) h[v] = static_cast<double>(hist.bins[v]);
  const auto map = detail::cdf_mapping(h);
  Lut8 lut{};
  for (std::size_t v = 0; v < 256; ++v) lut[v] = quantize_u8(map[v]);
  return lut;
}

// Global histogram equalization.
inline LdrFrame hist_equalize(const LdrFrame& frame) {
  return apply_lut(frame, equalization_lut(histogram(frame)));
}

// Real-valued CLAHE mapping of one tile histogram. A tile holding a single
// grey level maps to the identity before and after clipping.
inline std::array<double, 256> clahe_tile_mapping(const std::array<double, 256>& hist, double clip_limit) {
  if (detail::occupied_bins(hist) <= 1) return detail::cdf_mapping(hist);
  return detail::cdf_mapping(detail::clip_histogram(hist, clip_limit));
}

// Contrast-limited adaptive histogram equalization. With a 1x1 grid a single
// mapping covers the frame; otherwise tile mappings are bilinearly
// interpolated between tile centres.
inline LdrFrame clahe(const LdrFrame& frame, const ClaheConfig& config) {
  config.validate();
  const std::size_t w = frame.width();
  const std::size_t h = frame.height();
  if (w < config.tiles_x || h < config.tiles_y) {
    throw Error(ErrorCode::frame_too_small,
                std::to_string(w) + "x" + std::to_string(h) + " frame for a " +
                    std::to_string(config.tiles_x) + "x" + std::to_string(config.tiles_y) + " grid");
  }
  const std::size_t tx = config.tiles_x;
  const std::size_t ty = config.tiles_y;
  std::vector<std::size_t> bx(tx + 1), by(ty + 1);
  for (std::size_t i = 0; i <= tx; ++i) bx[i] = i * w / tx;
  for (std::size_t j = 0; j <= ty; ++j) by[j] = j * h / ty;

  std::vector<std::array<double, 256>> maps(tx * ty);
  for (std::size_t j = 0; j < ty; ++j) {
    for (std::size_t i = 0; i < tx; ++i) {
      std::array<double, 256> hist{};
      for (std::size_t y = by[j]; y < by[j + 1]; ++y) {
        for (std::size_t x = bx[i]; x < bx[i + 1]; ++x) hist[frame(x, y)] += 1.0;
      }
      maps[j * tx + i] = clahe_tile_mapping(hist, config.clip_limit);
    }
  }

  LdrFrame out(w, h);
  if (tx == 1 && ty == 1) {
    Lut8 lut{};
    for (std::size_t v = 0; v < 256; ++v) lut[v] = quantize_u8(maps[0][v]);
    return apply_lut(frame, lut);
  }

  // Neighbouring tile indices and the weight of the upper one, per coordinate.
  struct Interp {
    std::size_t lo, hi;
    double t;
  };
  auto axis = [](const std::vector<std::size_t>& bounds, std::size_t n) {
    const std::size_t tiles = bounds.size() - 1;
    std::vector<double> centre(tiles);
    for (std::size_t i = 0; i < tiles; ++i) centre[i] = 0.5 * static_cast<double>(bounds[i] + bounds[i + 1] - 1);
    std::vector<Interp> table(n);
    for (std::size_t p = 0; p < n; ++p) {
      const double c = static_cast<double>(p);
      if (c <= centre.front()) {
        table[p] = {0, 0, 0.0};
      } else if (c >= centre.back()) {
        table[p] = {tiles - 1, tiles - 1, 0.0};
      } else {
        std::size_t i = 0;
        while (centre[i + 1] <= c) ++i;
        table[p] = {i, i + 1, (c - centre[i]) / (centre[i + 1] - centre[i])};
      }
    }
    return table;
  };
  const auto ix = axis(bx, w);
  const auto iy = axis(by, h);
  for (std::size_t y = 0; y < h; ++y) {
    const Interp& ry = iy[y];
    for (std::size_t x = 0; x < w; ++x) {
      const Interp& rx = ix[x];
      const std::uint8_t v = frame(x, y);
      const double top = (1.0 - rx.t) * maps[ry.lo * tx + rx.lo][v] + rx.t * maps[ry.lo * tx + rx.hi][v];
      const double bot = (1.0 - rx.t) * maps[ry.hi * tx + rx.lo][v] + rx.t * maps[ry.hi * tx + rx.hi][v];
      out(x, y) = quantize_u8((1.0 - ry.t) * top + ry.t * bot);
    }
  }
  return out;
}

// Plain adaptive histogram equalization: tiled CLAHE without clipping.
inline LdrFrame adaptive_hist_equalize(const LdrFrame& frame, std::size_t tiles_x, std::size_t tiles_y) {
  return clahe(frame, ClaheConfig{tiles_x, tiles_y, kNoClip});
}

namespace detail {

// Spread below which a real plane is treated as constant: sums of weights
// that add to one leave rounding residue of a few ulps on flat input.
inline bool is_flat(double lo, double hi) noexcept {
  return !(hi - lo > 1e-12 * std::max(1.0, std::max(std::fabs(lo), std::fabs(hi))));
}

}  // namespace detail

// Saturates the lowest s_low and highest s_high percent, then stretches the
// remaining range affinely onto [0, 255] (reals, no quantization).
inline RealPlane simplest_color_balance(const RealPlane& plane, double s_low, double s_high) {
  if (!(s_low >= 0.0) || !(s_high >= 0.0) || !(s_low + s_high < 100.0)) {
    throw Error(ErrorCode::invalid_percentiles,
                "s_low=" + std::to_string(s_low) + " s_high=" + std::to_string(s_high));
  }
  std::vector<double> sorted(plane.pixels().begin(), plane.pixels().end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto lo_idx = static_cast<std::size_t>(std::floor(n * s_low / 100.0));
  auto hi_idx = static_cast<std::size_t>(std::ceil(n * (100.0 - s_high) / 100.0));
  hi_idx = hi_idx == 0 ? 0 : hi_idx - 1;
  lo_idx = std::min(lo_idx, sorted.size() - 1);
  hi_idx = std::max(lo_idx, std::min(hi_idx, sorted.size() - 1));
  const double lo = sorted[lo_idx];
  const double hi = sorted[hi_idx];

  RealPlane out(plane.width(), plane.height(), 0.0);
  if (detail::is_flat(lo, hi)) return out;
  const double scale = 255.0 / (hi - lo);
  auto dst = out.pixels().begin();
  for (const double v : plane.pixels()) *dst++ = (std::clamp(v, lo, hi) - lo) * scale;
  return out;
}

struct PlaneStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) normalization
};

inline PlaneStats plane_stats(const RealPlane& plane) {
  detail::CompensatedSum sum;
  for (const double v : plane.pixels()) sum += v;
  const double n = static_cast<double>(plane.size());
  const double mean = sum.value() / n;
  detail::CompensatedSum sq;
  for (const double v : plane.pixels()) sq += (v - mean) * (v - mean);
  const double var = plane.size() > 1 ? sq.value() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var)};
}

// Three-sigma rule: clamp to [mean - k sd, mean + k sd] of this plane.
inline RealPlane sigma_clip(const RealPlane& plane, double k = 3.0) {
  if (!(k > 0.0)) throw Error(ErrorCode::invalid_config, "sigma_clip: k must be positive");
  const PlaneStats s = plane_stats(plane);
  const double lo = s.mean - k * s.stddev;
  const double hi = s.mean + k * s.stddev;
  RealPlane out(plane.width(), plane.height());
  auto dst = out.pixels().begin();
  for (const double v : plane.pixels()) *dst++ = std::clamp(v, lo, hi);
  return out;
}

// Maps [min, max] linearly onto [0, 255] with half-up rounding; a flat plane
// becomes mid-grey 127.
inline LdrFrame rescale_to_ldr(const RealPlane& plane) {
  const auto [lo_it, hi_it] = std::minmax_element(plane.pixels().begin(), plane.pixels().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  LdrFrame out(plane.width(), plane.height(), 127);
  if (detail::is_flat(lo, hi)) return out;
  const double scale = 255.0 / (hi - lo);
  auto dst = out.pixels().begin();
  for (const double v : plane.pixels()) *dst++ = quantize_u8((v - lo) * scale);
  return out;
}

// For each level v, the level u whose reference CDF is closest to the frame
// CDF at v, ties to the smaller u. CDFs are compared as exact fractions, so
// the reference may be a sum of several histograms.
inline Lut8 matching_lut(const Histogram& frame_hist, const Histogram& reference) {
  if (reference.bins.size() != 256 || frame_hist.bins.size() != 256) {
    throw Error(ErrorCode::dimension_mismatch, "histogram matching works on 256-bin histograms");
  }
  if (reference.total == 0) throw Error(ErrorCode::empty_reference, "reference histogram is empty");
  using Wide = unsigned __int128;
  const Wide tf = frame_hist.total;
  const Wide tr = reference.total;
  std::array<Wide, 256> ref_scaled{};  // cdf_ref(u) * total_frame
  std::uint64_t run = 0;
  for (std::size_t u = 0; u < 256; ++u) {
    run += reference.bins[u];
    ref_scaled[u] = Wide{run} * tf;
  }
  Lut8 lut{};
  std::uint64_t cdf = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    cdf += frame_hist.bins[v];
    const Wide target = Wide{cdf} * tr;  // cdf_frame(v) * total_ref
    const auto hi_it = std::lower_bound(ref_scaled.begin(), ref_scaled.end(), target);
    auto best = static_cast<std::size_t>(hi_it - ref_scaled.begin());
    if (best > 0) {
      const Wide below = ref_scaled[best - 1];
      const Wide d_lo = target - below;
      const Wide d_hi = ref_scaled[best] - target;
      if (d_lo <= d_hi) {
        // Leftmost level of the plateau just below the target.
        best = static_cast<std::size_t>(std::lower_bound(ref_scaled.begin(), ref_scaled.end(), below) -
                                        ref_scaled.begin());
      }
    }
    lut[v] = static_cast<std::uint8_t>(best);
  }
  return lut;
}

inline LdrFrame histogram_match(const LdrFrame& frame, const Histogram& reference) {
  return apply_lut(frame, matching_lut(histogram(frame), reference));
}

// Rolling history of one video stream: the histograms of the last W input
// frames (deflicker reference) and the last n output mean intensities in [0, 1].
class TemporalState {
 public:
  explicit TemporalState(std::size_t window = 100, std::size_t mean_window = 10)
      : window_(window), mean_window_(mean_window), sum_(256, 0) {
    if (window_ < 1 || mean_window_ < 1) {
      throw Error(ErrorCode::invalid_config, "temporal windows must hold at least one entry");
    }
  }

  std::size_t window() const noexcept { return window_; }
  std::size_t mean_window() const noexcept { return mean_window_; }
  std::size_t size() const noexcept { return refs_.size(); }
  bool empty() const noexcept { return refs_.empty(); }
  const std::deque<Histogram>& histograms() const noexcept { return refs_; }
  const std::deque<double>& recent_means() const noexcept { return means_; }

  // Sum of the buffered histograms. Its normalized CDF is that of their mean.
  Histogram reference() const {
    Histogram h;
    h.bins = sum_;
    h.total = total_;
    return h;
  }

  std::vector<double> mean_histogram() const {
    std::vector<double> m(256, 0.0);
    if (refs_.empty()) return m;
    for (std::size_t v = 0; v < 256; ++v) m[v] = static_cast<double>(sum_[v]) / static_cast<double>(refs_.size());
    return m;
  }

  void push_histogram(Histogram h) {
    if (h.bins.size() != 256) throw Error(ErrorCode::dimension_mismatch, "expected a 256-bin histogram");
    if (!refs_.empty() && h.total != refs_.front().total) {
      throw Error(ErrorCode::dimension_mismatch, "frame size changed within a stream");
    }
    if (refs_.size() == window_) {
      const Histogram& old = refs_.front();
      for (std::size_t v = 0; v < 256; ++v) sum_[v] -= old.bins[v];
      total_ -= old.total;
      refs_.pop_front();
    }
    for (std::size_t v = 0; v < 256; ++v) sum_[v] += h.bins[v];
    total_ += h.total;
    refs_.push_back(std::move(h));
  }

  void push_mean(double mean) {
    if (means_.size() == mean_window_) means_.pop_front();
    means_.push_back(mean);
  }

  void reset() {
    refs_.clear();
    means_.clear();
    std::fill(sum_.begin(), sum_.end(), 0);
    total_ = 0;
  }

 private:
  std::size_t window_;
  std::size_t mean_window_;
  std::deque<Histogram> refs_;
  std::vector<std::uint64_t> sum_;
  std::uint64_t total_ = 0;
  std::deque<double> means_;
};

inline double mean_intensity(const LdrFrame& frame) {
  std::uint64_t sum = 0;
  for (const std::uint8_t v : frame.pixels()) sum += v;
  return static_cast<double>(sum) / (255.0 * static_cast<double>(frame.size()));
}

// Matches the frame to the mean histogram of the buffered frames (passthrough
// on cold start), then buffers the frame's own pre-match histogram.
inline LdrFrame deflicker_update(TemporalState& state, const LdrFrame& frame) {
  Histogram own = histogram(frame);
  LdrFrame out = state.empty() ? frame : apply_lut(frame, matching_lut(own, state.reference()));
  state.push_histogram(std::move(own));
  state.push_mean(mean_intensity(out));
  return out;
}

}  // namespace tirtm
