#pragma once

// Multi-scale Retinex: Gaussian surround estimation and log-domain
// reflectance, combined over several surround scales.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <type_traits>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "tirtm/errors.hpp"
#include "tirtm/image.hpp"

namespace tirtm {

struct RetinexConfig {
  // Surround sigmas in pixels, strictly increasing.
  std::vector<double> scales{15.0, 80.0, 250.0};
  // Non-negative, one per scale, summing to 1.
  std::vector<double> weights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  // Added before each logarithm, in 16-bit intensity units.
  double epsilon = 1.0;

  void validate() const {
    if (scales.empty()) throw Error(ErrorCode::invalid_config, "retinex: no scales");
    if (weights.size() != scales.size()) {
      throw Error(ErrorCode::invalid_config, "retinex: weights and scales differ in length");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
        throw Error(ErrorCode::non_positive_sigma, "retinex: scales must be positive");
      }
      if (i > 0 && !(scales[i] > scales[i - 1])) {
        throw Error(ErrorCode::invalid_config, "retinex: scales must be strictly increasing");
      }
      if (!(weights[i] >= 0.0)) {
        throw Error(ErrorCode::invalid_config, "retinex: weights must be non-negative");
      }
      sum += weights[i];
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::invalid_config, "retinex: weights must sum to 1");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw Error(ErrorCode::invalid_config, "retinex: epsilon must be positive");
    }
  }
};

// Sampled Gaussian over [-r, r] with r = ceil(3 sigma), normalized to sum 1.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::non_positive_sigma, "sigma = " + std::to_string(sigma));
  }
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace detail {

// Weights of one clamped 1-D convolution, folded onto the valid source range.
// Taps that fall before index 0 (after n-1) are replicated edge samples, so
// their total weight is applied to the first (last) sample once.
struct FoldedTaps {
  std::ptrdiff_t first = 0;  // first source index with its own tap
  std::ptrdiff_t last = -1;  // last source index with its own tap
  double head = 0.0;         // extra weight on source index 0
  double tail = 0.0;         // extra weight on source index n-1
  std::ptrdiff_t tap0 = 0;   // kernel index used for source index `first`
};

class FoldedKernel {
 public:
  explicit FoldedKernel(std::vector<double> kernel) : k_(std::move(kernel)) {
    radius_ = static_cast<std::ptrdiff_t>(k_.size() / 2);
    prefix_.assign(k_.size() + 1, 0.0);
    for (std::size_t i = 0; i < k_.size(); ++i) prefix_[i + 1] = prefix_[i] + k_[i];
  }

  std::span<const double> taps() const noexcept { return k_; }

  // Taps for output index `out` over a signal of length n.
  FoldedTaps fold(std::ptrdiff_t out, std::ptrdiff_t n) const noexcept {
    const auto size = static_cast<std::ptrdiff_t>(k_.size());
    // Kernel index i touches source out + i - radius.
    const std::ptrdiff_t lo_i = std::clamp<std::ptrdiff_t>(radius_ - out, 0, size);
    const std::ptrdiff_t hi_i = std::clamp<std::ptrdiff_t>(radius_ + (n - 1) - out, -1, size - 1);
    FoldedTaps t;
    t.head = prefix_[static_cast<std::size_t>(lo_i)];
    t.tail = prefix_[k_.size()] - prefix_[static_cast<std::size_t>(hi_i + 1)];
    t.first = out + lo_i - radius_;
    t.last = out + hi_i - radius_;
    t.tap0 = lo_i;
    return t;
  }

 private:
  std::vector<double> k_;
  std::vector<double> prefix_;
  std::ptrdiff_t radius_ = 0;
};

// Vertical pass over columns [x0, x1): every output row is an axpy of source
// rows, which keeps the inner loop vectorizable.
inline void convolve_columns(const RealPlane& src, RealPlane& dst, const FoldedKernel& kernel,
                             std::size_t x0, std::size_t x1) {
  const auto h = static_cast<std::ptrdiff_t>(src.height());
  const std::size_t span = x1 - x0;
  const auto taps = kernel.taps();
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    double* out = dst.row(static_cast<std::size_t>(y)).data() + x0;
    const FoldedTaps f = kernel.fold(y, h);
    const double* top = src.row(0).data() + x0;
    const double* bottom = src.row(static_cast<std::size_t>(h - 1)).data() + x0;
    for (std::size_t x = 0; x < span; ++x) out[x] = f.head * top[x] + f.tail * bottom[x];
    std::ptrdiff_t tap = f.tap0;
    for (std::ptrdiff_t sy = f.first; sy <= f.last; ++sy, ++tap) {
      const double w = taps[static_cast<std::size_t>(tap)];
      const double* in = src.row(static_cast<std::size_t>(sy)).data() + x0;
      for (std::size_t x = 0; x < span; ++x) out[x] += w * in[x];
    }
  }
}

// Same pass for exactly kLanes columns with the accumulators held in registers.
template <std::size_t kLanes>
void convolve_lanes(const RealPlane& src, RealPlane& dst, const FoldedKernel& kernel, std::size_t x0) {
  const auto h = static_cast<std::ptrdiff_t>(src.height());
  const std::size_t stride = src.width();
  const double* base = src.pixels().data() + x0;
  const double* bottom = base + static_cast<std::size_t>(h - 1) * stride;
  const double* taps = kernel.taps().data();
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    const FoldedTaps f = kernel.fold(y, h);
    double acc[kLanes];
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] = f.head * base[l] + f.tail * bottom[l];
    const double* in = base + static_cast<std::size_t>(f.first) * stride;
    const double* w = taps + f.tap0;
    for (std::ptrdiff_t n = f.last - f.first + 1; n > 0; --n, in += stride, ++w) {
      const double wv = *w;
      for (std::size_t l = 0; l < kLanes; ++l) acc[l] += wv * in[l];
    }
    double* out = dst.row(static_cast<std::size_t>(y)).data() + x0;
    for (std::size_t l = 0; l < kLanes; ++l) out[l] = acc[l];
  }
}

inline RealPlane convolve_vertical(const RealPlane& src, const FoldedKernel& kernel) {
  constexpr std::size_t kLanes = 16;
  RealPlane dst(src.width(), src.height());
  std::size_t x0 = 0;
  for (; x0 + kLanes <= src.width(); x0 += kLanes) convolve_lanes<kLanes>(src, dst, kernel, x0);
  if (x0 < src.width()) convolve_columns(src, dst, kernel, x0, src.width());
  return dst;
}

// Smallest 5-smooth length >= n; FFTW is fastest on those.
inline std::size_t fft_length(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t v = m;
    for (const std::size_t p : {2u, 3u, 5u}) {
      while (v % p == 0) v /= p;
    }
    if (v == 1) return m;
  }
}

// FFTW's planner is not reentrant; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
struct FftwPlanDeleter {
  void operator()(fftw_plan p) const noexcept { fftw_destroy_plan(p); }
};
using FftwPlan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, FftwPlanDeleter>;

// Horizontal pass over every row by FFT. The in-range taps, |d| <= min(r, w-1),
// are a circular convolution of the zero-padded row; the replicated-edge taps
// are added afterwards as head * row[0] + tail * row[w-1].
inline RealPlane convolve_rows_fft(const RealPlane& src, const FoldedKernel& kernel) {
  const auto taps = kernel.taps();
  const std::size_t w = src.width();
  const std::size_t h = src.height();
  const std::size_t r = taps.size() / 2;
  const std::size_t m = std::min(r, w - 1);
  const std::size_t len = fft_length(w + m);
  const std::size_t bins = len / 2 + 1;

  std::unique_ptr<double, FftwDeleter> lines(fftw_alloc_real(len * h));
  std::unique_ptr<fftw_complex, FftwDeleter> spectra(fftw_alloc_complex(bins * h));
  std::unique_ptr<double, FftwDeleter> g(fftw_alloc_real(len));
  std::unique_ptr<fftw_complex, FftwDeleter> g_spec(fftw_alloc_complex(bins));
  if (!lines || !spectra || !g || !g_spec) throw std::bad_alloc();

  FftwPlan forward, inverse, kernel_plan;
  {
    const std::lock_guard lock(fftw_planner_mutex());
    int n = static_cast<int>(len);
    const int count = static_cast<int>(h);
    const int ilen = static_cast<int>(len);
    const int ibins = static_cast<int>(bins);
    forward.reset(fftw_plan_many_dft_r2c(1, &n, count, lines.get(), nullptr, 1, ilen, spectra.get(), nullptr, 1,
                                         ibins, FFTW_ESTIMATE));
    inverse.reset(fftw_plan_many_dft_c2r(1, &n, count, spectra.get(), nullptr, 1, ibins, lines.get(), nullptr, 1,
                                         ilen, FFTW_ESTIMATE));
    kernel_plan.reset(fftw_plan_dft_r2c_1d(n, g.get(), g_spec.get(), FFTW_ESTIMATE));
  }
  if (!forward || !inverse || !kernel_plan) throw std::runtime_error("FFTW planning failed");

  std::fill(g.get(), g.get() + len, 0.0);
  g.get()[0] = taps[r];
  for (std::size_t d = 1; d <= m; ++d) {
    g.get()[d] = taps[r - d];
    g.get()[len - d] = taps[r + d];
  }
  fftw_execute(kernel_plan.get());

  for (std::size_t y = 0; y < h; ++y) {
    const auto row = src.row(y);
    double* line = lines.get() + y * len;
    std::copy(row.begin(), row.end(), line);
    std::fill(line + w, line + len, 0.0);
  }
  fftw_execute(forward.get());
  const double scale = 1.0 / static_cast<double>(len);
  for (std::size_t y = 0; y < h; ++y) {
    fftw_complex* line = spectra.get() + y * bins;
    for (std::size_t c = 0; c < bins; ++c) {
      const double kr = g_spec.get()[c][0] * scale;
      const double ki = g_spec.get()[c][1] * scale;
      const double re = line[c][0];
      const double im = line[c][1];
      line[c][0] = re * kr - im * ki;
      line[c][1] = re * ki + im * kr;
    }
  }
  fftw_execute(inverse.get());

  std::vector<FoldedTaps> folds(w);
  for (std::size_t x = 0; x < w; ++x) {
    folds[x] = kernel.fold(static_cast<std::ptrdiff_t>(x), static_cast<std::ptrdiff_t>(w));
  }
  RealPlane dst(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto row = src.row(y);
    const double* line = lines.get() + y * len;
    double* out = dst.row(y).data();
    for (std::size_t x = 0; x < w; ++x) out[x] = line[x] + folds[x].head * row[0] + folds[x].tail * row[w - 1];
  }
  return dst;
}

inline RealPlane transpose(const RealPlane& src) {
  RealPlane dst(src.height(), src.width());
  constexpr std::size_t kBlock = 32;
  for (std::size_t y0 = 0; y0 < src.height(); y0 += kBlock) {
    for (std::size_t x0 = 0; x0 < src.width(); x0 += kBlock) {
      const std::size_t y1 = std::min(src.height(), y0 + kBlock);
      const std::size_t x1 = std::min(src.width(), x0 + kBlock);
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) dst(y, x) = src(x, y);
      }
    }
  }
  return dst;
}

}  // namespace detail

// Kernels with at least this many in-range taps go through the FFT path.
inline constexpr std::size_t kFftMinTaps = 48;

// Direct evaluation of the separable convolution, for any kernel size.
inline RealPlane gaussian_blur_direct(const RealPlane& plane, double sigma) {
  const detail::FoldedKernel kernel(gaussian_kernel(sigma));
  // Horizontal pass runs as a vertical pass on the transpose.
  RealPlane vertical = detail::convolve_vertical(plane, kernel);
  return detail::transpose(detail::convolve_vertical(detail::transpose(vertical), kernel));
}

// Separable Gaussian, kernel truncated at ceil(3 sigma) and renormalized,
// borders by edge replication. Wide kernels are applied by FFT, so results
// agree with gaussian_blur_direct to rounding; both are clamped to the input
// range, which a normalized non-negative kernel cannot leave.
inline RealPlane gaussian_blur(const RealPlane& plane, double sigma) {
  const detail::FoldedKernel kernel(gaussian_kernel(sigma));
  const std::size_t reach = kernel.taps().size();
  const auto use_fft = [&](std::size_t n) { return std::min(reach, 2 * n - 1) >= kFftMinTaps; };
  RealPlane rows = use_fft(plane.width())
                       ? detail::convolve_rows_fft(plane, kernel)
                       : detail::transpose(detail::convolve_vertical(detail::transpose(plane), kernel));
  RealPlane out = use_fft(plane.height()) ? detail::transpose(detail::convolve_rows_fft(detail::transpose(rows), kernel))
                                          : detail::convolve_vertical(rows, kernel);
  const auto [lo, hi] = std::minmax_element(plane.pixels().begin(), plane.pixels().end());
  for (double& v : out.pixels()) v = std::clamp(v, *lo, *hi);
  return out;
}

// R = log(I + eps) - log(G_sigma * I + eps), natural logarithm.
inline RealPlane single_scale_retinex(const HdrFrame& frame, double sigma, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_config, "epsilon must be positive");
  const RealPlane lifted = to_real(frame);
  RealPlane out = gaussian_blur(lifted, sigma);
  auto in = lifted.pixels();
  auto px = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = std::log(in[i] + epsilon) - std::log(px[i] + epsilon);
  }
  return out;
}

inline RealPlane multi_scale_retinex(const HdrFrame& frame, const RetinexConfig& config) {
  config.validate();
  const RealPlane lifted = to_real(frame);
  std::vector<double> log_in(lifted.size());
  for (std::size_t i = 0; i < log_in.size(); ++i) {
    log_in[i] = std::log(lifted.pixels()[i] + config.epsilon);
  }
  RealPlane out(frame.width(), frame.height(), 0.0);
  auto acc = out.pixels();
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    const double w = config.weights[s];
    if (w == 0.0) continue;
    const RealPlane surround = gaussian_blur(lifted, config.scales[s]);
    auto g = surround.pixels();
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] += w * (log_in[i] - std::log(g[i] + config.epsilon));
    }
  }
  return out;
}

}  // namespace tirtm
