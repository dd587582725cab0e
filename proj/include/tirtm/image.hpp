#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tirtm/errors.hpp"

namespace tirtm {

// Row-major single-channel image. Dimensions are fixed at construction and
// always positive; the pixel buffer always holds width * height elements.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height) {
    check_dims();
    data_.assign(width * height, fill);
  }

  Image(std::size_t width, std::size_t height, std::vector<T> pixels)
      : width_(width), height_(height), data_(std::move(pixels)) {
    check_dims();
    if (data_.size() != width_ * height_) {
      throw Error(ErrorCode::dimension_mismatch,
                  "pixel buffer of " + std::to_string(data_.size()) + " elements for a " +
                      std::to_string(width_) + "x" + std::to_string(height_) + " image");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t x, std::size_t y) noexcept { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const noexcept { return data_[y * width_ + x]; }

  std::span<T> row(std::size_t y) noexcept { return {data_.data() + y * width_, width_}; }
  std::span<const T> row(std::size_t y) const noexcept {
    return {data_.data() + y * width_, width_};
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  void check_dims() const {
    if (width_ == 0 || height_ == 0) {
      throw Error(ErrorCode::dimension_mismatch, "image dimensions must be positive");
    }
  }

  std::size_t width_;
  std::size_t height_;
  std::vector<T> data_;
};

// 16 bpp sensor frame.
using HdrFrame = Image<std::uint16_t>;
// 8 bpp display frame.
using LdrFrame = Image<std::uint8_t>;
// Real-valued intermediate (log-domain Retinex output and friends).
using RealPlane = Image<double>;

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b, std::string_view what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string(what) + ": " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

// Round half up, then saturate to the 8-bit range. This is the only rule used
// to quantize reals to display values.
inline std::uint8_t quantize_u8(double v) noexcept {
  const double r = std::floor(v + 0.5);
  if (!(r > 0.0)) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

template <typename T>
RealPlane to_real(const Image<T>& frame) {
  std::vector<double> out(frame.pixels().begin(), frame.pixels().end());
  return RealPlane(frame.width(), frame.height(), std::move(out));
}

}  // namespace tirtm
