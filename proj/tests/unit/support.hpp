#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tirtm/image.hpp"

namespace tirtm::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tirtm-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline HdrFrame random_hdr(std::size_t w, std::size_t h, std::mt19937_64& rng, std::uint16_t lo = 0,
                           std::uint16_t hi = 65535) {
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<std::uint16_t> px(w * h);
  for (auto& v : px) v = static_cast<std::uint16_t>(d(rng));
  return HdrFrame(w, h, std::move(px));
}

inline LdrFrame random_ldr(std::size_t w, std::size_t h, std::mt19937_64& rng, int lo = 0, int hi = 255) {
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<std::uint8_t> px(w * h);
  for (auto& v : px) v = static_cast<std::uint8_t>(d(rng));
  return LdrFrame(w, h, std::move(px));
}

inline RealPlane random_plane(std::size_t w, std::size_t h, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> px(w * h);
  for (auto& v : px) v = d(rng);
  return RealPlane(w, h, std::move(px));
}

// Smooth thermal-looking scene: vertical gradient, a few warm blobs, sensor noise.
inline HdrFrame thermal_scene(std::size_t w, std::size_t h, std::uint64_t seed, double offset = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(h));
  std::uniform_real_distribution<double> ur(4.0, 20.0);
  std::uniform_real_distribution<double> ua(1500.0, 9000.0);
  struct Blob {
    double x, y, r, a;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 6; ++i) blobs.push_back({ux(rng), uy(rng), ur(rng), ua(rng)});
  std::normal_distribution<double> noise(0.0, 25.0);
  std::vector<std::uint16_t> px(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double v = 21000.0 + offset + 1800.0 * static_cast<double>(y) / static_cast<double>(h) +
                 400.0 * std::sin(static_cast<double>(x) / 17.0) * std::cos(static_cast<double>(y) / 23.0);
      for (const auto& b : blobs) {
        const double dx = static_cast<double>(x) - b.x;
        const double dy = static_cast<double>(y) - b.y;
        v += b.a * std::exp(-(dx * dx + dy * dy) / (2.0 * b.r * b.r));
      }
      v += noise(rng);
      px[y * w + x] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    }
  }
  return HdrFrame(w, h, std::move(px));
}

}  // namespace tirtm::test
