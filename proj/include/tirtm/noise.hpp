#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "tirtm/errors.hpp"
#include "tirtm/image.hpp"

namespace tirtm {

// splitmix64 finalizer; decorrelates per-frame seeds drawn from one base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Zero-mean additive Poisson noise: in + (Poisson(lambda) - lambda), rounded
// half up and clamped to the 16-bit range. Deterministic for a given seed.
inline HdrFrame add_poisson_noise(const HdrFrame& frame, double lambda, std::uint64_t seed) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::invalid_config, "noise lambda must be positive");
  }
  std::mt19937_64 rng(seed);
  std::poisson_distribution<std::int64_t> poisson(lambda);
  HdrFrame out(frame.width(), frame.height());
  auto dst = out.pixels().begin();
  for (const std::uint16_t v : frame.pixels()) {
    const double noisy = std::floor(static_cast<double>(v) + static_cast<double>(poisson(rng)) - lambda + 0.5);
    *dst++ = static_cast<std::uint16_t>(std::clamp(noisy, 0.0, 65535.0));
  }
  return out;
}

}  // namespace tirtm
