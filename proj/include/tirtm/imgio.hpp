#pragma once

// Frame ingest and emit, histograms, and the naive linear-downscaling baseline.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tirtm/detail/png_io.hpp"
#include "tirtm/detail/tiff_io.hpp"
#include "tirtm/errors.hpp"
#include "tirtm/image.hpp"

namespace tirtm {

// bins[v] counts pixels with value v; 256 bins for 8-bit, 65536 for 16-bit.
struct Histogram {
  std::vector<std::uint64_t> bins;
  std::uint64_t total = 0;

  friend bool operator==(const Histogram&, const Histogram&) = default;
};

template <typename T>
  requires std::is_same_v<T, std::uint8_t> || std::is_same_v<T, std::uint16_t>
Histogram histogram(const Image<T>& frame) {
  Histogram h;
  h.bins.assign(std::size_t{std::numeric_limits<T>::max()} + 1, 0);
  for (const T v : frame.pixels()) ++h.bins[v];
  h.total = frame.size();
  return h;
}

// out = round((in - min) * 255 / (max - min)); a constant frame maps to 0.
// Evaluated in integers so the half-up rounding is exact.
inline LdrFrame linear_downscale(const HdrFrame& frame) {
  const auto [lo_it, hi_it] = std::minmax_element(frame.pixels().begin(), frame.pixels().end());
  const std::uint64_t lo = *lo_it;
  const std::uint64_t range = *hi_it - lo;
  LdrFrame out(frame.width(), frame.height());
  if (range == 0) return out;
  auto dst = out.pixels().begin();
  for (const std::uint16_t v : frame.pixels()) {
    const std::uint64_t num = (v - lo) * 255 * 2 + range;
    *dst++ = static_cast<std::uint8_t>(num / (2 * range));
  }
  return out;
}

namespace detail {

enum class Container { png, tiff, unknown };

inline Container sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, path.string());
  std::array<unsigned char, 8> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  const auto n = static_cast<std::size_t>(in.gcount());
  if (is_png_signature(head.data(), n)) return Container::png;
  if (is_tiff_signature(head.data(), n)) return Container::tiff;
  return Container::unknown;
}

inline void require_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::missing_file, path.string());
  }
}

}  // namespace detail

// Loads a single-channel 16-bit PNG or TIFF. All 16 bits are treated as
// significant; no rescaling of 14-bit sensor data is attempted.
inline HdrFrame load_hdr(const std::filesystem::path& path) {
  detail::require_file(path);
  switch (detail::sniff(path)) {
    case detail::Container::png: {
      auto png = detail::read_png_gray(path);
      if (png.bit_depth != 16) {
        throw Error(ErrorCode::unsupported_format,
                    std::to_string(png.bit_depth) + "-bit PNG, expected 16-bit: " + path.string());
      }
      std::vector<std::uint16_t> px(std::size_t{png.width} * png.height);
      std::memcpy(px.data(), png.bytes.data(), px.size() * sizeof(std::uint16_t));
      return HdrFrame(png.width, png.height, std::move(px));
    }
    case detail::Container::tiff: {
      auto tif = detail::read_tiff_gray16(path);
      return HdrFrame(tif.width, tif.height, std::move(tif.samples));
    }
    case detail::Container::unknown: break;
  }
  throw Error(ErrorCode::unsupported_format, "unknown container: " + path.string());
}

inline LdrFrame load_ldr(const std::filesystem::path& path) {
  detail::require_file(path);
  if (detail::sniff(path) != detail::Container::png) {
    throw Error(ErrorCode::unsupported_format, "expected 8-bit PNG: " + path.string());
  }
  auto png = detail::read_png_gray(path);
  if (png.bit_depth != 8) {
    throw Error(ErrorCode::unsupported_format,
                std::to_string(png.bit_depth) + "-bit PNG, expected 8-bit: " + path.string());
  }
  return LdrFrame(png.width, png.height, std::move(png.bytes));
}

inline void save_ldr(const std::filesystem::path& path, const LdrFrame& frame) {
  detail::write_png_gray(path, static_cast<std::uint32_t>(frame.width()),
                         static_cast<std::uint32_t>(frame.height()), 8, frame.data().data());
}

// 16-bit PNG, or TIFF when the extension says so.
inline void save_hdr(const std::filesystem::path& path, const HdrFrame& frame) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto w = static_cast<std::uint32_t>(frame.width());
  const auto h = static_cast<std::uint32_t>(frame.height());
  if (ext == ".tif" || ext == ".tiff") {
    detail::write_tiff_gray16(path, w, h, frame.data().data());
  } else {
    detail::write_png_gray(path, w, h, 16, reinterpret_cast<const std::uint8_t*>(frame.data().data()));
  }
}

// Name of the optional sidecar that fixes frame order explicitly.
inline constexpr const char* kSequenceManifest = "sequence.json";

inline bool is_frame_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

// Frames of a sequence directory: the sidecar's list when present, otherwise
// every PNG/TIFF in lexicographic filename order.
inline std::vector<std::filesystem::path> list_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::missing_file, dir.string());

  std::vector<fs::path> frames;
  const fs::path manifest = dir / kSequenceManifest;
  if (fs::is_regular_file(manifest, ec)) {
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::bad_manifest, manifest.string() + ": " + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::bad_manifest, manifest.string() + ": expected a list");
    for (const auto& name : j) {
      if (!name.is_string()) {
        throw Error(ErrorCode::bad_manifest, manifest.string() + ": entries must be filenames");
      }
      frames.push_back(dir / name.get<std::string>());
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_frame_file(entry.path())) frames.push_back(entry.path());
    }
    std::sort(frames.begin(), frames.end(), [](const fs::path& a, const fs::path& b) {
      return a.filename().string() < b.filename().string();
    });
  }
  if (frames.empty()) throw Error(ErrorCode::empty_input, "no frames in " + dir.string());
  return frames;
}

}  // namespace tirtm
