#pragma once

#include <tiffio.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "tirtm/errors.hpp"

namespace tirtm::detail {

inline void silence_libtiff() {
  static std::once_flag once;
  std::call_once(once, [] {
    TIFFSetErrorHandler(nullptr);
    TIFFSetWarningHandler(nullptr);
  });
}

struct TiffCloser {
  void operator()(TIFF* t) const noexcept {
    if (t) TIFFClose(t);
  }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

inline bool is_tiff_signature(const unsigned char* head, std::size_t n) {
  if (n < 4) return false;
  return (head[0] == 'I' && head[1] == 'I' && head[2] == 42 && head[3] == 0) ||
         (head[0] == 'M' && head[1] == 'M' && head[2] == 0 && head[3] == 42);
}

struct TiffGray16 {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint16_t> samples;
};

// Strip-organized, single-sample, 16-bit unsigned, min-is-black.
inline TiffGray16 read_tiff_gray16(const std::filesystem::path& path) {
  silence_libtiff();
  TiffPtr tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw Error(ErrorCode::unsupported_format, "unreadable TIFF: " + path.string());

  std::uint32_t width = 0, height = 0;
  std::uint16_t spp = 1, bps = 0, format = SAMPLEFORMAT_UINT, photometric = PHOTOMETRIC_MINISBLACK;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetField(tif.get(), TIFFTAG_PHOTOMETRIC, &photometric);

  if (spp != 1 || bps != 16 || format != SAMPLEFORMAT_UINT ||
      photometric != PHOTOMETRIC_MINISBLACK || TIFFIsTiled(tif.get())) {
    throw Error(ErrorCode::unsupported_format,
                "expected strip-based 16-bit single-channel TIFF: " + path.string());
  }
  if (width == 0 || height == 0) {
    throw Error(ErrorCode::unsupported_format, "empty TIFF: " + path.string());
  }

  TiffGray16 out{width, height, std::vector<std::uint16_t>(std::size_t{width} * height)};
  if (static_cast<std::size_t>(TIFFScanlineSize(tif.get())) != std::size_t{width} * 2) {
    throw Error(ErrorCode::unsupported_format, "unexpected TIFF scanline size: " + path.string());
  }
  for (std::uint32_t y = 0; y < height; ++y) {
    if (TIFFReadScanline(tif.get(), out.samples.data() + std::size_t{y} * width, y, 0) < 0) {
      throw Error(ErrorCode::unsupported_format, "TIFF decode failed: " + path.string());
    }
  }
  return out;
}

inline void write_tiff_gray16(const std::filesystem::path& path, std::uint32_t width,
                              std::uint32_t height, const std::uint16_t* samples) {
  silence_libtiff();
  TiffPtr tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) throw Error(ErrorCode::io_failure, "cannot open for writing: " + path.string());
  TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, width);
  TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, height);
  TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, 1);
  TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, 16);
  TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_UINT);
  TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif.get(), TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, height);
  std::vector<std::uint16_t> row(width);
  for (std::uint32_t y = 0; y < height; ++y) {
    std::copy_n(samples + std::size_t{y} * width, width, row.begin());
    if (TIFFWriteScanline(tif.get(), row.data(), y, 0) < 0) {
      throw Error(ErrorCode::io_failure, "TIFF write failed: " + path.string());
    }
  }
  if (!TIFFFlush(tif.get())) throw Error(ErrorCode::io_failure, "TIFF flush failed");
}

}  // namespace tirtm::detail
