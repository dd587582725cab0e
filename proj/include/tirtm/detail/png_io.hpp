#pragma once

#include <png.h>

#include <bit>
#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tirtm/errors.hpp"

namespace tirtm::detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decoded grayscale PNG. Samples are native-endian for 16-bit data.
struct PngGray {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;
};

namespace png_impl {

// Lives on the heap so nothing modified between setjmp and longjmp sits in a
// register-cached local.
struct ReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngGray image;
  std::vector<png_bytep> rows;
  std::string error;
  ~ReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct WriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::vector<png_bytep> rows;
  ~WriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

inline void quiet_warning(png_structp, png_const_charp) {}

}  // namespace png_impl

inline bool is_png_signature(const unsigned char* head, std::size_t n) {
  return n >= 8 && png_sig_cmp(head, 0, 8) == 0;
}

// Reads a PNG without any libpng colour transformations. Non-grayscale or
// alpha-carrying images are rejected here; callers check the bit depth.
inline PngGray read_png_gray(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::missing_file, path.string());

  auto st = std::make_unique<png_impl::ReadState>();
  st->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                   png_impl::quiet_warning);
  if (!st->png) throw Error(ErrorCode::io_failure, "png_create_read_struct failed");
  st->info = png_create_info_struct(st->png);
  if (!st->info) throw Error(ErrorCode::io_failure, "png_create_info_struct failed");

  if (setjmp(png_jmpbuf(st->png))) {
    throw Error(ErrorCode::unsupported_format, "corrupt PNG: " + path.string());
  }
  png_init_io(st->png, file.get());
  png_read_info(st->png, st->info);

  const auto color_type = png_get_color_type(st->png, st->info);
  const int bit_depth = png_get_bit_depth(st->png, st->info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(ErrorCode::unsupported_format,
                "not a single-channel grayscale PNG: " + path.string());
  }
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(st->png);
  png_read_update_info(st->png, st->info);

  st->image.width = png_get_image_width(st->png, st->info);
  st->image.height = png_get_image_height(st->png, st->info);
  st->image.bit_depth = bit_depth;
  const std::size_t stride = png_get_rowbytes(st->png, st->info);
  st->image.bytes.resize(stride * st->image.height);
  st->rows.resize(st->image.height);
  for (std::size_t y = 0; y < st->image.height; ++y) {
    st->rows[y] = st->image.bytes.data() + y * stride;
  }
  png_read_image(st->png, st->rows.data());
  png_read_end(st->png, nullptr);
  return std::move(st->image);
}

// bit_depth is 8 or 16; 16-bit samples are given native-endian.
inline void write_png_gray(const std::filesystem::path& path, std::uint32_t width,
                           std::uint32_t height, int bit_depth, const std::uint8_t* bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::io_failure, "cannot open for writing: " + path.string());

  auto st = std::make_unique<png_impl::WriteState>();
  st->png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                    png_impl::quiet_warning);
  if (!st->png) throw Error(ErrorCode::io_failure, "png_create_write_struct failed");
  st->info = png_create_info_struct(st->png);
  if (!st->info) throw Error(ErrorCode::io_failure, "png_create_info_struct failed");

  const std::size_t stride = static_cast<std::size_t>(width) * (bit_depth / 8);
  st->rows.resize(height);
  for (std::size_t y = 0; y < height; ++y) {
    st->rows[y] = const_cast<png_bytep>(bytes + y * stride);
  }

  if (setjmp(png_jmpbuf(st->png))) {
    throw Error(ErrorCode::io_failure, "PNG encode failed: " + path.string());
  }
  png_init_io(st->png, file.get());
  png_set_IHDR(st->png, st->info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(st->png, 3);
  png_write_info(st->png, st->info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(st->png);
  png_write_image(st->png, st->rows.data());
  png_write_end(st->png, nullptr);

  if (std::fflush(file.get()) != 0 || std::ferror(file.get())) {
    throw Error(ErrorCode::io_failure, "write failed: " + path.string());
  }
}

}  // namespace tirtm::detail
