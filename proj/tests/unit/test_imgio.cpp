#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include <png.h>
#include <tiffio.h>

#include "support.hpp"
#include "tirtm/imgio.hpp"

namespace tirtm {
namespace {

using test::TempDir;

void write_rgb16_png(const std::filesystem::path& path, std::uint32_t w, std::uint32_t h) {
  FILE* f = std::fopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(w * 6, 0x40);
  for (std::uint32_t y = 0; y < h; ++y) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

void write_gray8_tiff(const std::filesystem::path& path, std::uint32_t w, std::uint32_t h) {
  TIFF* tif = TIFFOpen(path.c_str(), "w");
  ASSERT_NE(tif, nullptr);
  TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, w);
  TIFFSetField(tif, TIFFTAG_IMAGELENGTH, h);
  TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, 1);
  TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, 8);
  TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, h);
  std::vector<std::uint8_t> row(w, 9);
  for (std::uint32_t y = 0; y < h; ++y) TIFFWriteScanline(tif, row.data(), y, 0);
  TIFFClose(tif);
}

void write_bytes(const std::filesystem::path& path, std::vector<unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(Image, RejectsBadDimensions) {
  EXPECT_THROW(HdrFrame(0, 3), Error);
  EXPECT_THROW(LdrFrame(2, 2, std::vector<std::uint8_t>(3)), Error);
  try {
    HdrFrame(2, 2, std::vector<std::uint16_t>(5));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}

TEST(Image, RowMajorLayout) {
  const HdrFrame f(3, 2, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(f(2, 0), 3);
  EXPECT_EQ(f(0, 1), 4);
  EXPECT_EQ(f.row(1)[2], 6);
}

TEST(LoadHdr, PngRoundTripTwoPixels) {
  TempDir dir;
  const HdrFrame f(2, 1, {0, 65535});
  save_hdr(dir / "a.png", f);
  const HdrFrame g = load_hdr(dir / "a.png");
  EXPECT_EQ(g.width(), 2u);
  EXPECT_EQ(g.height(), 1u);
  EXPECT_EQ(g.data(), (std::vector<std::uint16_t>{0, 65535}));
}

TEST(LoadHdr, BitExactPngAndTiff) {
  TempDir dir;
  std::mt19937_64 rng(7);
  const HdrFrame f = test::random_hdr(37, 23, rng);
  save_hdr(dir / "f.png", f);
  save_hdr(dir / "f.tiff", f);
  EXPECT_EQ(load_hdr(dir / "f.png"), f);
  EXPECT_EQ(load_hdr(dir / "f.tiff"), f);
}

TEST(LoadHdr, FullSensorFrame) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const HdrFrame f = test::random_hdr(640, 512, rng);
  save_hdr(dir / "flir.tif", f);
  const HdrFrame g = load_hdr(dir / "flir.tif");
  EXPECT_EQ(g.size(), 327680u);
  EXPECT_EQ(g, f);
}

TEST(LoadHdr, Errors) {
  TempDir dir;
  auto code_of = [](const std::filesystem::path& p) {
    try {
      (void)load_hdr(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io_failure;
  };
  EXPECT_EQ(code_of(dir / "missing.png"), ErrorCode::missing_file);

  write_bytes(dir / "photo.jpg", {0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, 'J', 'F', 'I', 'F', 0x00});
  EXPECT_EQ(code_of(dir / "photo.jpg"), ErrorCode::unsupported_format);

  save_ldr(dir / "eight.png", LdrFrame(4, 4, 3));
  EXPECT_EQ(code_of(dir / "eight.png"), ErrorCode::unsupported_format);

  write_rgb16_png(dir / "rgb.png", 4, 3);
  EXPECT_EQ(code_of(dir / "rgb.png"), ErrorCode::unsupported_format);

  write_gray8_tiff(dir / "eight.tif", 5, 2);
  EXPECT_EQ(code_of(dir / "eight.tif"), ErrorCode::unsupported_format);
}

TEST(SaveLdr, RoundTripRamp) {
  TempDir dir;
  const LdrFrame ramp(3, 3, {0, 32, 64, 96, 128, 160, 192, 224, 255});
  save_ldr(dir / "ramp.png", ramp);
  EXPECT_EQ(load_ldr(dir / "ramp.png"), ramp);
}

TEST(SaveLdr, RoundTripRandomFrames) {
  TempDir dir;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const LdrFrame f = test::random_ldr(1 + rng() % 40, 1 + rng() % 40, rng);
    save_ldr(dir / "r.png", f);
    ASSERT_EQ(load_ldr(dir / "r.png"), f);
  }
}

TEST(SaveLdr, HeaderDimensions) {
  TempDir dir;
  save_ldr(dir / "big.png", LdrFrame(640, 512, 17));
  const LdrFrame g = load_ldr(dir / "big.png");
  EXPECT_EQ(g.width(), 640u);
  EXPECT_EQ(g.height(), 512u);
}

TEST(SaveLdr, UnwritablePathIsIoFailure) {
  TempDir dir;
  write_bytes(dir / "plainfile", {1, 2, 3});
  try {
    save_ldr(dir / "plainfile" / "out.png", LdrFrame(2, 2, 0));
    FAIL() << "expected IoFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io_failure);
  }
  EXPECT_THROW(save_ldr(dir / "no" / "such" / "dir.png", LdrFrame(2, 2, 0)), Error);
}

TEST(Histogram, ConstantFrame) {
  const Histogram h = histogram(LdrFrame(4, 4, 7));
  ASSERT_EQ(h.bins.size(), 256u);
  EXPECT_EQ(h.bins[7], 16u);
  EXPECT_EQ(h.total, 16u);
  std::uint64_t others = 0;
  for (std::size_t v = 0; v < 256; ++v) others += v == 7 ? 0 : h.bins[v];
  EXPECT_EQ(others, 0u);
}

TEST(Histogram, Extremes) {
  const Histogram h = histogram(LdrFrame(2, 1, {0, 255}));
  EXPECT_EQ(h.bins[0], 1u);
  EXPECT_EQ(h.bins[255], 1u);
}

TEST(Histogram, MatchesBruteForceCount) {
  std::mt19937_64 rng(3);
  const LdrFrame f = test::random_ldr(16, 16, rng);
  const Histogram h = histogram(f);
  std::uint64_t sum = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < f.size(); ++i) count += f.pixels()[i] == v;
    EXPECT_EQ(h.bins[v], count);
    sum += h.bins[v];
  }
  EXPECT_EQ(sum, 256u);

  const HdrFrame g = test::random_hdr(9, 7, rng);
  const Histogram hg = histogram(g);
  EXPECT_EQ(hg.bins.size(), 65536u);
  std::uint64_t total = 0;
  for (auto b : hg.bins) total += b;
  EXPECT_EQ(total, 63u);
  EXPECT_EQ(hg.total, 63u);
}

TEST(LinearDownscale, Examples) {
  EXPECT_EQ(linear_downscale(HdrFrame(2, 1, {0, 65535})).data(), (std::vector<std::uint8_t>{0, 255}));
  EXPECT_EQ(linear_downscale(HdrFrame(3, 2, 1234)), LdrFrame(3, 2, 0));
  EXPECT_EQ(linear_downscale(HdrFrame(3, 1, {100, 150, 200})).data(), (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(LinearDownscale, MonotoneAndSpansEndpoints) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const HdrFrame f = test::random_hdr(8, 8, rng, 0, static_cast<std::uint16_t>(1 + rng() % 65535));
    const LdrFrame g = linear_downscale(f);
    const auto [lo, hi] = std::minmax_element(f.pixels().begin(), f.pixels().end());
    if (*lo == *hi) continue;
    EXPECT_EQ(*std::min_element(g.pixels().begin(), g.pixels().end()), 0);
    EXPECT_EQ(*std::max_element(g.pixels().begin(), g.pixels().end()), 255);
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (std::size_t j = 0; j < f.size(); ++j) {
        if (f.pixels()[i] <= f.pixels()[j]) {
          ASSERT_LE(g.pixels()[i], g.pixels()[j]);
        }
      }
    }
  }
}

TEST(LinearDownscale, MatchesRoundHalfUpFormula) {
  std::mt19937_64 rng(6);
  const HdrFrame f = test::random_hdr(31, 17, rng, 500, 40000);
  const LdrFrame g = linear_downscale(f);
  const auto [lo, hi] = std::minmax_element(f.pixels().begin(), f.pixels().end());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double v = (f.pixels()[i] - *lo) * 255.0 / (*hi - *lo);
    EXPECT_EQ(g.pixels()[i], static_cast<int>(std::floor(v + 0.5)));
  }
}

TEST(Sequence, LexicographicOrder) {
  TempDir dir;
  for (const char* name : {"frame_010.png", "frame_002.png", "frame_001.tiff"}) {
    save_hdr(dir / name, HdrFrame(2, 2, 1));
  }
  write_bytes(dir / "notes.txt", {'x'});
  const auto seq = list_sequence(dir.path());
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq[0].filename(), "frame_001.tiff");
  EXPECT_EQ(seq[1].filename(), "frame_002.png");
  EXPECT_EQ(seq[2].filename(), "frame_010.png");
}

TEST(Sequence, SidecarOverridesOrder) {
  TempDir dir;
  save_hdr(dir / "a.png", HdrFrame(2, 2, 1));
  save_hdr(dir / "b.png", HdrFrame(2, 2, 2));
  std::ofstream(dir / kSequenceManifest) << R"(["b.png", "a.png"])";
  const auto seq = list_sequence(dir.path());
  ASSERT_EQ(seq.size(), 2u);
  EXPECT_EQ(seq[0].filename(), "b.png");
  EXPECT_EQ(seq[1].filename(), "a.png");
}

TEST(Sequence, Errors) {
  TempDir dir;
  auto code_of = [](const std::filesystem::path& p) {
    try {
      (void)list_sequence(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io_failure;
  };
  EXPECT_EQ(code_of(dir.path()), ErrorCode::empty_input);
  EXPECT_EQ(code_of(dir / "nope"), ErrorCode::missing_file);
  std::ofstream(dir / kSequenceManifest) << R"({"not": "a list"})";
  EXPECT_EQ(code_of(dir.path()), ErrorCode::bad_manifest);
}

}  // namespace
}  // namespace tirtm
