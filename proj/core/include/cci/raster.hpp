#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cci {

// 8-bit interleaved image, row-major, `channels` samples per pixel.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(std::size_t w, std::size_t h, std::size_t c = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  std::size_t area() const { return width * height; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

// Boolean mask on a pixel lattice, row-major.
struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h, bool fill = false) : width(w), height(h), bits(w * h, fill ? 1 : 0) {}

  bool get(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  void set(std::size_t x, std::size_t y, bool v) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  BinaryMask complement() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// PNG codec. Reading normalizes to 8-bit RGB (or 8-bit gray with
// read_png_gray); palette, 16-bit and alpha inputs are converted.
// Writing uses fixed zlib settings and no timestamp chunks, so identical
// rasters always encode to identical bytes.
Raster read_png(const std::filesystem::path& path);
Raster decode_png(std::span<const std::uint8_t> bytes);
Raster read_png_gray(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Raster& raster);
void write_png(const std::filesystem::path& path, const Raster& raster);

// Nonzero = foreground; resized to (width, height) by nearest neighbour.
BinaryMask read_mask_png(const std::filesystem::path& path, std::size_t width, std::size_t height);
Raster mask_to_raster(const BinaryMask& mask);

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t width, std::size_t height);

}  // namespace cci
