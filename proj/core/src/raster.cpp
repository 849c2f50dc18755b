#include "cci/raster.hpp"

#include <png.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "cci/error.hpp"

namespace cci {
namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Raster decode(std::span<const std::uint8_t> bytes, png_uint_32 format, std::size_t channels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw InputError(std::string("invalid PNG: ") + image.message);
  image.format = format;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw InputError("zero-area PNG");
  }
  Raster out(image.width, image.height, channels);
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&image, &black, out.pixels.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw InputError("PNG decode failed: " + message);
  }
  return out;
}

}  // namespace

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

BinaryMask BinaryMask::complement() const {
  BinaryMask out(width, height);
  for (std::size_t i = 0; i < bits.size(); ++i) out.bits[i] = bits[i] ? 0 : 1;
  return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) { return decode(bytes, PNG_FORMAT_RGB, 3); }

Raster read_png(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

Raster read_png_gray(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode(bytes, PNG_FORMAT_GRAY, 1);
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw InputError("PNG encoder supports 1 or 3 channels");
  if (raster.area() == 0) throw InputError("cannot encode zero-area raster");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = raster.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, raster.pixels.data(), 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.pixels.data(), 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode_png(raster);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t width, std::size_t height) {
  if (mask.width == width && mask.height == height) return mask;
  if (mask.width == 0 || mask.height == 0) throw InputError("cannot resize empty mask");
  BinaryMask out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(mask.height - 1, y * mask.height / height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(mask.width - 1, x * mask.width / width);
      out.set(x, y, mask.get(sx, sy));
    }
  }
  return out;
}

BinaryMask read_mask_png(const std::filesystem::path& path, std::size_t width, std::size_t height) {
  const Raster gray = read_png_gray(path);
  BinaryMask mask(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) mask.bits[i] = gray.pixels[i] != 0 ? 1 : 0;
  return resize_nearest(mask, width, height);
}

Raster mask_to_raster(const BinaryMask& mask) {
  Raster out(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) out.pixels[i] = mask.bits[i] ? 255 : 0;
  return out;
}

}  // namespace cci
