#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cci {

// Standardized model input: 3 planes of size x size, CHW order.
struct ImageTensor {
  std::size_t size = 0;
  std::vector<float> data;

  ImageTensor() = default;
  explicit ImageTensor(std::size_t s, float fill = 0.0f) : size(s), data(3 * s * s, fill) {}

  std::size_t pixel_count() const { return size * size; }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * size + y) * size + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * size + y) * size + x]; }
  std::span<float> plane(std::size_t c) { return {data.data() + c * size * size, size * size}; }
  std::span<const float> plane(std::size_t c) const { return {data.data() + c * size * size, size * size}; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Real-valued map on a square lattice, row-major.
struct ScalarMap {
  std::size_t size = 0;
  std::vector<float> values;

  ScalarMap() = default;
  explicit ScalarMap(std::size_t s, float fill = 0.0f) : size(s), values(s * s, fill) {}

  float& at(std::size_t y, std::size_t x) { return values[y * size + x]; }
  float at(std::size_t y, std::size_t x) const { return values[y * size + x]; }

  friend bool operator==(const ScalarMap&, const ScalarMap&) = default;
};

}  // namespace cci
