#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cci {

// Separable resamplers over a single float plane (row-major). Both use
// half-pixel centres: src = (dst + 0.5) * in / out - 0.5, with coordinates
// clamped to the border (replicate). No anti-aliasing when shrinking.

// Cubic convolution, a = -0.75.
std::vector<float> resize_bicubic(std::span<const float> plane, std::size_t width, std::size_t height,
                                  std::size_t out_width, std::size_t out_height);

std::vector<float> resize_bilinear(std::span<const float> plane, std::size_t width, std::size_t height,
                                   std::size_t out_width, std::size_t out_height);

std::vector<float> resize_nearest(std::span<const float> plane, std::size_t width, std::size_t height,
                                  std::size_t out_width, std::size_t out_height);

}  // namespace cci
