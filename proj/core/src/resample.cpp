#include "cci/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "cci/error.hpp"

namespace cci {
namespace {

constexpr double kCubicA = -0.75;

double cubic_weight(double x) {
  x = std::abs(x);
  if (x <= 1.0) return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((kCubicA * x - 5.0 * kCubicA) * x + 8.0 * kCubicA) * x - 4.0 * kCubicA;
  return 0.0;
}

std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1);
}

void check(std::span<const float> plane, std::size_t w, std::size_t h, std::size_t ow, std::size_t oh) {
  if (w == 0 || h == 0 || ow == 0 || oh == 0) throw InputError("resize with zero-area image");
  if (plane.size() != w * h) throw InputError("resize plane size mismatch");
}

// Tap positions and weights for one output coordinate along one axis.
struct Taps {
  std::array<std::ptrdiff_t, 4> index{};
  std::array<double, 4> weight{};
  int count = 0;
};

std::vector<Taps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    Taps& t = taps[o];
    t.count = 4;
    for (int k = 0; k < 4; ++k) {
      t.index[k] = clamp_index(static_cast<std::ptrdiff_t>(base) - 1 + k, in);
      t.weight[k] = cubic_weight(frac - (k - 1));
    }
  }
  return taps;
}

std::vector<Taps> linear_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const double base = std::floor(src);
    const double frac = src - base;
    Taps& t = taps[o];
    t.count = 2;
    t.index[0] = static_cast<std::ptrdiff_t>(base);
    t.index[1] = clamp_index(static_cast<std::ptrdiff_t>(base) + 1, in);
    t.weight[0] = 1.0 - frac;
    t.weight[1] = frac;
  }
  return taps;
}

std::vector<float> separable(std::span<const float> plane, std::size_t w, std::size_t h, std::size_t ow,
                             std::size_t oh, const std::vector<Taps>& xt, const std::vector<Taps>& yt) {
  // Horizontal pass into doubles, then vertical.
  std::vector<double> tmp(ow * h);
  for (std::size_t y = 0; y < h; ++y) {
    const float* row = plane.data() + y * w;
    for (std::size_t x = 0; x < ow; ++x) {
      const Taps& t = xt[x];
      double acc = 0.0;
      for (int k = 0; k < t.count; ++k) acc += t.weight[k] * row[t.index[k]];
      tmp[y * ow + x] = acc;
    }
  }
  std::vector<float> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    const Taps& t = yt[y];
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < t.count; ++k) acc += t.weight[k] * tmp[static_cast<std::size_t>(t.index[k]) * ow + x];
      out[y * ow + x] = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace

std::vector<float> resize_bicubic(std::span<const float> plane, std::size_t width, std::size_t height,
                                  std::size_t out_width, std::size_t out_height) {
  check(plane, width, height, out_width, out_height);
  return separable(plane, width, height, out_width, out_height, cubic_taps(width, out_width),
                   cubic_taps(height, out_height));
}

std::vector<float> resize_bilinear(std::span<const float> plane, std::size_t width, std::size_t height,
                                   std::size_t out_width, std::size_t out_height) {
  check(plane, width, height, out_width, out_height);
  return separable(plane, width, height, out_width, out_height, linear_taps(width, out_width),
                   linear_taps(height, out_height));
}

std::vector<float> resize_nearest(std::span<const float> plane, std::size_t width, std::size_t height,
                                  std::size_t out_width, std::size_t out_height) {
  check(plane, width, height, out_width, out_height);
  std::vector<float> out(out_width * out_height);
  for (std::size_t y = 0; y < out_height; ++y) {
    const std::size_t sy = std::min(height - 1, y * height / out_height);
    for (std::size_t x = 0; x < out_width; ++x) {
      const std::size_t sx = std::min(width - 1, x * width / out_width);
      out[y * out_width + x] = plane[sy * width + sx];
    }
  }
  return out;
}

}  // namespace cci
