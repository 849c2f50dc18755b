#include "cci/cci.hpp"

#include <algorithm>
#include <cmath>

#include "cci/error.hpp"
#include "cci/parallel.hpp"
#include "cci/resample.hpp"

namespace cci {

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw InputError("cosine of vectors with different dimensions");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw InputError("cosine of a zero-norm vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

ImportanceScore score_drops(double base, std::vector<double> masked, bool clamp_negative) {
  ImportanceScore s;
  s.base = base;
  s.masked = std::move(masked);
  const std::size_t k = s.masked.size();
  s.drops.resize(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    s.drops[i] = base - s.masked[i];
    sum += clamp_negative ? std::max(s.drops[i], 0.0) : s.drops[i];
  }
  s.weights.resize(k);
  if (std::abs(sum) < kDegenerateDropSum) {
    s.degenerate = true;
    std::fill(s.weights.begin(), s.weights.end(), 1.0 / static_cast<double>(k));
    return s;
  }
  for (std::size_t i = 0; i < k; ++i) s.weights[i] = (clamp_negative ? std::max(s.drops[i], 0.0) : s.drops[i]) / sum;
  return s;
}

ImportanceMap compute_cci(const MaskedEncoder& encoder, const ImageTensor& image, std::span<const float> text,
                          const CciOptions& options) {
  const auto session = encoder.open(image);
  const std::vector<float> base_embedding = session->embed(nullptr);
  const double base = cosine(base_embedding, text);

  ImportanceMap out;
  out.clusters = kmeans(session->features(), options.k, options.seed, options.kmeans);
  const auto masks = cluster_masks(out.clusters);

  std::vector<double> masked(masks.size());
  parallel_for(masks.size(), options.workers, [&](std::size_t c) {
    masked[c] = cosine(session->embed(&masks[c]), text);
  });
  out.score = score_drops(base, std::move(masked), options.clamp_negative);

  const std::size_t g = encoder.grid();
  out.grid = ScalarMap(g);
  for (std::size_t j = 0; j < g * g; ++j)
    out.grid.values[j] = static_cast<float>(out.score.weights[out.clusters.assignment[j]]);
  out.pixel_map = upsample(out.grid, encoder.image_size(), options.upsample);
  return out;
}

ScalarMap upsample(const ScalarMap& grid, std::size_t size, UpsampleMode mode) {
  if (grid.size == 0 || grid.values.size() != grid.size * grid.size) throw InputError("upsample of malformed grid");
  if (size % grid.size != 0 && mode == UpsampleMode::nearest)
    throw InputError("nearest upsampling needs the output size to be a multiple of the grid");
  ScalarMap out(size);
  out.values = mode == UpsampleMode::bilinear ? resize_bilinear(grid.values, grid.size, grid.size, size, size)
                                              : resize_nearest(grid.values, grid.size, grid.size, size, size);
  return out;
}

std::array<std::uint8_t, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto u8 = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); };
  if (t <= 0.5) {
    const double a = t / 0.5;  // blue -> white
    return {u8(255.0 * a), u8(255.0 * a), 255};
  }
  const double a = (t - 0.5) / 0.5;  // white -> red
  return {255, u8(255.0 * (1.0 - a)), u8(255.0 * (1.0 - a))};
}

Raster blend_overlay(const Raster& image, const ScalarMap& map, bool* degenerate) {
  if (image.channels != 3) throw InputError("overlay needs an RGB raster");
  if (image.width != map.size || image.height != map.size)
    throw InputError("overlay map size does not match the image");
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const bool flat = *lo == *hi;
  if (degenerate) *degenerate = flat;
  Raster out = image;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double t = flat ? 0.5 : (static_cast<double>(map.values[i]) - *lo) / (static_cast<double>(*hi) - *lo);
    const auto color = colormap(t);
    for (std::size_t c = 0; c < 3; ++c) {
      const double blended = 0.5 * color[c] + 0.5 * image.pixels[i * 3 + c];
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(blended));
    }
  }
  return out;
}

Overlay render_overlay(const Raster& image, const ScalarMap& map) {
  Overlay out;
  out.png = encode_png(blend_overlay(image, map, &out.degenerate));
  return out;
}

nlohmann::json cci_report(const ImportanceMap& map, const std::string& label) {
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t k = 0; k < map.score.weights.size(); ++k) {
    clusters.push_back({{"k", k},
                        {"size", map.clusters.cluster_size(k)},
                        {"s_k", map.score.masked[k]},
                        {"delta", map.score.drops[k]},
                        {"w", map.score.weights[k]}});
  }
  return {{"label", label},
          {"s", map.score.base},
          {"clusters", clusters},
          {"degenerate", map.score.degenerate},
          {"seed", map.clusters.seed},
          {"K", map.clusters.k}};
}

}  // namespace cci
