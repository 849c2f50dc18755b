#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cci/image_tensor.hpp"
#include "cci/kmeans.hpp"
#include "cci/raster.hpp"
#include "cci/vit.hpp"

namespace cci {

// Throws InputError when either vector has zero norm or sizes differ.
double cosine(std::span<const float> u, std::span<const float> v);

enum class UpsampleMode { bilinear, nearest };

struct CciOptions {
  std::size_t k = 7;
  std::uint64_t seed = 0;
  KMeansOptions kmeans{};
  bool clamp_negative = false;  // use max(delta, 0) when normalizing
  UpsampleMode upsample = UpsampleMode::bilinear;
  std::size_t workers = 1;      // masked passes run concurrently
};

inline constexpr double kDegenerateDropSum = 1e-8;

struct ImportanceScore {
  double base = 0.0;                  // s
  std::vector<double> masked;         // s_k
  std::vector<double> drops;          // s - s_k
  std::vector<double> weights;        // normalized drops
  bool degenerate = false;            // |sum of drops| < 1e-8, weights uniform
};

struct ImportanceMap {
  ScalarMap grid;       // patch lattice, grid[j] = w[assignment[j]]
  ScalarMap pixel_map;  // upsampled to image size
  ImportanceScore score;
  ClusterSet clusters;
};

// Normalizes drops into weights; uniform + degenerate flag on a vanishing sum.
ImportanceScore score_drops(double base, std::vector<double> masked, bool clamp_negative = false);

// Full pipeline: base similarity, clustering of patch features, one masked
// pass per cluster, normalized drops, patch map, pixel map.
ImportanceMap compute_cci(const MaskedEncoder& encoder, const ImageTensor& image, std::span<const float> text,
                          const CciOptions& options = {});

ScalarMap upsample(const ScalarMap& grid, std::size_t size, UpsampleMode mode = UpsampleMode::bilinear);

struct Overlay {
  std::vector<std::uint8_t> png;
  bool degenerate = false;  // map was constant; rendered with the mid colour
};

// Red-blue colormap (blue -> white -> red, red = highest) of the min-max
// normalized map, alpha-blended at 0.5 over the raster.
std::array<std::uint8_t, 3> colormap(double t);
Raster blend_overlay(const Raster& image, const ScalarMap& map, bool* degenerate = nullptr);
Overlay render_overlay(const Raster& image, const ScalarMap& map);

// {label, s, clusters: [{k, size, s_k, delta, w}], degenerate, seed, K}
nlohmann::json cci_report(const ImportanceMap& map, const std::string& label);

}  // namespace cci
