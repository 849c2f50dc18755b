#pragma once

#include <cstdint>

#include "cci/model_io.hpp"
#include "cci/raster.hpp"

namespace cci {

// Randomly initialised weights for every expected tensor of `config`
// (uniform, scaled by fan-in; LayerNorm gains near 1). Deterministic in seed.
ModelBundle random_bundle(const ViTConfig& config, std::uint64_t seed);

// Small configuration convenient for tests and demos.
ViTConfig tiny_config(std::size_t image_size = 32, std::size_t patch_size = 8, std::size_t layers = 2,
                      std::size_t width = 16, std::size_t heads = 2);

// Random RGB raster, deterministic in seed.
Raster random_raster(std::size_t width, std::size_t height, std::uint64_t seed);

}  // namespace cci
