#include "cci/synthetic.hpp"

#include <cmath>

#include "cci/rng.hpp"

namespace cci {

ModelBundle random_bundle(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  TensorMap tensors;
  for (const auto& [name, shape] : expected_tensors(config)) {
    NamedTensor t;
    t.shape = shape;
    t.data.resize(t.element_count());
    const bool is_norm = name.find("ln_") != std::string::npos;
    const bool is_bias = name.ends_with("bias");
    double scale;
    if (is_norm && !is_bias) {
      for (float& v : t.data) v = static_cast<float>(1.0 + 0.1 * rng.uniform(-1.0, 1.0));
      tensors.emplace(name, std::move(t));
      continue;
    }
    if (is_bias) scale = 0.02;
    else if (shape.size() == 1 || name.ends_with("positional_embedding")) scale = 0.5;
    else scale = 1.0 / std::sqrt(static_cast<double>(t.element_count() / shape[0]));
    if (name.ends_with("visual.proj")) scale = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    for (float& v : t.data) v = static_cast<float>(scale * rng.uniform(-1.0, 1.0));
    tensors.emplace(name, std::move(t));
  }
  return ModelBundle::create(config, std::move(tensors), "random:" + std::to_string(seed));
}

ViTConfig tiny_config(std::size_t image_size, std::size_t patch_size, std::size_t layers, std::size_t width,
                      std::size_t heads) {
  ViTConfig c;
  c.image_size = image_size;
  c.patch_size = patch_size;
  c.layers = layers;
  c.heads = heads;
  c.width = width;
  c.embed_dim = width;
  c.mlp_dim = 4 * width;
  c.validate();
  return c;
}

Raster random_raster(std::size_t width, std::size_t height, std::uint64_t seed) {
  Rng rng(seed);
  Raster r(width, height, 3);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.next() & 0xff);
  return r;
}

}  // namespace cci
