#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cci/image_tensor.hpp"
#include "cci/raster.hpp"

namespace cci {

// ---------------------------------------------------------------------------
// Named-tensor container
//
// Layout: u64 little-endian header length H, then H bytes of UTF-8 JSON
// mapping tensor name -> {"dtype", "shape", "data_offsets": [begin, end]}
// (offsets relative to the end of the header), an optional "__metadata__"
// object of string -> string, then the raw row-major little-endian data.
// F32, F16 and BF16 are accepted on read and widened to fp32; writes are F32.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t element_count() const;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using TensorMap = std::map<std::string, NamedTensor>;

struct TensorFile {
  TensorMap tensors;
  std::map<std::string, std::string> metadata;
};

TensorFile read_tensor_file(const std::filesystem::path& path);
TensorFile parse_tensor_file(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_tensor_file(const TensorFile& file);
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);

// ---------------------------------------------------------------------------
// Encoder configuration
// ---------------------------------------------------------------------------

enum class Activation { quick_gelu, gelu };

struct ViTConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t layers = 12;
  std::size_t heads = 12;
  std::size_t width = 768;      // token dimension d
  std::size_t embed_dim = 512;  // projected CLS dimension
  std::size_t mlp_dim = 3072;
  std::array<float, 3> mean{0.48145466f, 0.4578275f, 0.40821073f};
  std::array<float, 3> std{0.26862954f, 0.26130258f, 0.27577711f};
  Activation activation = Activation::quick_gelu;
  float ln_eps = 1e-5f;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t patch_count() const { return grid() * grid(); }

  // Throws InputError when an invariant fails.
  void validate() const;

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

nlohmann::json config_to_json(const ViTConfig& config);
ViTConfig config_from_json(const nlohmann::json& j);

// Canonical tensor names and shapes for a configuration, in a stable order.
// See docs/tensor_layout.md.
std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(const ViTConfig& config);

// Immutable weights + configuration.
class ModelBundle {
 public:
  // Validates every expected tensor against `config`; extra tensors are
  // ignored. Throws InputError naming the first missing or misshapen tensor.
  static ModelBundle create(ViTConfig config, TensorMap tensors, std::string provenance = "memory");

  const ViTConfig& config() const { return config_; }
  const TensorMap& tensors() const { return tensors_; }
  const NamedTensor& tensor(const std::string& name) const;
  const std::string& provenance() const { return provenance_; }

 private:
  ModelBundle(ViTConfig config, TensorMap tensors, std::string provenance)
      : config_(std::move(config)), tensors_(std::move(tensors)), provenance_(std::move(provenance)) {}

  ViTConfig config_;
  TensorMap tensors_;
  std::string provenance_;
};

// Sidecar config path for a weights file: same path with extension ".json".
std::filesystem::path sidecar_path(const std::filesystem::path& weights);

// Shape-derived fields (width, patch size, token count, embed dim, MLP dim,
// layer count) are read from the tensors and must agree with the sidecar.
ModelBundle load_model(const std::filesystem::path& weights,
                       std::optional<std::filesystem::path> sidecar = std::nullopt);
void save_model(const ModelBundle& bundle, const std::filesystem::path& weights,
                std::optional<std::filesystem::path> sidecar = std::nullopt);

// ---------------------------------------------------------------------------
// Text embeddings
// ---------------------------------------------------------------------------

struct TextEmbedding {
  std::string label;
  std::vector<float> vector;
};

class TextEmbeddingBank {
 public:
  TextEmbeddingBank() = default;
  // Throws InputError on duplicate labels or ragged dimensions.
  TextEmbeddingBank(std::vector<TextEmbedding> entries, bool normalize);

  std::size_t size() const { return entries_.size(); }
  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().vector.size(); }
  bool normalized() const { return normalized_; }
  const std::vector<TextEmbedding>& entries() const { return entries_; }
  const TextEmbedding& operator[](std::size_t i) const { return entries_[i]; }
  std::optional<std::size_t> index_of(std::string_view label) const;

 private:
  std::vector<TextEmbedding> entries_;
  bool normalized_ = false;
};

// JSON: {"dim": d, "entries": [{"label": str, "vector": [...]}, ...]}.
// Anything else is read as a named-tensor container holding "embeddings"
// [n, d] with the labels as a JSON array in metadata key "labels".
TextEmbeddingBank load_text_bank(const std::filesystem::path& path, std::optional<std::size_t> expected_dim = std::nullopt,
                                 bool normalize = false);
void save_text_bank(const TextEmbeddingBank& bank, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

// Bicubic resize to image_size (see resample.hpp), scale to [0, 1], then
// per-channel (x - mean) / std.
ImageTensor preprocess(const Raster& image, const ViTConfig& config);

// Inverse of the standardization for a single value; used to express
// colours such as black in standardized space.
float standardize(float unit_value, std::size_t channel, const ViTConfig& config);

}  // namespace cci
