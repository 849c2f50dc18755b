#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cci/image_tensor.hpp"
#include "cci/model_io.hpp"
#include "cci/tensor.hpp"

namespace cci {

// One flag per patch (CLS is never maskable). A set flag removes that patch
// as an attention key in every layer and head.
class ClusterMask {
 public:
  ClusterMask() = default;
  explicit ClusterMask(std::size_t patches, bool fill = false) : bits_(patches, fill ? 1 : 0) {}
  explicit ClusterMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

  std::size_t size() const { return bits_.size(); }
  bool masked(std::size_t patch) const { return bits_[patch] != 0; }
  void set(std::size_t patch, bool value) { bits_[patch] = value ? 1 : 0; }
  std::size_t count() const;
  bool covers_all() const { return count() == size(); }
  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const ClusterMask&, const ClusterMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Token states for a whole sequence; row 0 is CLS.
struct TokenSequence {
  Matrix tokens;
  std::size_t layer_index = 0;  // 0 = embedding, l = after block l
};

struct EncodedImage {
  std::vector<float> cls;  // after final norm and projection
  Matrix patches;          // N x f clustering features
  std::optional<ClusterMask> mask_applied;
  bool cls_only = false;   // every patch was masked; CLS attended only to itself
};

// Which token states serve as clustering features.
struct FeatureSource {
  std::size_t layers_from_end = 0;  // 0 = output of the last block
  bool final_norm = true;           // apply the encoder's final LayerNorm
};

// Per-image state that can be re-run under different masks. Masking never
// changes the layer-0 tokens, so implementations compute them once.
class EncodingSession {
 public:
  virtual ~EncodingSession() = default;
  // Image embedding compared against text vectors. mask may be null.
  virtual std::vector<float> embed(const ClusterMask* mask) const = 0;
  // N x f features used for clustering.
  virtual Matrix features() const = 0;
};

// Anything that can embed an image with patch-level attention masking.
class MaskedEncoder {
 public:
  virtual ~MaskedEncoder() = default;
  virtual std::size_t image_size() const = 0;
  virtual std::size_t grid() const = 0;
  std::size_t patch_count() const { return grid() * grid(); }
  virtual std::unique_ptr<EncodingSession> open(const ImageTensor& image) const = 0;
};

// CLIP-style ViT image tower: patch projection, class token and position
// embeddings, pre-LayerNorm, L pre-norm residual blocks, final LayerNorm on
// CLS, linear projection. Holds its own (pre-transposed) copy of the weights
// and is immutable, so one instance can serve concurrent callers.
class ViTEncoder final : public MaskedEncoder {
 public:
  explicit ViTEncoder(const ModelBundle& bundle, FeatureSource features = {});
  ~ViTEncoder() override;
  ViTEncoder(ViTEncoder&&) noexcept;
  ViTEncoder& operator=(ViTEncoder&&) noexcept;

  const ViTConfig& config() const;
  std::size_t image_size() const override;
  std::size_t grid() const override;
  std::unique_ptr<EncodingSession> open(const ImageTensor& image) const override;

  EncodedImage encode(const ImageTensor& image, const ClusterMask* mask = nullptr) const;

  // Final-layer clustering features, N x f.
  Matrix patch_tokens(const ImageTensor& image) const;

  // Layer-0 sequence: [class; patches] + positions, then the pre-LayerNorm.
  TokenSequence embed_tokens(const ImageTensor& image) const;

  // Runs blocks [0, layers) over `tokens` under `mask`.
  TokenSequence run_blocks(TokenSequence tokens, const ClusterMask* mask, std::size_t layers) const;

  // Final LayerNorm + projection of row 0.
  std::vector<float> project_cls(const Matrix& tokens) const;

  EncodedImage encode_tokens(const TokenSequence& layer0, const ClusterMask* mask) const;

 private:
  struct Weights;
  std::unique_ptr<Weights> weights_;
  FeatureSource features_;
};

}  // namespace cci
