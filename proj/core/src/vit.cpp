#include "cci/vit.hpp"

#include <algorithm>
#include <cmath>

#include "cci/error.hpp"
#include "cci/kernels.hpp"

namespace cci {
namespace {

std::vector<float> copy_of(const NamedTensor& t) { return t.data; }

// Checkpoint [out, in] -> matmul-ready [in, out].
Matrix transposed(const NamedTensor& t) {
  const std::size_t rows = t.shape[0];
  const std::size_t cols = t.element_count() / rows;
  return Matrix(rows, cols, t.data).transposed();
}

}  // namespace

std::size_t ClusterMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; }));
}

struct ViTEncoder::Weights {
  struct Block {
    std::vector<float> ln1_g, ln1_b, ln2_g, ln2_b;
    Matrix in_proj;  // d x 3d
    std::vector<float> in_bias;
    Matrix out_proj;  // d x d
    std::vector<float> out_bias;
    Matrix fc;  // d x mlp
    std::vector<float> fc_bias;
    Matrix fc_out;  // mlp x d
    std::vector<float> fc_out_bias;
  };

  ViTConfig config;
  Matrix patch_proj;  // 3*p*p x d
  std::vector<float> class_embedding;
  Matrix positions;  // (N+1) x d
  std::vector<float> ln_pre_g, ln_pre_b, ln_post_g, ln_post_b;
  std::vector<Block> blocks;
  Matrix proj;  // d x embed
};

ViTEncoder::ViTEncoder(const ModelBundle& bundle, FeatureSource features)
    : weights_(std::make_unique<Weights>()), features_(features) {
  Weights& w = *weights_;
  w.config = bundle.config();
  if (features_.layers_from_end >= w.config.layers)
    throw InputError("feature layer offset exceeds the number of layers");
  const std::size_t d = w.config.width;
  w.patch_proj = transposed(bundle.tensor("visual.conv1.weight"));
  w.class_embedding = copy_of(bundle.tensor("visual.class_embedding"));
  w.positions = Matrix(w.config.patch_count() + 1, d, copy_of(bundle.tensor("visual.positional_embedding")));
  w.ln_pre_g = copy_of(bundle.tensor("visual.ln_pre.weight"));
  w.ln_pre_b = copy_of(bundle.tensor("visual.ln_pre.bias"));
  w.ln_post_g = copy_of(bundle.tensor("visual.ln_post.weight"));
  w.ln_post_b = copy_of(bundle.tensor("visual.ln_post.bias"));
  const NamedTensor& proj = bundle.tensor("visual.proj");
  w.proj = Matrix(proj.shape[0], proj.shape[1], proj.data);
  for (std::size_t l = 0; l < w.config.layers; ++l) {
    const std::string p = "visual.transformer.resblocks." + std::to_string(l) + ".";
    Weights::Block b;
    b.ln1_g = copy_of(bundle.tensor(p + "ln_1.weight"));
    b.ln1_b = copy_of(bundle.tensor(p + "ln_1.bias"));
    b.ln2_g = copy_of(bundle.tensor(p + "ln_2.weight"));
    b.ln2_b = copy_of(bundle.tensor(p + "ln_2.bias"));
    b.in_proj = transposed(bundle.tensor(p + "attn.in_proj_weight"));
    b.in_bias = copy_of(bundle.tensor(p + "attn.in_proj_bias"));
    b.out_proj = transposed(bundle.tensor(p + "attn.out_proj.weight"));
    b.out_bias = copy_of(bundle.tensor(p + "attn.out_proj.bias"));
    b.fc = transposed(bundle.tensor(p + "mlp.c_fc.weight"));
    b.fc_bias = copy_of(bundle.tensor(p + "mlp.c_fc.bias"));
    b.fc_out = transposed(bundle.tensor(p + "mlp.c_proj.weight"));
    b.fc_out_bias = copy_of(bundle.tensor(p + "mlp.c_proj.bias"));
    w.blocks.push_back(std::move(b));
  }
}

ViTEncoder::~ViTEncoder() = default;
ViTEncoder::ViTEncoder(ViTEncoder&&) noexcept = default;
ViTEncoder& ViTEncoder::operator=(ViTEncoder&&) noexcept = default;

const ViTConfig& ViTEncoder::config() const { return weights_->config; }
std::size_t ViTEncoder::image_size() const { return weights_->config.image_size; }
std::size_t ViTEncoder::grid() const { return weights_->config.grid(); }

TokenSequence ViTEncoder::embed_tokens(const ImageTensor& image) const {
  const Weights& w = *weights_;
  const ViTConfig& c = w.config;
  if (image.size != c.image_size || image.data.size() != 3 * c.image_size * c.image_size)
    throw InputError("image tensor size " + std::to_string(image.size) + " does not match model input " +
                     std::to_string(c.image_size));
  for (float v : image.data)
    if (!std::isfinite(v)) throw InputError("image tensor contains non-finite values");

  const std::size_t p = c.patch_size, g = c.grid();
  Matrix patches(c.patch_count(), 3 * p * p);
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      auto row = patches.row(gy * g + gx);
      std::size_t i = 0;
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t ky = 0; ky < p; ++ky)
          for (std::size_t kx = 0; kx < p; ++kx) row[i++] = image.at(ch, gy * p + ky, gx * p + kx);
    }
  const Matrix projected = kernels::matmul(patches, w.patch_proj);

  Matrix tokens(c.patch_count() + 1, c.width);
  std::copy(w.class_embedding.begin(), w.class_embedding.end(), tokens.row(0).begin());
  for (std::size_t j = 0; j < c.patch_count(); ++j)
    std::copy(projected.row(j).begin(), projected.row(j).end(), tokens.row(j + 1).begin());
  for (std::size_t i = 0; i < tokens.values().size(); ++i) tokens.values()[i] += w.positions.values()[i];
  return {kernels::layer_norm(tokens, w.ln_pre_g, w.ln_pre_b, c.ln_eps), 0};
}

TokenSequence ViTEncoder::run_blocks(TokenSequence seq, const ClusterMask* mask, std::size_t layers) const {
  const Weights& w = *weights_;
  const ViTConfig& c = w.config;
  const std::size_t T = seq.tokens.rows(), d = c.width, heads = c.heads, dh = d / heads;
  if (seq.tokens.cols() != d) throw InputError("token width does not match model");

  std::vector<std::uint8_t> key_masked(T, 0);
  if (mask) {
    if (mask->size() != T - 1)
      throw InputError("mask length " + std::to_string(mask->size()) + " does not match patch count " +
                       std::to_string(T - 1));
    for (std::size_t j = 0; j < mask->size(); ++j) key_masked[j + 1] = mask->masked(j) ? 1 : 0;
  }
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  Matrix& x = seq.tokens;
  const std::size_t end = std::min(layers, w.blocks.size());
  for (std::size_t l = seq.layer_index; l < end; ++l) {
    const Weights::Block& b = w.blocks[l];
    Matrix qkv = kernels::matmul(kernels::layer_norm(x, b.ln1_g, b.ln1_b, c.ln_eps), b.in_proj);
    kernels::add_bias(qkv, b.in_bias);

    Matrix attended(T, d);
    Matrix q(T, dh), kt(dh, T), v(T, dh);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const auto row = qkv.row(t);
        for (std::size_t e = 0; e < dh; ++e) {
          q(t, e) = row[h * dh + e] * scale;
          kt(e, t) = row[d + h * dh + e];
          v(t, e) = row[2 * d + h * dh + e];
        }
      }
      Matrix probs = kernels::matmul(q, kt);
      for (std::size_t t = 0; t < T; ++t) kernels::masked_softmax(probs.row(t), key_masked);
      const Matrix out = kernels::matmul(probs, v);
      for (std::size_t t = 0; t < T; ++t)
        std::copy(out.row(t).begin(), out.row(t).end(), attended.row(t).begin() + static_cast<std::ptrdiff_t>(h * dh));
    }
    Matrix projected = kernels::matmul(attended, b.out_proj);
    kernels::add_bias(projected, b.out_bias);
    for (std::size_t i = 0; i < x.values().size(); ++i) x.values()[i] += projected.values()[i];

    Matrix hidden = kernels::matmul(kernels::layer_norm(x, b.ln2_g, b.ln2_b, c.ln_eps), b.fc);
    kernels::add_bias(hidden, b.fc_bias);
    if (c.activation == Activation::quick_gelu) kernels::quick_gelu(hidden.values());
    else kernels::gelu(hidden.values());
    Matrix mlp = kernels::matmul(hidden, b.fc_out);
    kernels::add_bias(mlp, b.fc_out_bias);
    for (std::size_t i = 0; i < x.values().size(); ++i) x.values()[i] += mlp.values()[i];
    seq.layer_index = l + 1;
  }
  return seq;
}

std::vector<float> ViTEncoder::project_cls(const Matrix& tokens) const {
  const Weights& w = *weights_;
  Matrix cls(1, w.config.width);
  std::copy(tokens.row(0).begin(), tokens.row(0).end(), cls.row(0).begin());
  const Matrix normed = kernels::layer_norm(cls, w.ln_post_g, w.ln_post_b, w.config.ln_eps);
  const Matrix out = kernels::matmul(normed, w.proj);
  return {out.values().begin(), out.values().end()};
}

namespace {

Matrix patch_rows(const Matrix& tokens) {
  Matrix out(tokens.rows() - 1, tokens.cols());
  std::copy(tokens.values().begin() + static_cast<std::ptrdiff_t>(tokens.cols()), tokens.values().end(),
            out.values().begin());
  return out;
}

}  // namespace

EncodedImage ViTEncoder::encode_tokens(const TokenSequence& layer0, const ClusterMask* mask) const {
  const Weights& w = *weights_;
  const std::size_t feature_layer = w.config.layers - features_.layers_from_end;
  TokenSequence seq = run_blocks(layer0, mask, feature_layer);
  Matrix features = patch_rows(seq.tokens);
  if (features_.final_norm) features = kernels::layer_norm(features, w.ln_post_g, w.ln_post_b, w.config.ln_eps);
  seq = run_blocks(std::move(seq), mask, w.config.layers);

  EncodedImage out;
  out.cls = project_cls(seq.tokens);
  out.patches = std::move(features);
  if (mask) {
    out.mask_applied = *mask;
    out.cls_only = mask->covers_all();
  }
  return out;
}

EncodedImage ViTEncoder::encode(const ImageTensor& image, const ClusterMask* mask) const {
  return encode_tokens(embed_tokens(image), mask);
}

Matrix ViTEncoder::patch_tokens(const ImageTensor& image) const { return encode(image).patches; }

namespace {

class ViTSession final : public EncodingSession {
 public:
  ViTSession(const ViTEncoder& encoder, TokenSequence layer0) : encoder_(encoder), layer0_(std::move(layer0)) {}

  std::vector<float> embed(const ClusterMask* mask) const override {
    TokenSequence seq = encoder_.run_blocks(layer0_, mask, encoder_.config().layers);
    return encoder_.project_cls(seq.tokens);
  }

  Matrix features() const override { return encoder_.encode_tokens(layer0_, nullptr).patches; }

 private:
  const ViTEncoder& encoder_;
  TokenSequence layer0_;
};

}  // namespace

std::unique_ptr<EncodingSession> ViTEncoder::open(const ImageTensor& image) const {
  return std::make_unique<ViTSession>(*this, embed_tokens(image));
}

}  // namespace cci
