#include "cci/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "cci/error.hpp"
#include "cci/resample.hpp"

namespace cci {
namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = (h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3ffu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1f) {
    bits = sign | 0x7f800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

float bf16_to_float(std::uint16_t h) { return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16); }

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

const std::string kConv = "visual.conv1.weight";
const std::string kClass = "visual.class_embedding";
const std::string kPos = "visual.positional_embedding";
const std::string kProj = "visual.proj";

std::string block_prefix(std::size_t layer) { return "visual.transformer.resblocks." + std::to_string(layer) + "."; }

const NamedTensor& require(const TensorMap& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw InputError("missing tensor: " + name);
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Container
// ---------------------------------------------------------------------------

std::size_t NamedTensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

TensorFile parse_tensor_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw InputError("tensor container too short");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data(), 8);
  if (header_len > bytes.size() - 8) throw InputError("tensor container header length exceeds file size");
  const std::string_view header_text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("tensor container header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw InputError("tensor container header must be a JSON object");
  const auto data = bytes.subspan(8 + header_len);

  TensorFile file;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      for (const auto& [key, value] : entry.items()) {
        if (!value.is_string()) throw InputError("metadata values must be strings");
        file.metadata[key] = value.get<std::string>();
      }
      continue;
    }
    const std::string dtype = entry.at("dtype").get<std::string>();
    std::size_t elem_size = 0;
    if (dtype == "F32") elem_size = 4;
    else if (dtype == "F16" || dtype == "BF16") elem_size = 2;
    else throw InputError("unsupported dtype " + dtype + " for tensor " + name);

    NamedTensor tensor;
    tensor.shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data.size())
      throw InputError("bad data_offsets for tensor " + name);
    const std::size_t count = tensor.element_count();
    if (offsets[1] - offsets[0] != count * elem_size)
      throw InputError("byte size of tensor " + name + " does not match shape " + shape_str(tensor.shape));
    tensor.data.resize(count);
    const std::uint8_t* src = data.data() + offsets[0];
    if (elem_size == 4) {
      std::memcpy(tensor.data.data(), src, count * 4);
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t h;
        std::memcpy(&h, src + 2 * i, 2);
        tensor.data[i] = dtype == "F16" ? half_to_float(h) : bf16_to_float(h);
      }
    }
    file.tensors.emplace(name, std::move(tensor));
  }
  return file;
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return parse_tensor_file(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": malformed tensor header: " + e.what());
  }
}

std::vector<std::uint8_t> serialize_tensor_file(const TensorFile& file) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : file.tensors) {
    if (tensor.data.size() != tensor.element_count())
      throw InputError("tensor " + name + " data does not match shape " + shape_str(tensor.shape));
    const std::uint64_t bytes = tensor.data.size() * 4;
    header[name] = {{"dtype", "F32"}, {"shape", tensor.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!file.metadata.empty()) header["__metadata__"] = file.metadata;
  std::string text = header.dump();
  while (text.size() % 8 != 0) text += ' ';

  std::vector<std::uint8_t> out(8 + text.size() + offset);
  const std::uint64_t len = text.size();
  std::memcpy(out.data(), &len, 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  std::uint8_t* dst = out.data() + 8 + text.size();
  for (const auto& [name, tensor] : file.tensors) {
    std::memcpy(dst, tensor.data.data(), tensor.data.size() * 4);
    dst += tensor.data.size() * 4;
  }
  return out;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  write_bytes(path, serialize_tensor_file(file));
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0) throw InputError("image_size and patch_size must be positive");
  if (image_size % patch_size != 0)
    throw InputError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                     std::to_string(patch_size));
  if (layers < 1) throw InputError("config needs at least one layer");
  if (heads == 0 || width % heads != 0)
    throw InputError("width " + std::to_string(width) + " is not divisible by heads " + std::to_string(heads));
  if (embed_dim == 0 || mlp_dim == 0) throw InputError("embed_dim and mlp_dim must be positive");
  for (float s : std)
    if (!(s > 0.0f)) throw InputError("preprocess std must be positive");
}

nlohmann::json config_to_json(const ViTConfig& c) {
  return {{"image_size", c.image_size},
          {"patch_size", c.patch_size},
          {"layers", c.layers},
          {"heads", c.heads},
          {"width", c.width},
          {"embed_dim", c.embed_dim},
          {"mlp_dim", c.mlp_dim},
          {"mean", c.mean},
          {"std", c.std},
          {"activation", c.activation == Activation::gelu ? "gelu" : "quick_gelu"},
          {"ln_eps", c.ln_eps}};
}

ViTConfig config_from_json(const nlohmann::json& j) {
  ViTConfig c;
  try {
    c.image_size = j.value("image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.width = j.value("width", c.width);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
    c.mean = j.value("mean", c.mean);
    c.std = j.value("std", c.std);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    const std::string act = j.value("activation", std::string("quick_gelu"));
    if (act == "quick_gelu") c.activation = Activation::quick_gelu;
    else if (act == "gelu") c.activation = Activation::gelu;
    else throw InputError("unknown activation: " + act);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(const ViTConfig& c) {
  const std::size_t d = c.width;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out = {
      {kConv, {d, 3, c.patch_size, c.patch_size}},
      {kClass, {d}},
      {kPos, {c.patch_count() + 1, d}},
      {"visual.ln_pre.weight", {d}},
      {"visual.ln_pre.bias", {d}},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = block_prefix(l);
    out.push_back({p + "ln_1.weight", {d}});
    out.push_back({p + "ln_1.bias", {d}});
    out.push_back({p + "attn.in_proj_weight", {3 * d, d}});
    out.push_back({p + "attn.in_proj_bias", {3 * d}});
    out.push_back({p + "attn.out_proj.weight", {d, d}});
    out.push_back({p + "attn.out_proj.bias", {d}});
    out.push_back({p + "ln_2.weight", {d}});
    out.push_back({p + "ln_2.bias", {d}});
    out.push_back({p + "mlp.c_fc.weight", {c.mlp_dim, d}});
    out.push_back({p + "mlp.c_fc.bias", {c.mlp_dim}});
    out.push_back({p + "mlp.c_proj.weight", {d, c.mlp_dim}});
    out.push_back({p + "mlp.c_proj.bias", {d}});
  }
  out.push_back({"visual.ln_post.weight", {d}});
  out.push_back({"visual.ln_post.bias", {d}});
  out.push_back({kProj, {d, c.embed_dim}});
  return out;
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

ModelBundle ModelBundle::create(ViTConfig config, TensorMap tensors, std::string provenance) {
  config.validate();
  for (const auto& [name, shape] : expected_tensors(config)) {
    const NamedTensor& t = require(tensors, name);
    if (t.shape != shape)
      throw InputError("shape mismatch for " + name + ": expected " + shape_str(shape) + ", found " +
                       shape_str(t.shape));
    if (t.data.size() != t.element_count()) throw InputError("tensor " + name + " data does not match its shape");
    for (float v : t.data)
      if (!std::isfinite(v)) throw InputError("non-finite value in tensor " + name);
  }
  return ModelBundle(std::move(config), std::move(tensors), std::move(provenance));
}

const NamedTensor& ModelBundle::tensor(const std::string& name) const { return require(tensors_, name); }

std::filesystem::path sidecar_path(const std::filesystem::path& weights) {
  auto p = weights;
  p.replace_extension(".json");
  return p;
}

ModelBundle load_model(const std::filesystem::path& weights, std::optional<std::filesystem::path> sidecar) {
  const auto bytes = read_bytes(weights);
  TensorFile file;
  try {
    file = parse_tensor_file(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(weights.string() + ": malformed tensor header: " + e.what());
  }

  const auto side = sidecar.value_or(sidecar_path(weights));
  std::ifstream in(side);
  if (!in) throw InputError("missing sidecar config: " + side.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(side.string() + ": " + e.what());
  }
  if (!j.contains("heads")) throw InputError(side.string() + ": sidecar config must specify heads");

  // Fields implied by tensor shapes.
  const NamedTensor& conv = require(file.tensors, kConv);
  if (conv.shape.size() != 4 || conv.shape[2] != conv.shape[3])
    throw InputError("patch projection " + kConv + " must be [width, channels, patch, patch], found " +
                     shape_str(conv.shape));
  if (conv.shape[1] != 3)
    throw InputError("patch projection expects 3 input channels, found " + std::to_string(conv.shape[1]));
  const std::size_t width = conv.shape[0];
  const std::size_t patch = conv.shape[2];
  const NamedTensor& pos = require(file.tensors, kPos);
  if (pos.shape.size() != 2 || pos.shape[0] < 2) throw InputError("bad shape for " + kPos + ": " + shape_str(pos.shape));
  const std::size_t patches = pos.shape[0] - 1;
  const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(patches))));
  if (grid * grid != patches) throw InputError(kPos + " implies a non-square patch count " + std::to_string(patches));
  const NamedTensor& proj = require(file.tensors, kProj);
  if (proj.shape.size() != 2) throw InputError("bad shape for " + kProj + ": " + shape_str(proj.shape));
  const NamedTensor& fc = require(file.tensors, block_prefix(0) + "mlp.c_fc.weight");
  if (fc.shape.size() != 2) throw InputError("bad shape for layer 0 c_fc weight");
  std::size_t layers = 0;
  while (file.tensors.contains(block_prefix(layers) + "ln_1.weight")) ++layers;

  nlohmann::json derived = {{"width", width},        {"patch_size", patch},   {"image_size", grid * patch},
                            {"embed_dim", proj.shape[1]}, {"mlp_dim", fc.shape[0]}, {"layers", layers}};
  for (const auto& [key, value] : derived.items()) {
    if (j.contains(key) && j[key] != value)
      throw InputError("sidecar " + key + " = " + j[key].dump() + " contradicts tensor shapes (" + value.dump() + ")");
    j[key] = value;
  }
  ViTConfig config = config_from_json(j);
  return ModelBundle::create(std::move(config), std::move(file.tensors), "fnv1a64:" + hex64(fnv1a64(bytes)));
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& weights,
                std::optional<std::filesystem::path> sidecar) {
  TensorFile file;
  file.tensors = bundle.tensors();
  write_tensor_file(weights, file);
  std::ofstream out(sidecar.value_or(sidecar_path(weights)));
  if (!out) throw InputError("cannot write sidecar config for " + weights.string());
  out << config_to_json(bundle.config()).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Text bank
// ---------------------------------------------------------------------------

TextEmbeddingBank::TextEmbeddingBank(std::vector<TextEmbedding> entries, bool normalize)
    : entries_(std::move(entries)), normalized_(normalize) {
  std::set<std::string> seen;
  for (auto& e : entries_) {
    if (!seen.insert(e.label).second) throw InputError("duplicate label in text bank: " + e.label);
    if (e.vector.size() != entries_.front().vector.size())
      throw InputError("dimension mismatch in text bank for label " + e.label);
    if (e.vector.empty()) throw InputError("empty vector for label " + e.label);
    if (normalize) {
      double sq = 0.0;
      for (float v : e.vector) sq += static_cast<double>(v) * v;
      if (sq == 0.0) throw InputError("cannot normalize zero vector for label " + e.label);
      const double inv = 1.0 / std::sqrt(sq);
      for (float& v : e.vector) v = static_cast<float>(v * inv);
    }
  }
}

std::optional<std::size_t> TextEmbeddingBank::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].label == label) return i;
  return std::nullopt;
}

TextEmbeddingBank load_text_bank(const std::filesystem::path& path, std::optional<std::size_t> expected_dim,
                                 bool normalize) {
  const auto bytes = read_bytes(path);
  std::vector<TextEmbedding> entries;
  const auto first = std::find_if(bytes.begin(), bytes.end(), [](std::uint8_t c) { return !std::isspace(c); });
  if (first != bytes.end() && *first == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
      const std::size_t dim = j.at("dim").get<std::size_t>();
      for (const auto& e : j.at("entries")) {
        TextEmbedding t{e.at("label").get<std::string>(), e.at("vector").get<std::vector<float>>()};
        if (t.vector.size() != dim)
          throw InputError("dimension mismatch for label " + t.label + ": expected " + std::to_string(dim) +
                           ", found " + std::to_string(t.vector.size()));
        entries.push_back(std::move(t));
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ": malformed text bank: " + e.what());
    }
  } else {
    TensorFile file = parse_tensor_file(bytes);
    const NamedTensor& emb = require(file.tensors, "embeddings");
    if (emb.shape.size() != 2) throw InputError("text bank embeddings must be 2-D");
    auto it = file.metadata.find("labels");
    if (it == file.metadata.end()) throw InputError("text bank container lacks labels metadata");
    const auto labels = nlohmann::json::parse(it->second).get<std::vector<std::string>>();
    if (labels.size() != emb.shape[0]) throw InputError("text bank label count does not match embeddings");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto begin = emb.data.begin() + static_cast<std::ptrdiff_t>(i * emb.shape[1]);
      entries.push_back({labels[i], std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(emb.shape[1]))});
    }
  }
  TextEmbeddingBank bank(std::move(entries), normalize);
  if (expected_dim && bank.size() > 0 && bank.dim() != *expected_dim)
    throw InputError("text bank dimension " + std::to_string(bank.dim()) + " does not match expected " +
                     std::to_string(*expected_dim));
  return bank;
}

void save_text_bank(const TextEmbeddingBank& bank, const std::filesystem::path& path) {
  nlohmann::json j = {{"dim", bank.dim()}, {"entries", nlohmann::json::array()}};
  for (const auto& e : bank.entries()) j["entries"].push_back({{"label", e.label}, {"vector", e.vector}});
  std::ofstream out(path);
  if (!out) throw InputError("cannot write text bank: " + path.string());
  out << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

float standardize(float unit_value, std::size_t channel, const ViTConfig& config) {
  return (unit_value - config.mean[channel]) / config.std[channel];
}

ImageTensor preprocess(const Raster& image, const ViTConfig& config) {
  if (image.channels != 3) throw InputError("preprocess expects an RGB raster");
  if (image.area() == 0) throw InputError("preprocess got a zero-area image");
  const std::size_t s = config.image_size;
  ImageTensor out(s);
  std::vector<float> plane(image.area());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < image.area(); ++i) plane[i] = image.pixels[i * 3 + c];
    std::vector<float> resized = (image.width == s && image.height == s)
                                     ? plane
                                     : resize_bicubic(plane, image.width, image.height, s, s);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < s * s; ++i) dst[i] = standardize(resized[i] / 255.0f, c, config);
  }
  return out;
}

}  // namespace cci
