#include "cci/covar.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>

#include "cci/csv.hpp"
#include "cci/error.hpp"
#include "cci/log.hpp"
#include "cci/parallel.hpp"
#include "cci/rng.hpp"

namespace cci {
namespace {

// Mirror without repeating the edge sample (…2 1 0 1 2…).
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

// Runs the user hook on (image, mask of pixels to synthesize) and returns
// its output, which must keep the input size.
Raster run_hook(const Raster& image, const BinaryMask& fill_mask, const std::string& command) {
  if (command.empty()) throw InputError("hook fill requested without a hook command");
  static std::atomic<std::uint64_t> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("cci_hook_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  const auto in = dir / "in.png", mask = dir / "mask.png", out = dir / "out.png";
  write_png(in, image);
  write_png(mask, mask_to_raster(fill_mask));
  const std::string cmd = command + " '" + in.string() + "' '" + mask.string() + "' '" + out.string() + "'";
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    std::filesystem::remove_all(dir);
    throw ServiceError("hook command failed with status " + std::to_string(status) + ": " + command);
  }
  Raster result = read_png(out);
  std::filesystem::remove_all(dir);
  if (result.width != image.width || result.height != image.height)
    throw ServiceError("hook output size differs from its input");
  return result;
}

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::hflip: return "hflip";
    case TransformKind::vflip: return "vflip";
    case TransformKind::rotate: return "rotate";
    case TransformKind::crop: return "crop";
    case TransformKind::translate: return "translate";
    case TransformKind::scale: return "scale";
    case TransformKind::viewpoint: return "viewpoint";
  }
  return "hflip";
}

TransformKind transform_kind_from_string(std::string_view name) {
  for (auto k : {TransformKind::hflip, TransformKind::vflip, TransformKind::rotate, TransformKind::crop,
                 TransformKind::translate, TransformKind::scale, TransformKind::viewpoint})
    if (to_string(k) == name) return k;
  throw InputError("unknown transform kind: " + std::string(name));
}

namespace {

std::string fill_name(FillMode m) {
  switch (m) {
    case FillMode::constant: return "constant";
    case FillMode::reflect: return "reflect";
    case FillMode::hook: return "hook";
  }
  return "reflect";
}

FillMode fill_from_name(const std::string& s) {
  if (s == "constant") return FillMode::constant;
  if (s == "reflect") return FillMode::reflect;
  if (s == "hook") return FillMode::hook;
  throw InputError("unknown fill mode: " + s);
}

}  // namespace

void TransformSpec::validate(std::size_t width, std::size_t height) const {
  switch (kind) {
    case TransformKind::rotate:
      if (!(std::abs(angle_deg) <= kMaxRotationDeg)) throw InputError("rotation angle outside [-45, 45] degrees");
      break;
    case TransformKind::crop:
      if (!(area_fraction >= kMinCropArea && area_fraction <= kMaxCropArea))
        throw InputError("crop area fraction outside [0.6, 0.9]");
      break;
    case TransformKind::translate:
      if (static_cast<double>(std::abs(dx)) > kMaxShiftFraction * static_cast<double>(width) + 1e-9 ||
          static_cast<double>(std::abs(dy)) > kMaxShiftFraction * static_cast<double>(height) + 1e-9)
        throw InputError("translation exceeds 20% of the image size");
      break;
    case TransformKind::scale:
      if (!(scale > 1.0 && scale <= kMaxScaleFactor)) throw InputError("scale factor outside (1, 8]");
      break;
    default:
      break;
  }
}

nlohmann::json TransformSpec::params() const {
  nlohmann::json j = {{"kind", to_string(kind)}, {"seed", seed}, {"fill", fill_name(fill.mode)}};
  switch (kind) {
    case TransformKind::rotate: j["angle_deg"] = angle_deg; break;
    case TransformKind::crop: j["area_fraction"] = area_fraction; break;
    case TransformKind::translate:
      j["dx"] = dx;
      j["dy"] = dy;
      break;
    case TransformKind::scale: j["scale"] = scale; break;
    default: break;
  }
  if (fill.mode == FillMode::constant) j["fill_color"] = fill.color;
  if (fill.mode == FillMode::hook) j["hook"] = fill.hook_command;
  return j;
}

TransformSpec TransformSpec::from_params(TransformKind kind, const nlohmann::json& j) {
  TransformSpec s;
  s.kind = kind;
  try {
    s.seed = j.value("seed", std::uint64_t{0});
    s.angle_deg = j.value("angle_deg", 0.0);
    s.area_fraction = j.value("area_fraction", 0.0);
    s.dx = j.value("dx", std::int64_t{0});
    s.dy = j.value("dy", std::int64_t{0});
    s.scale = j.value("scale", 1.0);
    s.fill.mode = fill_from_name(j.value("fill", std::string("reflect")));
    s.fill.color = j.value("fill_color", s.fill.color);
    s.fill.hook_command = j.value("hook", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed transform parameters: ") + e.what());
  }
  return s;
}

TransformSpec sample_spec(TransformKind kind, std::uint64_t seed, std::size_t width, std::size_t height,
                          double scale, FillPolicy fill) {
  Rng rng(seed);
  TransformSpec s;
  s.kind = kind;
  s.seed = seed;
  s.fill = std::move(fill);
  switch (kind) {
    case TransformKind::rotate: s.angle_deg = rng.uniform(-kMaxRotationDeg, kMaxRotationDeg); break;
    case TransformKind::crop: s.area_fraction = rng.uniform(kMinCropArea, kMaxCropArea); break;
    case TransformKind::translate: {
      const auto mx = static_cast<std::int64_t>(std::floor(kMaxShiftFraction * static_cast<double>(width)));
      const auto my = static_cast<std::int64_t>(std::floor(kMaxShiftFraction * static_cast<double>(height)));
      s.dx = rng.uniform_int(-mx, mx);
      s.dy = rng.uniform_int(-my, my);
      break;
    }
    case TransformKind::scale: s.scale = scale; break;
    default: break;
  }
  s.validate(width, height);
  return s;
}

Raster hflip(const Raster& image) {
  Raster out = image;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(image.width - 1 - x, y, c);
  return out;
}

Raster vflip(const Raster& image) {
  Raster out = image;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(x, image.height - 1 - y, c);
  return out;
}

Raster rotate(const Raster& image, double angle_deg, const FillPolicy& fill) {
  if (angle_deg == 0.0) return image;
  const auto w = static_cast<std::ptrdiff_t>(image.width), h = static_cast<std::ptrdiff_t>(image.height);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  Raster out(image.width, image.height, image.channels);
  BinaryMask exposed(image.width, image.height);

  auto sample = [&](std::ptrdiff_t x, std::ptrdiff_t y, std::size_t c) -> double {
    if (x >= 0 && x < w && y >= 0 && y < h) return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
    if (fill.mode == FillMode::reflect)
      return image.at(static_cast<std::size_t>(reflect_index(x, w)), static_cast<std::size_t>(reflect_index(y, h)), c);
    return fill.color[std::min<std::size_t>(c, 2)];
  };

  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = cx + dx * cs - dy * sn;
      const double sy = cy + dx * sn + dy * cs;
      if (sx < -0.5 || sy < -0.5 || sx > static_cast<double>(w) - 0.5 || sy > static_cast<double>(h) - 0.5)
        exposed.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), true);
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = (1 - ax) * (1 - ay) * sample(x0, y0, c) + ax * (1 - ay) * sample(x0 + 1, y0, c) +
                         (1 - ax) * ay * sample(x0, y0 + 1, c) + ax * ay * sample(x0 + 1, y0 + 1, c);
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = to_u8(v);
      }
    }
  }
  if (fill.mode == FillMode::hook) return run_hook(out, exposed, fill.hook_command);
  return out;
}

Raster crop_center(const Raster& image, double area_fraction) {
  if (!(area_fraction > 0.0 && area_fraction <= 1.0)) throw InputError("crop area fraction must be in (0, 1]");
  const double side = std::sqrt(area_fraction);
  const auto cw = static_cast<std::size_t>(std::lround(static_cast<double>(image.width) * side));
  const auto ch = static_cast<std::size_t>(std::lround(static_cast<double>(image.height) * side));
  if (cw == 0 || ch == 0) throw InputError("crop produces a zero-area image");
  const std::size_t x0 = (image.width - cw) / 2, y0 = (image.height - ch) / 2;
  Raster out(cw, ch, image.channels);
  for (std::size_t y = 0; y < ch; ++y)
    for (std::size_t x = 0; x < cw; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(x0 + x, y0 + y, c);
  return out;
}

Raster resize_bilinear(const Raster& image, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || image.area() == 0) throw InputError("resize with zero-area image");
  Raster out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ay = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx =
          std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double ax = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = (1 - ax) * (1 - ay) * image.at(x0, y0, c) + ax * (1 - ay) * image.at(x1, y0, c) +
                         (1 - ax) * ay * image.at(x0, y1, c) + ax * ay * image.at(x1, y1, c);
        out.at(x, y, c) = to_u8(v);
      }
    }
  }
  return out;
}

Raster crop(const Raster& image, double area_fraction) {
  return resize_bilinear(crop_center(image, area_fraction), image.width, image.height);
}

Raster translate(const Raster& image, std::int64_t dx, std::int64_t dy, const FillPolicy& fill) {
  const auto w = static_cast<std::ptrdiff_t>(image.width), h = static_cast<std::ptrdiff_t>(image.height);
  Raster out(image.width, image.height, image.channels);
  BinaryMask exposed(image.width, image.height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::ptrdiff_t sx = x - dx, sy = y - dy;
      const bool inside = sx >= 0 && sx < w && sy >= 0 && sy < h;
      if (!inside) exposed.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), true);
      for (std::size_t c = 0; c < image.channels; ++c) {
        std::uint8_t v;
        if (inside) v = image.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
        else if (fill.mode == FillMode::constant) v = fill.color[std::min<std::size_t>(c, 2)];
        else v = image.at(static_cast<std::size_t>(reflect_index(sx, w)), static_cast<std::size_t>(reflect_index(sy, h)), c);
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = v;
      }
    }
  }
  if (fill.mode == FillMode::hook) return run_hook(out, exposed, fill.hook_command);
  return out;
}

Raster scale_canvas(const Raster& image, double factor, const FillPolicy& fill) {
  if (!(factor >= 1.0 && factor <= kMaxScaleFactor)) throw InputError("scale factor outside [1, 8]");
  const auto cw = static_cast<std::size_t>(std::lround(static_cast<double>(image.width) * factor));
  const auto ch = static_cast<std::size_t>(std::lround(static_cast<double>(image.height) * factor));
  const auto ox = static_cast<std::ptrdiff_t>((cw - image.width) / 2);
  const auto oy = static_cast<std::ptrdiff_t>((ch - image.height) / 2);
  const auto w = static_cast<std::ptrdiff_t>(image.width), h = static_cast<std::ptrdiff_t>(image.height);
  Raster out(cw, ch, image.channels);
  BinaryMask margin(cw, ch);
  for (std::size_t y = 0; y < ch; ++y) {
    for (std::size_t x = 0; x < cw; ++x) {
      const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) - ox, sy = static_cast<std::ptrdiff_t>(y) - oy;
      const bool inside = sx >= 0 && sx < w && sy >= 0 && sy < h;
      if (!inside) margin.set(x, y, true);
      for (std::size_t c = 0; c < image.channels; ++c) {
        std::uint8_t v;
        if (inside) v = image.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
        else if (fill.mode == FillMode::constant) v = fill.color[std::min<std::size_t>(c, 2)];
        else v = image.at(static_cast<std::size_t>(reflect_index(sx, w)), static_cast<std::size_t>(reflect_index(sy, h)), c);
        out.at(x, y, c) = v;
      }
    }
  }
  if (fill.mode == FillMode::hook) return run_hook(out, margin, fill.hook_command);
  return out;
}

Raster apply(const Raster& image, const TransformSpec& spec) {
  if (image.area() == 0) throw InputError("transform of a zero-area image");
  spec.validate(image.width, image.height);
  switch (spec.kind) {
    case TransformKind::hflip: return hflip(image);
    case TransformKind::vflip: return vflip(image);
    case TransformKind::rotate: return rotate(image, spec.angle_deg, spec.fill);
    case TransformKind::crop: return crop(image, spec.area_fraction);
    case TransformKind::translate: return translate(image, spec.dx, spec.dy, spec.fill);
    case TransformKind::scale: return scale_canvas(image, spec.scale, spec.fill);
    case TransformKind::viewpoint: throw InputError("viewpoint variants come from an external generator");
  }
  throw InputError("unknown transform");
}

// ---------------------------------------------------------------------------

VariantKind parse_variant_kind(std::string_view token) {
  VariantKind v;
  v.token = std::string(token);
  const auto colon = token.find(':');
  const std::string_view name = token.substr(0, colon);
  v.kind = transform_kind_from_string(name);
  const std::string arg = colon == std::string_view::npos ? "" : std::string(token.substr(colon + 1));
  try {
    if (v.kind == TransformKind::scale) {
      if (arg.empty()) throw InputError("scale kind needs a factor, e.g. scale:4");
      v.scale = std::stod(arg);
      if (!(v.scale > 1.0 && v.scale <= kMaxScaleFactor)) throw InputError("scale factor outside (1, 8]: " + arg);
    } else if (v.kind == TransformKind::viewpoint) {
      v.view = arg.empty() ? 1 : std::stoi(arg);
    } else if (!arg.empty()) {
      throw InputError("kind " + std::string(name) + " takes no argument");
    }
  } catch (const std::logic_error&) {
    throw InputError("malformed variant kind: " + std::string(token));
  }
  return v;
}

std::vector<std::string> default_variant_kinds() {
  return {"scale:2", "scale:4", "scale:6", "scale:8", "viewpoint:1", "viewpoint:2",
          "hflip",   "vflip",   "translate", "crop", "rotate"};
}

std::uint64_t variant_seed(std::uint64_t seed, std::size_t index, std::string_view token) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(index >> (8 * i)));
  for (char c : token) mix(static_cast<std::uint8_t>(c));
  return h;
}

namespace {

std::string file_token(const std::string& token) {
  std::string out = token;
  std::replace(out.begin(), out.end(), ':', '_');
  return out;
}

}  // namespace

SubsetResult make_subset(const std::vector<ManifestEntry>& manifest, const SubsetOptions& options) {
  std::vector<VariantKind> kinds;
  for (const auto& k : options.kinds) kinds.push_back(parse_variant_kind(k));
  std::filesystem::create_directories(options.out_dir);

  std::vector<std::optional<std::vector<VariantRow>>> results(manifest.size());
  parallel_for(manifest.size(), options.workers, [&](std::size_t i) {
    const ManifestEntry& entry = manifest[i];
    Raster image;
    try {
      image = read_png(entry.path);
    } catch (const Error& e) {
      log::warn("skip_image", {{"path", entry.path.string()}, {"reason", e.what()}});
      return;
    }
    std::vector<VariantRow> rows;
    for (const auto& kind : kinds) {
      VariantRow row;
      row.src = entry.path.string();
      row.kind = kind.token;
      const std::uint64_t seed = variant_seed(options.seed, i, kind.token);
      if (kind.kind == TransformKind::viewpoint) {
        row.params_json = nlohmann::json{{"kind", "viewpoint"}, {"view", kind.view}, {"seed", seed},
                                         {"status", "hook-pending"}}
                              .dump();
        rows.push_back(std::move(row));
        continue;
      }
      const TransformSpec spec = sample_spec(kind.kind, seed, image.width, image.height, kind.scale, options.fill);
      const auto out_path =
          options.out_dir / (std::to_string(i) + "_" + entry.path.stem().string() + "_" + file_token(kind.token) + ".png");
      write_png(out_path, apply(image, spec));
      row.params_json = spec.params().dump();
      row.out_path = out_path.string();
      rows.push_back(std::move(row));
    }
    results[i] = std::move(rows);
  });

  SubsetResult out;
  for (auto& r : results) {
    if (!r) {
      ++out.skipped;
      continue;
    }
    for (auto& row : *r) out.rows.push_back(std::move(row));
  }
  write_variant_manifest(options.out_dir / "variants.csv", out.rows);
  return out;
}

void write_variant_manifest(const std::filesystem::path& path, const std::vector<VariantRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write variant manifest: " + path.string());
  out << "src,kind,params_json,out_path\n";
  for (const auto& r : rows) out << csv::format_row({r.src, r.kind, r.params_json, r.out_path}) << '\n';
}

std::vector<VariantRow> read_variant_manifest(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  std::vector<VariantRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == 0 && !rows[i].empty() && rows[i][0] == "src") continue;
    if (rows[i].size() != 4) throw InputError("variant manifest row " + std::to_string(i) + " needs 4 fields");
    out.push_back({rows[i][0], rows[i][1], rows[i][2], rows[i][3]});
  }
  return out;
}

Raster regenerate(const VariantRow& row) {
  const VariantKind kind = parse_variant_kind(row.kind);
  if (kind.kind == TransformKind::viewpoint) throw InputError("viewpoint rows are produced by an external generator");
  nlohmann::json params;
  try {
    params = nlohmann::json::parse(row.params_json);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed params_json: ") + e.what());
  }
  return apply(read_png(row.src), TransformSpec::from_params(kind.kind, params));
}

}  // namespace cci
