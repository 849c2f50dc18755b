#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cci/faith.hpp"
#include "cci/raster.hpp"

namespace cci {

enum class TransformKind { hflip, vflip, rotate, crop, translate, scale, viewpoint };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(std::string_view name);

enum class FillMode { constant, reflect, hook };

struct FillPolicy {
  FillMode mode = FillMode::reflect;
  std::array<std::uint8_t, 3> color{0, 0, 0};  // constant mode
  std::string hook_command;                     // invoked as <cmd> <in.png> <mask.png> <out.png>
};

inline constexpr double kMaxRotationDeg = 45.0;
inline constexpr double kMinCropArea = 0.6;
inline constexpr double kMaxCropArea = 0.9;
inline constexpr double kMaxShiftFraction = 0.2;
inline constexpr double kMaxScaleFactor = 8.0;

struct TransformSpec {
  TransformKind kind = TransformKind::hflip;
  double angle_deg = 0.0;      // rotate, counter-clockwise as displayed
  double area_fraction = 0.0;  // crop
  std::int64_t dx = 0;         // translate, pixels (+ right)
  std::int64_t dy = 0;         // translate, pixels (+ down)
  double scale = 1.0;          // canvas factor per side
  std::uint64_t seed = 0;
  FillPolicy fill{};

  // Range checks against an image of the given size. Throws InputError.
  void validate(std::size_t width, std::size_t height) const;
  nlohmann::json params() const;
  static TransformSpec from_params(TransformKind kind, const nlohmann::json& params);
};

// Draws the kind's free parameter from `seed` (angle in [-45, 45], crop area
// in [0.6, 0.9], shifts up to 20% per axis). Scale takes `scale` verbatim.
TransformSpec sample_spec(TransformKind kind, std::uint64_t seed, std::size_t width, std::size_t height,
                          double scale = 2.0, FillPolicy fill = {});

Raster hflip(const Raster& image);
Raster vflip(const Raster& image);
// Bilinear resampling about the image centre; angle 0 returns a copy.
Raster rotate(const Raster& image, double angle_deg, const FillPolicy& fill);
// Centered window covering `area_fraction` of the area (side ratio
// sqrt(area)), without resizing.
Raster crop_center(const Raster& image, double area_fraction);
Raster crop(const Raster& image, double area_fraction);  // crop_center then bilinear resize back
Raster translate(const Raster& image, std::int64_t dx, std::int64_t dy, const FillPolicy& fill);
// Original pixels copied unchanged into the centre of a round(w * f) x
// round(h * f) canvas; the margin is filled per policy.
Raster scale_canvas(const Raster& image, double factor, const FillPolicy& fill);

Raster resize_bilinear(const Raster& image, std::size_t width, std::size_t height);

// Viewpoint specs are hook-only and throw here.
Raster apply(const Raster& image, const TransformSpec& spec);

// Tokens such as "hflip", "rotate", "scale:4", "viewpoint:1".
struct VariantKind {
  TransformKind kind;
  double scale = 0.0;
  int view = 0;
  std::string token;
};

VariantKind parse_variant_kind(std::string_view token);
// Four scales, two viewpoints, hflip, vflip, translate, crop, rotate.
std::vector<std::string> default_variant_kinds();

struct VariantRow {
  std::string src;
  std::string kind;
  std::string params_json;
  std::string out_path;  // empty for hook-pending rows
};

struct SubsetOptions {
  std::vector<std::string> kinds = default_variant_kinds();
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "variants";
  FillPolicy fill{};
  std::size_t workers = 1;
};

struct SubsetResult {
  std::vector<VariantRow> rows;
  std::size_t skipped = 0;
};

// Seed used for the row of manifest entry `index` and kind `token`.
std::uint64_t variant_seed(std::uint64_t seed, std::size_t index, std::string_view token);

// Writes one PNG per (image, kind) and <out_dir>/variants.csv
// (src,kind,params_json,out_path). Unreadable images are logged and skipped.
SubsetResult make_subset(const std::vector<ManifestEntry>& manifest, const SubsetOptions& options);

std::vector<VariantRow> read_variant_manifest(const std::filesystem::path& path);
void write_variant_manifest(const std::filesystem::path& path, const std::vector<VariantRow>& rows);

// Recomputes a row's output from its source and recorded parameters.
Raster regenerate(const VariantRow& row);

}  // namespace cci
