#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cci/cci.hpp"
#include "cci/image_tensor.hpp"
#include "cci/model_io.hpp"
#include "cci/vit.hpp"

namespace cci {

struct StepSchedule {
  std::size_t steps = 100;
  double fraction_per_step = 0.005;
  std::uint64_t noise_seed = 0;

  void validate() const;
  // Cumulative number of pixels modified after `step` steps:
  // floor(step * fraction * pixels), guarded against fp round-down.
  std::size_t modified_after(std::size_t step, std::size_t pixels) const;
};

enum class CurveMode { deletion, insertion };
enum class BlankMode { mean, black, noise };

std::string to_string(CurveMode mode);

struct FaithfulnessCurve {
  CurveMode mode = CurveMode::deletion;
  std::vector<double> top1;  // steps + 1 points
  std::vector<double> top5;
  std::vector<double> fraction_modified;
  double auc_top1 = 0.0;
  double auc_top5 = 0.0;
};

// Trapezoid rule over a step axis normalized to [0, 1].
double trapezoid_auc(std::span<const double> values);

struct ZeroShotResult {
  std::vector<std::size_t> ranking;  // bank indices, best first
  std::vector<double> scores;        // cosine per bank entry (bank order)
  bool top1_hit = false;
  bool top5_hit = false;

  std::vector<std::string> ranked_labels(const TextEmbeddingBank& bank) const;
};

// Descending by score; equal scores keep bank order.
std::vector<std::size_t> rank_by_score(std::span<const double> scores);

ZeroShotResult zero_shot(std::span<const float> image_embedding, const TextEmbeddingBank& bank, std::size_t truth);
ZeroShotResult zero_shot(const MaskedEncoder& encoder, const ImageTensor& image, const TextEmbeddingBank& bank,
                         std::string_view truth);

// Pixel order for perturbation: descending map value, ties by row-major index.
std::vector<std::size_t> pixel_ranking(const ScalarMap& map);

struct PerturbationOptions {
  StepSchedule schedule{};
  BlankMode blank = BlankMode::mean;
  const ViTConfig* config = nullptr;  // needed for BlankMode::black
};

// Hit indicators for one perturbed image, as (top1, top5).
using HitFn = std::function<std::pair<bool, bool>(const ImageTensor&)>;

// Generic deletion/insertion loop shared by classification and retrieval.
FaithfulnessCurve perturbation_curve(CurveMode mode, const ImageTensor& image, const ScalarMap& map,
                                     const HitFn& hits, const PerturbationOptions& options);

FaithfulnessCurve deletion_curve(const MaskedEncoder& encoder, const ImageTensor& image, const ScalarMap& map,
                                 const TextEmbeddingBank& bank, std::string_view truth,
                                 const PerturbationOptions& options = {});
FaithfulnessCurve insertion_curve(const MaskedEncoder& encoder, const ImageTensor& image, const ScalarMap& map,
                                  const TextEmbeddingBank& bank, std::string_view truth,
                                  const PerturbationOptions& options = {});

// Text retrieval direction: hit iff the truth caption is among the k best
// captions for the perturbed image. top1 holds the top-k indicator, top5 is a
// copy so both columns stay populated.
FaithfulnessCurve retrieval_curve(CurveMode mode, const MaskedEncoder& encoder, const ImageTensor& image,
                                  const ScalarMap& map, const TextEmbeddingBank& captions, std::size_t truth_caption,
                                  std::size_t k, const PerturbationOptions& options = {});

// ---------------------------------------------------------------------------
// Dataset aggregation
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::filesystem::path path;
  std::string label;
  std::string id;  // file stem
};

// CSV "path,label" (an optional header row "path,label" is skipped).
// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Produces a pixel map for one image with respect to a target text vector.
class MapProvider {
 public:
  virtual ~MapProvider() = default;
  virtual ScalarMap map_for(const ImageTensor& image, const ManifestEntry& entry, std::span<const float> target) const = 0;
};

class CciMapProvider final : public MapProvider {
 public:
  CciMapProvider(const MaskedEncoder& encoder, CciOptions options) : encoder_(encoder), options_(options) {}
  ScalarMap map_for(const ImageTensor& image, const ManifestEntry& entry, std::span<const float> target) const override;

 private:
  const MaskedEncoder& encoder_;
  CciOptions options_;
};

// Loads <dir>/<id>.f32: raw little-endian fp32, image_size^2 values.
class FileMapProvider final : public MapProvider {
 public:
  FileMapProvider(std::filesystem::path dir, std::size_t size) : dir_(std::move(dir)), size_(size) {}
  ScalarMap map_for(const ImageTensor& image, const ManifestEntry& entry, std::span<const float> target) const override;

 private:
  std::filesystem::path dir_;
  std::size_t size_;
};

void write_map_file(const std::filesystem::path& path, const ScalarMap& map);

struct EvalTask {
  enum class Kind { classification, retrieval } kind = Kind::classification;
  std::size_t retrieval_k = 5;
};

struct DatasetCurves {
  std::vector<FaithfulnessCurve> per_mode;               // aggregated, one per requested mode
  std::vector<std::vector<FaithfulnessCurve>> per_image;  // [mode][image]
  std::vector<std::string> image_ids;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Images load via `load` (which may throw; the entry is then skipped and
// counted). Per-step accuracy is averaged over evaluated images.
using ImageLoader = std::function<ImageTensor(const ManifestEntry&)>;

DatasetCurves dataset_curves(const std::vector<ManifestEntry>& manifest, const ImageLoader& load,
                             const MaskedEncoder& encoder, const MapProvider& maps, const TextEmbeddingBank& bank,
                             const std::vector<CurveMode>& modes, const PerturbationOptions& options,
                             const EvalTask& task = {}, std::size_t workers = 1);

// Average of per-image curves, AUC recomputed on the mean curve.
FaithfulnessCurve average_curves(CurveMode mode, const std::vector<FaithfulnessCurve>& curves);

// step,frac_modified,acc_top1,acc_top5
std::string curve_csv(const FaithfulnessCurve& curve);
nlohmann::json curves_summary(const DatasetCurves& curves);

}  // namespace cci
