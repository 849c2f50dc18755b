#include "cci/faith.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "cci/cci.hpp"
#include "cci/csv.hpp"
#include "cci/error.hpp"
#include "cci/log.hpp"
#include "cci/parallel.hpp"
#include "cci/rng.hpp"

namespace cci {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

void StepSchedule::validate() const {
  if (steps == 0) throw InputError("schedule needs at least one step");
  if (!(fraction_per_step > 0.0)) throw InputError("schedule fraction per step must be positive");
  if (static_cast<double>(steps) * fraction_per_step > 1.0 + 1e-12)
    throw InputError("schedule modifies more than the whole image (steps * fraction > 1)");
}

std::size_t StepSchedule::modified_after(std::size_t step, std::size_t pixels) const {
  const long double exact = static_cast<long double>(step) * fraction_per_step * static_cast<long double>(pixels);
  const auto count = static_cast<std::size_t>(std::floor(exact + 1e-9L));
  return std::min(count, pixels);
}

std::string to_string(CurveMode mode) { return mode == CurveMode::deletion ? "deletion" : "insertion"; }

double trapezoid_auc(std::span<const double> values) {
  if (values.size() < 2) return values.empty() ? 0.0 : values.front();
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) area += 0.5 * (values[i] + values[i + 1]);
  return area / static_cast<double>(values.size() - 1);
}

std::vector<std::string> ZeroShotResult::ranked_labels(const TextEmbeddingBank& bank) const {
  std::vector<std::string> out;
  out.reserve(ranking.size());
  for (std::size_t i : ranking) out.push_back(bank[i].label);
  return out;
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

ZeroShotResult zero_shot(std::span<const float> image_embedding, const TextEmbeddingBank& bank, std::size_t truth) {
  if (truth >= bank.size()) throw InputError("truth index outside the text bank");
  ZeroShotResult r;
  r.scores.resize(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) r.scores[i] = cosine(image_embedding, bank[i].vector);
  r.ranking = rank_by_score(r.scores);
  r.top1_hit = r.ranking.front() == truth;
  const std::size_t top = std::min<std::size_t>(5, r.ranking.size());
  r.top5_hit = std::find(r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(top), truth) !=
               r.ranking.begin() + static_cast<std::ptrdiff_t>(top);
  return r;
}

namespace {

std::size_t require_label(const TextEmbeddingBank& bank, std::string_view truth) {
  const auto idx = bank.index_of(truth);
  if (!idx) throw InputError("label not in text bank: " + std::string(truth));
  return *idx;
}

}  // namespace

ZeroShotResult zero_shot(const MaskedEncoder& encoder, const ImageTensor& image, const TextEmbeddingBank& bank,
                         std::string_view truth) {
  const std::size_t idx = require_label(bank, truth);
  return zero_shot(encoder.open(image)->embed(nullptr), bank, idx);
}

std::vector<std::size_t> pixel_ranking(const ScalarMap& map) {
  std::vector<std::size_t> order(map.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
  return order;
}

FaithfulnessCurve perturbation_curve(CurveMode mode, const ImageTensor& image, const ScalarMap& map,
                                     const HitFn& hits, const PerturbationOptions& options) {
  const StepSchedule& schedule = options.schedule;
  schedule.validate();
  if (map.size != image.size || map.values.size() != image.pixel_count())
    throw InputError("pixel map size does not match the image");
  const std::size_t pixels = image.pixel_count();
  const auto order = pixel_ranking(map);

  const auto [lo_it, hi_it] = std::minmax_element(image.data.begin(), image.data.end());
  const double lo = *lo_it, hi = *hi_it;
  Rng rng(schedule.noise_seed);
  auto noise = [&] { return static_cast<float>(rng.uniform(lo, hi)); };

  ImageTensor canvas = image;
  if (mode == CurveMode::insertion) {
    switch (options.blank) {
      case BlankMode::mean:
        std::fill(canvas.data.begin(), canvas.data.end(), 0.0f);
        break;
      case BlankMode::black:
        if (!options.config) throw InputError("black blank canvas needs the model config");
        for (std::size_t c = 0; c < 3; ++c) {
          auto plane = canvas.plane(c);
          std::fill(plane.begin(), plane.end(), standardize(0.0f, c, *options.config));
        }
        break;
      case BlankMode::noise:
        for (std::size_t p = 0; p < pixels; ++p)
          for (std::size_t c = 0; c < 3; ++c) canvas.data[c * pixels + p] = noise();
        break;
    }
  }

  FaithfulnessCurve curve;
  curve.mode = mode;
  auto record = [&](std::size_t modified) {
    const auto [t1, t5] = hits(canvas);
    curve.top1.push_back(t1 ? 1.0 : 0.0);
    curve.top5.push_back(t5 ? 1.0 : 0.0);
    curve.fraction_modified.push_back(static_cast<double>(modified) / static_cast<double>(pixels));
  };
  record(0);
  std::size_t done = 0;
  for (std::size_t step = 1; step <= schedule.steps; ++step) {
    const std::size_t target = schedule.modified_after(step, pixels);
    for (; done < target; ++done) {
      const std::size_t p = order[done];
      for (std::size_t c = 0; c < 3; ++c) {
        float& v = canvas.data[c * pixels + p];
        v = mode == CurveMode::deletion ? noise() : image.data[c * pixels + p];
      }
    }
    record(done);
  }
  curve.auc_top1 = trapezoid_auc(curve.top1);
  curve.auc_top5 = trapezoid_auc(curve.top5);
  return curve;
}

namespace {

HitFn classification_hits(const MaskedEncoder& encoder, const TextEmbeddingBank& bank, std::size_t truth) {
  return [&encoder, &bank, truth](const ImageTensor& canvas) {
    const auto r = zero_shot(encoder.open(canvas)->embed(nullptr), bank, truth);
    return std::pair{r.top1_hit, r.top5_hit};
  };
}

HitFn retrieval_hits(const MaskedEncoder& encoder, const TextEmbeddingBank& captions, std::size_t truth,
                     std::size_t k) {
  return [&encoder, &captions, truth, k](const ImageTensor& canvas) {
    const auto r = zero_shot(encoder.open(canvas)->embed(nullptr), captions, truth);
    const std::size_t top = std::min(k, r.ranking.size());
    const bool hit = std::find(r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(top), truth) !=
                     r.ranking.begin() + static_cast<std::ptrdiff_t>(top);
    return std::pair{hit, hit};
  };
}

}  // namespace

FaithfulnessCurve deletion_curve(const MaskedEncoder& encoder, const ImageTensor& image, const ScalarMap& map,
                                 const TextEmbeddingBank& bank, std::string_view truth,
                                 const PerturbationOptions& options) {
  return perturbation_curve(CurveMode::deletion, image, map,
                            classification_hits(encoder, bank, require_label(bank, truth)), options);
}

FaithfulnessCurve insertion_curve(const MaskedEncoder& encoder, const ImageTensor& image, const ScalarMap& map,
                                  const TextEmbeddingBank& bank, std::string_view truth,
                                  const PerturbationOptions& options) {
  return perturbation_curve(CurveMode::insertion, image, map,
                            classification_hits(encoder, bank, require_label(bank, truth)), options);
}

FaithfulnessCurve retrieval_curve(CurveMode mode, const MaskedEncoder& encoder, const ImageTensor& image,
                                  const ScalarMap& map, const TextEmbeddingBank& captions, std::size_t truth_caption,
                                  std::size_t k, const PerturbationOptions& options) {
  if (truth_caption >= captions.size()) throw InputError("truth caption index outside the caption bank");
  if (k == 0) throw InputError("retrieval k must be positive");
  return perturbation_curve(mode, image, map, retrieval_hits(encoder, captions, truth_caption, k), options);
}

// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  std::vector<ManifestEntry> out;
  const auto base = path.parent_path();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && row.size() >= 1 && row[0] == "path") continue;
    if (row.empty() || row[0].empty()) continue;
    ManifestEntry e;
    e.path = row[0];
    if (e.path.is_relative()) e.path = base / e.path;
    e.label = row.size() > 1 ? row[1] : "";
    e.id = e.path.stem().string();
    out.push_back(std::move(e));
  }
  return out;
}

ScalarMap CciMapProvider::map_for(const ImageTensor& image, const ManifestEntry&, std::span<const float> target) const {
  return compute_cci(encoder_, image, target, options_).pixel_map;
}

ScalarMap FileMapProvider::map_for(const ImageTensor&, const ManifestEntry& entry, std::span<const float>) const {
  const auto path = dir_ / (entry.id + ".f32");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing map file: " + path.string());
  ScalarMap map(size_);
  in.read(reinterpret_cast<char*>(map.values.data()), static_cast<std::streamsize>(map.values.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(map.values.size() * 4) || in.peek() != EOF)
    throw InputError("map file " + path.string() + " does not hold " + std::to_string(size_ * size_) + " floats");
  return map;
}

void write_map_file(const std::filesystem::path& path, const ScalarMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write map file: " + path.string());
  out.write(reinterpret_cast<const char*>(map.values.data()), static_cast<std::streamsize>(map.values.size() * 4));
}

FaithfulnessCurve average_curves(CurveMode mode, const std::vector<FaithfulnessCurve>& curves) {
  if (curves.empty()) throw InputError("no curves to average");
  FaithfulnessCurve out;
  out.mode = mode;
  const std::size_t n = curves.front().top1.size();
  out.top1.assign(n, 0.0);
  out.top5.assign(n, 0.0);
  out.fraction_modified = curves.front().fraction_modified;
  for (const auto& c : curves) {
    if (c.top1.size() != n) throw InputError("curves of different lengths");
    for (std::size_t i = 0; i < n; ++i) {
      out.top1[i] += c.top1[i];
      out.top5[i] += c.top5[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.top1[i] /= static_cast<double>(curves.size());
    out.top5[i] /= static_cast<double>(curves.size());
  }
  out.auc_top1 = trapezoid_auc(out.top1);
  out.auc_top5 = trapezoid_auc(out.top5);
  return out;
}

DatasetCurves dataset_curves(const std::vector<ManifestEntry>& manifest, const ImageLoader& load,
                             const MaskedEncoder& encoder, const MapProvider& maps, const TextEmbeddingBank& bank,
                             const std::vector<CurveMode>& modes, const PerturbationOptions& options,
                             const EvalTask& task, std::size_t workers) {
  options.schedule.validate();
  std::vector<std::optional<std::vector<FaithfulnessCurve>>> results(manifest.size());
  parallel_for(manifest.size(), workers, [&](std::size_t i) {
    const ManifestEntry& entry = manifest[i];
    ImageTensor image;
    std::size_t truth = 0;
    try {
      image = load(entry);
      truth = require_label(bank, entry.label);
    } catch (const Error& e) {
      log::warn("skip_image", {{"path", entry.path.string()}, {"reason", e.what()}});
      return;
    }
    const ScalarMap map = maps.map_for(image, entry, bank[truth].vector);
    PerturbationOptions local = options;
    local.schedule.noise_seed = splitmix64(options.schedule.noise_seed ^ splitmix64(i));
    const HitFn hits = task.kind == EvalTask::Kind::classification
                           ? classification_hits(encoder, bank, truth)
                           : retrieval_hits(encoder, bank, truth, task.retrieval_k);
    std::vector<FaithfulnessCurve> curves;
    for (CurveMode mode : modes) curves.push_back(perturbation_curve(mode, image, map, hits, local));
    results[i] = std::move(curves);
  });

  DatasetCurves out;
  out.per_image.resize(modes.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (!results[i]) {
      ++out.skipped;
      continue;
    }
    ++out.evaluated;
    out.image_ids.push_back(manifest[i].id);
    for (std::size_t m = 0; m < modes.size(); ++m) out.per_image[m].push_back((*results[i])[m]);
  }
  if (out.skipped > 0) log::warn("images_skipped", {{"count", out.skipped}});
  if (out.evaluated == 0) throw InputError("no images could be evaluated");
  for (std::size_t m = 0; m < modes.size(); ++m) out.per_mode.push_back(average_curves(modes[m], out.per_image[m]));
  return out;
}

std::string curve_csv(const FaithfulnessCurve& curve) {
  std::ostringstream out;
  out << "step,frac_modified,acc_top1,acc_top5\n" << std::setprecision(10);
  for (std::size_t i = 0; i < curve.top1.size(); ++i)
    out << i << ',' << curve.fraction_modified[i] << ',' << curve.top1[i] << ',' << curve.top5[i] << '\n';
  return out.str();
}

nlohmann::json curves_summary(const DatasetCurves& curves) {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& c : curves.per_mode) modes[to_string(c.mode)] = {{"auc_top1", c.auc_top1}, {"auc_top5", c.auc_top5}};
  return {{"images", curves.evaluated}, {"skipped", curves.skipped}, {"curves", modes}};
}

}  // namespace cci
