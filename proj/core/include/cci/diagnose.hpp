#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cci/cci.hpp"
#include "cci/judge.hpp"
#include "cci/raster.hpp"

namespace cci {

// |a & b| / |a | b|, 0 when both are empty. Throws InputError on shape mismatch.
double iou(const BinaryMask& a, const BinaryMask& b);

// Prompt handed to the external segmenter for foreground masks.
std::string foreground_prompt(std::string_view class_name);

struct Binarized {
  BinaryMask mask;
  std::vector<std::size_t> clusters;  // selected, in selection order
  bool degenerate = false;
};

// Clusters in descending weight (lower index first on ties) until the
// cumulative weight reaches `mass` of the total positive weight. At least
// one cluster is taken. Empty when there is no positive weight.
std::vector<std::size_t> select_clusters(std::span<const double> weights, double mass);

// Selected clusters expanded from the patch lattice to pixels by nearest
// neighbour. degenerate when the score is degenerate or has no positive weight.
Binarized binarize_heatmap(const ImportanceMap& map, std::size_t image_size, double mass = 0.5);

enum class ErrorCategory { correct, bg_error, fine_error, other_fg_error, degenerate };
inline constexpr std::array kAllCategories{ErrorCategory::correct, ErrorCategory::bg_error, ErrorCategory::fine_error,
                                           ErrorCategory::other_fg_error, ErrorCategory::degenerate};

std::string to_string(ErrorCategory category);

struct ErrorRecord {
  std::string image_id;
  std::string gt;
  std::string pred;
  bool correct = false;
  double iou_fg = 0.0;
  double iou_bg = 0.0;
  ErrorCategory category = ErrorCategory::correct;
  std::optional<Verdict> judge_verdict;
};

// Correct when gt == pred. Otherwise BG-Er when iou(bmap, bg) > iou(bmap, fg)
// (ties go to foreground), else the judge splits Fine-Er / Other-FG-Er.
// `map` must be computed for the predicted class; it may be null for
// correct predictions.
ErrorRecord classify(std::string image_id, const ImportanceMap* map, const BinaryMask& foreground, std::string gt,
                     std::string pred, SimilarityJudge& judge, double mass = 0.5);

struct TaxonomyReport {
  std::size_t total = 0;
  std::size_t errors = 0;
  std::array<std::size_t, kAllCategories.size()> counts{};
  std::array<double, kAllCategories.size()> fraction_of_all{};
  std::array<double, kAllCategories.size()> fraction_of_errors{};  // correct entry is always 0
};

TaxonomyReport aggregate_taxonomy(std::span<const ErrorRecord> records);

nlohmann::json to_json(const ErrorRecord& record);
nlohmann::json to_json(const TaxonomyReport& report);
// category,count,fraction_all,fraction_errors
std::string taxonomy_csv(const TaxonomyReport& report);

}  // namespace cci
