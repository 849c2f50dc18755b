#include "cci/diagnose.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cci/error.hpp"

namespace cci {

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) throw InputError("iou of masks with different shapes");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]);
    uni += (a.bits[i] || b.bits[i]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string foreground_prompt(std::string_view class_name) {
  return std::string(class_name) + ", foreground objects";
}

std::vector<std::size_t> select_clusters(std::span<const double> weights, double mass) {
  double positive = 0.0;
  for (double w : weights) positive += std::max(w, 0.0);
  if (positive <= 0.0) return {};
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::vector<std::size_t> chosen;
  double cumulative = 0.0;
  for (std::size_t k : order) {
    if (!chosen.empty() && (cumulative >= mass * positive || weights[k] <= 0.0)) break;
    chosen.push_back(k);
    cumulative += std::max(weights[k], 0.0);
  }
  return chosen;
}

Binarized binarize_heatmap(const ImportanceMap& map, std::size_t image_size, double mass) {
  Binarized out;
  out.mask = BinaryMask(image_size, image_size);
  if (map.score.degenerate) {
    out.degenerate = true;
    return out;
  }
  out.clusters = select_clusters(map.score.weights, mass);
  if (out.clusters.empty()) {
    out.degenerate = true;
    return out;
  }
  const std::size_t g = map.grid.size;
  BinaryMask patches(g, g);
  for (std::size_t j = 0; j < g * g; ++j)
    patches.bits[j] = std::find(out.clusters.begin(), out.clusters.end(), map.clusters.assignment[j]) !=
                      out.clusters.end();
  out.mask = resize_nearest(patches, image_size, image_size);
  return out;
}

std::string to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::correct: return "Correct";
    case ErrorCategory::bg_error: return "BG-Er";
    case ErrorCategory::fine_error: return "Fine-Er";
    case ErrorCategory::other_fg_error: return "Other-FG-Er";
    case ErrorCategory::degenerate: return "Degenerate";
  }
  return "Degenerate";
}

ErrorRecord classify(std::string image_id, const ImportanceMap* map, const BinaryMask& foreground, std::string gt,
                     std::string pred, SimilarityJudge& judge, double mass) {
  ErrorRecord r;
  r.image_id = std::move(image_id);
  r.gt = std::move(gt);
  r.pred = std::move(pred);
  r.correct = r.gt == r.pred;
  const BinaryMask background = foreground.complement();
  if (map) {
    const Binarized b = binarize_heatmap(*map, foreground.width, mass);
    if (foreground.width != foreground.height) throw InputError("foreground mask must be square");
    if (!b.degenerate) {
      r.iou_fg = iou(b.mask, foreground);
      r.iou_bg = iou(b.mask, background);
    }
    if (!r.correct && b.degenerate) {
      r.category = ErrorCategory::degenerate;
      return r;
    }
  } else if (!r.correct) {
    throw InputError("misclassified record " + r.image_id + " needs a heatmap");
  }
  if (r.correct) {
    r.category = ErrorCategory::correct;
  } else if (r.iou_bg > r.iou_fg) {
    r.category = ErrorCategory::bg_error;
  } else {
    r.judge_verdict = judge.judge(r.gt, r.pred);
    r.category = *r.judge_verdict == Verdict::similar ? ErrorCategory::fine_error : ErrorCategory::other_fg_error;
  }
  return r;
}

TaxonomyReport aggregate_taxonomy(std::span<const ErrorRecord> records) {
  TaxonomyReport t;
  t.total = records.size();
  for (const auto& r : records) ++t.counts[static_cast<std::size_t>(r.category)];
  t.errors = t.total - t.counts[static_cast<std::size_t>(ErrorCategory::correct)];
  for (std::size_t c = 0; c < kAllCategories.size(); ++c) {
    t.fraction_of_all[c] = t.total ? static_cast<double>(t.counts[c]) / static_cast<double>(t.total) : 0.0;
    const bool is_error = kAllCategories[c] != ErrorCategory::correct;
    t.fraction_of_errors[c] =
        (is_error && t.errors) ? static_cast<double>(t.counts[c]) / static_cast<double>(t.errors) : 0.0;
  }
  return t;
}

nlohmann::json to_json(const ErrorRecord& r) {
  nlohmann::json j = {{"image_id", r.image_id}, {"gt", r.gt},         {"pred", r.pred},
                      {"correct", r.correct},   {"iou_fg", r.iou_fg}, {"iou_bg", r.iou_bg},
                      {"category", to_string(r.category)}};
  j["judge_verdict"] = r.judge_verdict ? nlohmann::json(to_string(*r.judge_verdict)) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const TaxonomyReport& t) {
  nlohmann::json counts, all, errors;
  for (std::size_t c = 0; c < kAllCategories.size(); ++c) {
    const std::string name = to_string(kAllCategories[c]);
    counts[name] = t.counts[c];
    all[name] = t.fraction_of_all[c];
    errors[name] = t.fraction_of_errors[c];
  }
  return {{"total", t.total}, {"errors", t.errors}, {"counts", counts}, {"fraction_of_all", all},
          {"fraction_of_errors", errors}};
}

std::string taxonomy_csv(const TaxonomyReport& t) {
  std::ostringstream out;
  out << "category,count,fraction_all,fraction_errors\n" << std::setprecision(10);
  for (std::size_t c = 0; c < kAllCategories.size(); ++c)
    out << to_string(kAllCategories[c]) << ',' << t.counts[c] << ',' << t.fraction_of_all[c] << ','
        << t.fraction_of_errors[c] << '\n';
  return out.str();
}

}  // namespace cci
