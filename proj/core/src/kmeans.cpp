#include "cci/kmeans.hpp"

#include <cmath>
#include <limits>

#include "cci/error.hpp"
#include "cci/rng.hpp"

namespace cci {
namespace {

double sq_dist(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    s += diff * diff;
  }
  return s;
}

// Nearest centroid, lowest index on ties.
std::size_t nearest(std::span<const float> point, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = sq_dist(point, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

std::size_t ClusterSet::cluster_size(std::size_t cluster) const {
  std::size_t n = 0;
  for (std::size_t a : assignment) n += a == cluster;
  return n;
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (float v : row) sq += static_cast<double>(v) * v;
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : row) v = static_cast<float>(v * inv);
  }
  return out;
}

double within_cluster_ss(const Matrix& points, const std::vector<std::size_t>& assignment, const Matrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) total += sq_dist(points.row(i), centroids.row(assignment[i]));
  return total;
}

std::vector<std::size_t> kmeanspp_seeds(const Matrix& points, std::size_t k, std::uint64_t seed) {
  const std::size_t n = points.rows();
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  chosen.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
  taken[chosen.back()] = true;

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = sq_dist(points.row(i), points.row(chosen.back()));

  while (chosen.size() < k) {
    double total = 0.0;
    for (double d : dist) total += d;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cumulative += dist[i];
        if (dist[i] > 0.0 && cumulative > target) {
          pick = i;
          break;
        }
      }
      // Guard against landing on a zero-distance tail through rounding.
      while (dist[pick] == 0.0 && pick > 0) --pick;
    } else {
      while (pick < n && taken[pick]) ++pick;
      if (pick == n) pick = 0;
    }
    chosen.push_back(pick);
    taken[pick] = true;
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], sq_dist(points.row(i), points.row(pick)));
  }
  return chosen;
}

ClusterSet kmeans(const Matrix& features, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
  const std::size_t n = features.rows();
  if (k < 1 || k > n)
    throw InputError("k-means needs 1 <= K <= N (K = " + std::to_string(k) + ", N = " + std::to_string(n) + ")");
  for (float v : features.values())
    if (!std::isfinite(v)) throw InputError("k-means features contain non-finite values");

  const Matrix points = options.normalize_rows ? normalize_rows(features) : features;
  const std::size_t f = points.cols();

  ClusterSet set;
  set.k = k;
  set.seed = seed;
  set.centroids = Matrix(k, f);
  const auto seeds = kmeanspp_seeds(points, k, seed);
  for (std::size_t c = 0; c < k; ++c)
    std::copy(points.row(seeds[c]).begin(), points.row(seeds[c]).end(), set.centroids.row(c).begin());

  set.assignment.assign(n, 0);
  std::vector<double> sums(k * f);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(points.row(i), set.centroids);
      changed |= c != set.assignment[i];
      set.assignment[i] = c;
    }
    if (iter > 0 && !changed) break;
    set.iterations = iter + 1;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = set.assignment[i];
      ++counts[c];
      const auto row = points.row(i);
      for (std::size_t e = 0; e < f; ++e) sums[c * f + e] += row[e];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto centroid = set.centroids.row(c);
      for (std::size_t e = 0; e < f; ++e) centroid[e] = static_cast<float>(sums[c * f + e] / counts[c]);
    }

    std::vector<bool> reused(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (reused[i]) continue;
        const double d = sq_dist(points.row(i), set.centroids.row(set.assignment[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      reused[far] = true;
      std::copy(points.row(far).begin(), points.row(far).end(), set.centroids.row(c).begin());
    }
    set.history.push_back(within_cluster_ss(points, set.assignment, set.centroids));
  }
  set.objective = within_cluster_ss(points, set.assignment, set.centroids);
  return set;
}

std::vector<ClusterMask> cluster_masks(const ClusterSet& set) {
  std::vector<ClusterMask> masks(set.k, ClusterMask(set.assignment.size()));
  for (std::size_t j = 0; j < set.assignment.size(); ++j) masks[set.assignment[j]].set(j, true);
  return masks;
}

}  // namespace cci
