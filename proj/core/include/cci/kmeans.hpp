#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cci/tensor.hpp"
#include "cci/vit.hpp"

namespace cci {

struct KMeansOptions {
  std::size_t max_iterations = 300;
  bool normalize_rows = true;  // cluster L2-normalized rows
};

struct ClusterSet {
  std::size_t k = 0;
  std::vector<std::size_t> assignment;  // one cluster index per point
  Matrix centroids;                     // k x f, in the (possibly normalized) feature space
  double objective = 0.0;               // within-cluster sum of squared distances
  std::vector<double> history;          // objective after every centroid update
  std::size_t iterations = 0;
  std::uint64_t seed = 0;

  std::size_t cluster_size(std::size_t cluster) const;
};

// k-means++ seeding: returns k distinct-by-draw row indices. The first
// index is drawn uniformly, the rest by squared distance to the nearest
// chosen centre. When every remaining distance is zero the lowest index
// not yet chosen is taken (or 0 if all are chosen).
std::vector<std::size_t> kmeanspp_seeds(const Matrix& points, std::size_t k, std::uint64_t seed);

// Lloyd iterations from k-means++ seeds until no assignment changes or
// max_iterations. Nearest-centroid ties go to the lowest index. A cluster
// left empty after an update is re-seeded at the point farthest from its
// own centroid (lowest index on ties; each point used at most once per pass).
ClusterSet kmeans(const Matrix& features, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {});

// masks[c].masked(j) == (assignment[j] == c)
std::vector<ClusterMask> cluster_masks(const ClusterSet& set);

// Row-wise L2 normalization; zero rows are left unchanged.
Matrix normalize_rows(const Matrix& m);

// WCSS of an assignment against given centroids.
double within_cluster_ss(const Matrix& points, const std::vector<std::size_t>& assignment, const Matrix& centroids);

}  // namespace cci
