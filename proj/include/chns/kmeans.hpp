#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "chns/matrix.hpp"

namespace chns {

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;
  // Best-of-n restarts with derived seeds; 1 keeps a single deterministic fit.
  std::size_t restarts = 1;
};

struct ClusterModel {
  Matrix centroids;
  std::size_t k = 0;
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  std::uint64_t seed = 0;
  // Inertia recorded at every Lloyd iteration; non-increasing by construction.
  std::vector<double> inertia_history;
};

// k-means++ seeding: first centroid uniform, each next proportional to the
// squared distance to the nearest centroid chosen so far.
Matrix kmeans_plus_plus_init(const Matrix& points, std::size_t k, std::mt19937_64& rng);

// Lloyd iterations from a k-means++ start. Deterministic given the seed.
// Empty clusters are reseeded to the point farthest from its assigned
// centroid, so the returned model has no empty cluster.
ClusterModel kmeans_fit(const Matrix& points, std::size_t k, std::uint64_t seed,
                        const KMeansOptions& options = {});

// Nearest centroid by squared Euclidean distance; ties go to the lowest
// cluster index.
std::vector<std::size_t> kmeans_assign(const ClusterModel& model, const Matrix& points);

// Number of distinct rows, used for the k <= distinct-points precondition.
std::size_t distinct_row_count(const Matrix& points);

}  // namespace chns
