#include "chns/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "chns/error.hpp"
#include "chns/rng.hpp"
#include "chns/vecmath.hpp"

namespace chns {

namespace {

std::vector<std::size_t> assign_labels(const Matrix& points, const Matrix& centroids) {
  std::vector<std::size_t> labels(points.rows(), 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = sq_euclidean(points.row(i), centroids.row(0));
    std::size_t arg = 0;
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      double d = sq_euclidean(points.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
  }
  return labels;
}

double total_inertia(const Matrix& points, const Matrix& centroids,
                     const std::vector<std::size_t>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i)
    s += sq_euclidean(points.row(i), centroids.row(labels[i]));
  return s;
}

// Moves every empty centroid onto the point currently farthest from its
// assigned centroid, stealing it from a cluster with more than one member.
bool repair_empty_clusters(const Matrix& points, Matrix& centroids,
                           std::vector<std::size_t>& labels) {
  std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t l : labels) counts[l]++;

  bool repaired = false;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    double worst = -1.0;
    std::size_t victim = points.rows();
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[labels[i]] <= 1) continue;
      double d = sq_euclidean(points.row(i), centroids.row(labels[i]));
      if (d > worst) {
        worst = d;
        victim = i;
      }
    }
    if (victim == points.rows()) continue;  // nothing stealable
    counts[labels[victim]]--;
    labels[victim] = c;
    counts[c] = 1;
    centroids.set_row(c, points.row(victim));
    repaired = true;
  }
  return repaired;
}

Matrix cluster_means(const Matrix& points, const std::vector<std::size_t>& labels,
                     std::size_t k) {
  Matrix means(k, points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    counts[labels[i]]++;
    auto row = points.row(i);
    for (std::size_t d = 0; d < points.cols(); ++d) means.at(labels[i], d) += row[d];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;  // handled by repair before this point
    for (std::size_t d = 0; d < points.cols(); ++d)
      means.at(c, d) /= static_cast<double>(counts[c]);
  }
  return means;
}

ClusterModel fit_once(const Matrix& points, std::size_t k, std::uint64_t seed,
                      const KMeansOptions& options) {
  std::mt19937_64 rng = make_rng(seed);
  ClusterModel model;
  model.k = k;
  model.seed = seed;
  model.centroids = kmeans_plus_plus_init(points, k, rng);

  std::vector<std::size_t> labels;
  double last_shift = std::numeric_limits<double>::infinity();
  double previous_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    labels = assign_labels(points, model.centroids);
    bool repaired = repair_empty_clusters(points, model.centroids, labels);
    double inertia = total_inertia(points, model.centroids, labels);
    if (inertia > previous_inertia + 1e-9 * (1.0 + previous_inertia))
      throw Error(ErrorCode::NonFinite,
                  "inertia increased during Lloyd iteration; invariant violated");
    previous_inertia = inertia;
    model.inertia_history.push_back(inertia);
    model.inertia = inertia;
    model.iterations_run = it + 1;
    if (it > 0 && !repaired && last_shift < options.tol) break;

    Matrix next = cluster_means(points, labels, k);
    last_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      last_shift = std::max(last_shift, std::sqrt(sq_euclidean(next.row(c), model.centroids.row(c))));
    if (it + 1 < options.max_iter) {
      model.centroids = next;
    }
  }
  return model;
}

}  // namespace

std::size_t distinct_row_count(const Matrix& points) {
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < points.rows(); ++i) seen.insert(points.row_vec(i));
  return seen.size();
}

Matrix kmeans_plus_plus_init(const Matrix& points, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = points.rows();
  if (k < 1 || k > n)
    throw Error(ErrorCode::TooFewPoints,
                "need 1 <= k <= point count, got k=" + std::to_string(k) + " for " +
                    std::to_string(n) + " points");

  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centroids.set_row(0, points.row(first(rng)));

  std::vector<double> d2(n);
  for (std::size_t chosen = 1; chosen < k; ++chosen) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = sq_euclidean(points.row(i), centroids.row(0));
      for (std::size_t c = 1; c < chosen; ++c)
        best = std::min(best, sq_euclidean(points.row(i), centroids.row(c)));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0)
      throw Error(ErrorCode::TooFewPoints,
                  "k exceeds the number of distinct points");
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t pick = n - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (target < acc) {
        pick = i;
        break;
      }
    }
    centroids.set_row(chosen, points.row(pick));
  }
  return centroids;
}

ClusterModel kmeans_fit(const Matrix& points, std::size_t k, std::uint64_t seed,
                        const KMeansOptions& options) {
  if (points.rows() == 0) throw Error(ErrorCode::TooFewPoints, "no points to cluster");
  if (!all_finite(points.data()))
    throw Error(ErrorCode::NonFinite, "points contain NaN or Inf entries");
  if (k < 1) throw Error(ErrorCode::TooFewPoints, "k must be >= 1");
  if (k > 1 && distinct_row_count(points) < k)
    throw Error(ErrorCode::TooFewPoints,
                "k=" + std::to_string(k) + " exceeds the number of distinct points");

  ClusterModel best;
  for (std::size_t r = 0; r < std::max<std::size_t>(options.restarts, 1); ++r) {
    std::uint64_t run_seed = options.restarts <= 1 ? seed : derive_key(seed, {r});
    ClusterModel model = fit_once(points, k, run_seed, options);
    if (r == 0 || model.inertia < best.inertia) best = std::move(model);
  }
  best.seed = seed;
  return best;
}

std::vector<std::size_t> kmeans_assign(const ClusterModel& model, const Matrix& points) {
  if (points.cols() != model.centroids.cols())
    throw Error(ErrorCode::DimensionMismatch,
                "point dim does not match centroid dim");
  return assign_labels(points, model.centroids);
}

}  // namespace chns
