#pragma once

#include <vector>

#include "chns/matrix.hpp"

namespace chns {

// Unit-norm embedding vector. Construct through normalize() so the norm
// invariant holds; raw access stays cheap for the hot loops.
class Embedding {
 public:
  Embedding() = default;

  const Vec& values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  friend Embedding normalize(const Vec& v);

 private:
  explicit Embedding(Vec values) : values_(std::move(values)) {}
  Vec values_;
};

// Scales v to unit Euclidean norm. Throws NonFinite on NaN/Inf entries and
// ZeroVector when the norm is at or below 1e-12.
Embedding normalize(const Vec& v);

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_sim(const Embedding& a, const Embedding& b);

// Clamped cosine on raw spans; callers guarantee unit norm.
double dot(std::span<const double> a, std::span<const double> b);

double sq_euclidean(const Embedding& a, const Embedding& b);
double sq_euclidean(std::span<const double> a, std::span<const double> b);

// Componentwise mean. Deliberately not renormalized; K-Means consumes raw
// centroids.
Vec centroid(const std::vector<Embedding>& vs);
Vec centroid_rows(const Matrix& m, const std::vector<std::size_t>& rows);

// M[i][j] = cosine_sim(e_i, e_j); symmetric with unit diagonal.
Matrix pairwise_similarity_matrix(const std::vector<Embedding>& es);

bool all_finite(std::span<const double> v);

}  // namespace chns
