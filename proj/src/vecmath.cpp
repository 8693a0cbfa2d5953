#include "chns/vecmath.hpp"

#include <algorithm>
#include <cmath>

#include "chns/error.hpp"

namespace chns {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::UnknownSpeaker: return "UnknownSpeaker";
    case ErrorCode::UnknownUtterance: return "UnknownUtterance";
    case ErrorCode::NoUtterances: return "NoUtterances";
    case ErrorCode::InsufficientSpeakers: return "InsufficientSpeakers";
    case ErrorCode::EmptyClusterMap: return "EmptyClusterMap";
    case ErrorCode::NoPositive: return "NoPositive";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::MissingAttribute: return "MissingAttribute";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::ClusterMapMissing: return "ClusterMapMissing";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Embedding normalize(const Vec& v) {
  if (v.empty()) throw Error(ErrorCode::ZeroVector, "cannot normalize an empty vector");
  if (!all_finite(v)) throw Error(ErrorCode::NonFinite, "vector has NaN or Inf entries");
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm <= 1e-12) throw Error(ErrorCode::ZeroVector, "vector norm is at or below 1e-12");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return Embedding(std::move(out));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch, "vectors have different dimensions");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return std::clamp(s, -1.0, 1.0);
}

double cosine_sim(const Embedding& a, const Embedding& b) {
  return dot(a.values(), b.values());
}

double sq_euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch, "vectors have different dimensions");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double sq_euclidean(const Embedding& a, const Embedding& b) {
  return sq_euclidean(std::span<const double>(a.values()),
                      std::span<const double>(b.values()));
}

Vec centroid(const std::vector<Embedding>& vs) {
  if (vs.empty()) throw Error(ErrorCode::EmptyList, "centroid of an empty list");
  std::size_t dim = vs.front().dim();
  Vec out(dim, 0.0);
  for (const Embedding& e : vs) {
    if (e.dim() != dim)
      throw Error(ErrorCode::DimensionMismatch, "embeddings have different dimensions");
    for (std::size_t i = 0; i < dim; ++i) out[i] += e[i];
  }
  for (double& x : out) x /= static_cast<double>(vs.size());
  return out;
}

Vec centroid_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyList, "centroid of an empty row set");
  Vec out(m.cols(), 0.0);
  for (std::size_t r : rows) {
    auto row = m.row(r);
    for (std::size_t i = 0; i < m.cols(); ++i) out[i] += row[i];
  }
  for (double& x : out) x /= static_cast<double>(rows.size());
  return out;
}

Matrix pairwise_similarity_matrix(const std::vector<Embedding>& es) {
  const std::size_t n = es.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = cosine_sim(es[i], es[j]);
      m.at(i, j) = s;
      m.at(j, i) = s;
    }
  }
  return m;
}

}  // namespace chns
