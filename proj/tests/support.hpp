#pragma once

// Shared test helpers and independent oracles. Everything here is a second
// route to the same answers the library computes; keep it free of library
// internals beyond public types.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "chns/loss.hpp"
#include "chns/matrix.hpp"
#include "chns/sampler.hpp"

namespace chns::testing {

inline Vec random_unit_vec(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& x : v) {
      x = g(rng);
      sq += x * x;
    }
  } while (sq < 1e-12);
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return v;
}

// A synthetic batch of n_speakers (two slots each); the first
// n_cluster_sourced speakers are split between up to two fake clusters.
inline Batch fake_batch(std::size_t n_speakers, std::size_t n_cluster_sourced,
                        std::mt19937_64& rng) {
  Batch batch;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    BatchSpeaker speaker;
    speaker.speaker = "spk" + std::to_string(s);
    speaker.utterances = {speaker.speaker + "_a", speaker.speaker + "_b"};
    if (s < n_cluster_sourced) {
      speaker.cluster = (n_cluster_sourced > 1 && s >= n_cluster_sourced / 2) ? 1u : 0u;
    }
    batch.speakers.push_back(speaker);
  }
  if (n_cluster_sourced > 0) batch.source_clusters.push_back(0);
  if (n_cluster_sourced > 1) batch.source_clusters.push_back(1);
  (void)rng;
  return batch;
}

// Random unit embeddings per slot -> symmetric similarity matrix with unit
// diagonal.
inline Matrix random_similarity(std::size_t n_slots, std::size_t dim,
                                std::mt19937_64& rng) {
  std::vector<Vec> rows;
  rows.reserve(n_slots);
  for (std::size_t i = 0; i < n_slots; ++i) rows.push_back(random_unit_vec(dim, rng));
  Matrix s(n_slots, n_slots);
  for (std::size_t i = 0; i < n_slots; ++i) {
    s.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n_slots; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d += rows[i][c] * rows[j][c];
      s.at(i, j) = d;
      s.at(j, i) = d;
    }
  }
  return s;
}

// Independent evaluator of the generalized contrastive objective: plain
// ratio arithmetic, no log-sum-exp shift, hardening applied inline.
inline double naive_contrastive_loss(const Matrix& s, const PairLabelMatrix& labels,
                                     double beta, double tau) {
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels.at(i, j) == PairLabel::Positive) pos.push_back(j);
      if (labels.at(i, j) == PairLabel::Negative ||
          labels.at(i, j) == PairLabel::HardNegative)
        neg.push_back(j);
    }
    double denom_neg = 0.0;
    for (std::size_t j : neg)
      denom_neg += std::exp(beta * s.at(i, j)) * std::exp(s.at(i, j) / tau);
    for (std::size_t p : pos) {
      const double num = std::exp(s.at(i, p) / tau);
      total += -std::log(num / (num + denom_neg)) / static_cast<double>(pos.size());
    }
  }
  return total;
}

// SupCon restricted to one positive per anchor (the N-pair form): identical
// to naive_contrastive_loss at beta = 0 but written as its own route.
inline double naive_supcon_loss(const Matrix& s, const PairLabelMatrix& labels,
                                double tau) {
  return naive_contrastive_loss(s, labels, 0.0, tau);
}

struct OracleSweep {
  double threshold;
  double far;
  double frr;
};

// Brute-force (threshold, FAR, FRR) table: every distinct score plus an
// accept-nothing endpoint, counts by full scans.
inline std::vector<OracleSweep> oracle_sweep(const std::vector<double>& scores,
                                             const std::vector<bool>& targets) {
  std::set<double> distinct(scores.begin(), scores.end());
  std::vector<double> candidates(distinct.begin(), distinct.end());
  candidates.push_back(candidates.back() + 1.0);

  double n_tar = 0.0, n_non = 0.0;
  for (bool t : targets) (t ? n_tar : n_non) += 1.0;

  std::vector<OracleSweep> out;
  for (double t : candidates) {
    double fa = 0.0, miss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (targets[i] && scores[i] < t) miss += 1.0;
      if (!targets[i] && scores[i] >= t) fa += 1.0;
    }
    out.push_back({t, fa / n_non, miss / n_tar});
  }
  return out;
}

inline std::pair<double, double> oracle_eer(const std::vector<double>& scores,
                                            const std::vector<bool>& targets) {
  const auto sweep = oracle_sweep(scores, targets);
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    const double d1 = sweep[i - 1].far - sweep[i - 1].frr;
    const double d2 = sweep[i].far - sweep[i].frr;
    if (d2 > 0.0) continue;
    const double alpha = d1 / (d1 - d2);
    const double eer = sweep[i - 1].frr + alpha * (sweep[i].frr - sweep[i - 1].frr);
    const double thr =
        sweep[i - 1].threshold + alpha * (sweep[i].threshold - sweep[i - 1].threshold);
    return {eer, thr};
  }
  return {1.0, sweep.back().threshold};
}

inline std::pair<double, double> oracle_min_dcf(const std::vector<double>& scores,
                                                const std::vector<bool>& targets,
                                                double p_target, double c_miss,
                                                double c_fa) {
  const auto sweep = oracle_sweep(scores, targets);
  double best = std::numeric_limits<double>::infinity();
  double best_thr = 0.0;
  for (const auto& p : sweep) {
    const double dcf = c_miss * p_target * p.frr + c_fa * (1.0 - p_target) * p.far;
    if (dcf < best) {
      best = dcf;
      best_thr = p.threshold;
    }
  }
  return {best, best_thr};
}

}  // namespace chns::testing
