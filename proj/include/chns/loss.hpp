#pragma once

#include <vector>

#include "chns/matrix.hpp"
#include "chns/sampler.hpp"

namespace chns {

struct ContrastiveConfig {
  double beta = 0.0;         // hardening exponent; 0 recovers SupCon / N-pair
  double tau_init = 0.1;
  bool tau_trainable = true;
  double tau_min = 1e-3;

  void validate() const;
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_similarity;     // dL/dS, one entry per ordered slot pair
  double grad_log_tau = 0.0;  // 0 when tau is not trainable
};

// Exponential hardening weight exp(beta * s) applied to negative terms.
double hardening_weight(double similarity, double beta);

// Generalized supervised contrastive objective over a batch similarity
// matrix. Each anchor's denominator holds the current positive term plus all
// negatives (hard or not); other positives of the anchor are excluded.
// Exponent arguments are shifted by their per-term max before exponentiation.
LossOutput contrastive_loss(const Matrix& similarity, const PairLabelMatrix& labels,
                            const ContrastiveConfig& cfg, double tau);

// Central finite differences over every similarity entry and over log(tau);
// returns the max deviation from the analytic gradients, scaled by
// max(1, |analytic|, |numeric|).
double contrastive_loss_grad_check(const Matrix& similarity, const PairLabelMatrix& labels,
                                   const ContrastiveConfig& cfg, double tau,
                                   double h = 1e-6);

struct AamSoftmaxOutput {
  double value = 0.0;          // mean cross-entropy over the batch
  Matrix grad_embeddings;
  Matrix grad_weights;
};

// Additive-angular-margin softmax: target logit scale*cos(theta + margin)
// via cos(theta)cos(m) - sin(theta)sin(m), falling back to cos(theta) -
// m*sin(m) past theta > pi - m; other logits scale*cos(theta).
AamSoftmaxOutput aam_softmax_loss(const Matrix& embeddings, const Matrix& class_weights,
                                  const std::vector<std::size_t>& targets,
                                  double margin = 0.2, double scale = 30.0);

}  // namespace chns
