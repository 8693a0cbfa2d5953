#include "chns/loss.hpp"

#include <algorithm>
#include <cmath>

#include "chns/error.hpp"
#include "chns/vecmath.hpp"

namespace chns {

void ContrastiveConfig::validate() const {
  if (!(tau_init > tau_min) || !(tau_min > 0.0))
    throw Error(ErrorCode::InvalidSpec, "require tau_init > tau_min > 0");
  if (!std::isfinite(beta) || beta < 0.0)
    throw Error(ErrorCode::InvalidSpec, "beta must be finite and >= 0");
}

double hardening_weight(double similarity, double beta) {
  return std::exp(beta * similarity);
}

LossOutput contrastive_loss(const Matrix& similarity, const PairLabelMatrix& labels,
                            const ContrastiveConfig& cfg, double tau) {
  const std::size_t n = labels.size();
  if (similarity.rows() != n || similarity.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "similarity matrix does not match labels");
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidSpec, "tau must be positive");
  if (!all_finite(similarity.data()))
    throw Error(ErrorCode::NonFinite, "similarity matrix has NaN or Inf entries");

  LossOutput out;
  out.grad_similarity = Matrix(n, n);

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < n; ++i) {
    positives.clear();
    negatives.clear();
    for (std::size_t j = 0; j < n; ++j) {
      switch (labels.at(i, j)) {
        case PairLabel::Positive: positives.push_back(j); break;
        case PairLabel::HardNegative:
        case PairLabel::Negative: negatives.push_back(j); break;
        case PairLabel::Self: break;
      }
    }
    if (positives.empty())
      throw Error(ErrorCode::NoPositive, "anchor " + std::to_string(i) + " has no positive");

    const double inv_p = 1.0 / static_cast<double>(positives.size());
    for (std::size_t p : positives) {
      // -log( e^{a} / (e^{a} + sum_n e^{b_n}) ) with a = s_ip / tau and
      // b_n = beta*s_in + s_in/tau; the hardening enters negatives only.
      const double a = similarity.at(i, p) / tau;
      double shift = a;
      for (std::size_t neg : negatives)
        shift = std::max(shift, (cfg.beta + 1.0 / tau) * similarity.at(i, neg));

      double z = std::exp(a - shift);
      double z_neg = 0.0;
      for (std::size_t neg : negatives)
        z_neg += std::exp((cfg.beta + 1.0 / tau) * similarity.at(i, neg) - shift);
      z += z_neg;

      out.value += inv_p * (shift + std::log(z) - a);

      const double w_p = std::exp(a - shift) / z;
      out.grad_similarity.at(i, p) += inv_p * (w_p - 1.0) / tau;
      double tau_acc = (w_p - 1.0) * similarity.at(i, p);
      for (std::size_t neg : negatives) {
        const double w_n =
            std::exp((cfg.beta + 1.0 / tau) * similarity.at(i, neg) - shift) / z;
        out.grad_similarity.at(i, neg) += inv_p * w_n * (cfg.beta + 1.0 / tau);
        tau_acc += w_n * similarity.at(i, neg);
      }
      if (cfg.tau_trainable) out.grad_log_tau -= inv_p * tau_acc / tau;
    }
  }

  if (!std::isfinite(out.value) || !all_finite(out.grad_similarity.data()) ||
      !std::isfinite(out.grad_log_tau))
    throw Error(ErrorCode::NonFinite, "loss or gradients are not finite");
  return out;
}

double contrastive_loss_grad_check(const Matrix& similarity, const PairLabelMatrix& labels,
                                   const ContrastiveConfig& cfg, double tau, double h) {
  LossOutput analytic = contrastive_loss(similarity, labels, cfg, tau);

  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  double worst = 0.0;
  Matrix s = similarity;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double saved = s.at(i, j);
      s.at(i, j) = saved + h;
      const double up = contrastive_loss(s, labels, cfg, tau).value;
      s.at(i, j) = saved - h;
      const double down = contrastive_loss(s, labels, cfg, tau).value;
      s.at(i, j) = saved;
      worst = std::max(worst, rel(analytic.grad_similarity.at(i, j), (up - down) / (2 * h)));
    }
  }

  if (cfg.tau_trainable) {
    const double up = contrastive_loss(similarity, labels, cfg, tau * std::exp(h)).value;
    const double down = contrastive_loss(similarity, labels, cfg, tau * std::exp(-h)).value;
    worst = std::max(worst, rel(analytic.grad_log_tau, (up - down) / (2 * h)));
  }
  return worst;
}

AamSoftmaxOutput aam_softmax_loss(const Matrix& embeddings, const Matrix& class_weights,
                                  const std::vector<std::size_t>& targets,
                                  double margin, double scale) {
  const std::size_t n = embeddings.rows();
  const std::size_t n_classes = class_weights.rows();
  if (embeddings.cols() != class_weights.cols())
    throw Error(ErrorCode::DimensionMismatch, "embedding and weight dims differ");
  if (targets.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "one target per embedding required");
  for (std::size_t t : targets)
    if (t >= n_classes)
      throw Error(ErrorCode::InvalidTarget, "target class " + std::to_string(t) +
                                                " out of range");
  if (!all_finite(embeddings.data()) || !all_finite(class_weights.data()))
    throw Error(ErrorCode::NonFinite, "inputs have NaN or Inf entries");

  const double cos_m = std::cos(margin);
  const double sin_m = std::sin(margin);
  const double threshold = std::cos(M_PI - margin);
  const double mm = margin * std::sin(margin);

  AamSoftmaxOutput out;
  out.grad_embeddings = Matrix(n, embeddings.cols());
  out.grad_weights = Matrix(n_classes, class_weights.cols());

  std::vector<double> logits(n_classes), cosine(n_classes), dlogit_dcos(n_classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      double cs = 0.0;
      for (std::size_t d = 0; d < embeddings.cols(); ++d)
        cs += embeddings.at(i, d) * class_weights.at(c, d);
      cosine[c] = cs;
      if (c == targets[i]) {
        if (cs > threshold) {
          const double sn = std::max(std::sqrt(std::max(0.0, 1.0 - cs * cs)), 1e-12);
          logits[c] = scale * (cs * cos_m - sn * sin_m);
          dlogit_dcos[c] = scale * (cos_m + sin_m * cs / sn);
        } else {
          logits[c] = scale * (cs - mm);
          dlogit_dcos[c] = scale;
        }
      } else {
        logits[c] = scale * cs;
        dlogit_dcos[c] = scale;
      }
    }

    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) z += std::exp(logits[c] - max_logit);
    out.value += inv_n * (max_logit + std::log(z) - logits[targets[i]]);

    for (std::size_t c = 0; c < n_classes; ++c) {
      const double p = std::exp(logits[c] - max_logit) / z;
      const double g = inv_n * (p - (c == targets[i] ? 1.0 : 0.0)) * dlogit_dcos[c];
      for (std::size_t d = 0; d < embeddings.cols(); ++d) {
        out.grad_embeddings.at(i, d) += g * class_weights.at(c, d);
        out.grad_weights.at(c, d) += g * embeddings.at(i, d);
      }
    }
  }

  if (!std::isfinite(out.value))
    throw Error(ErrorCode::NonFinite, "aam softmax loss is not finite");
  return out;
}

}  // namespace chns
