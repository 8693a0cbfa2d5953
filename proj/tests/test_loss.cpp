#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "chns/error.hpp"
#include "chns/loss.hpp"
#include "chns/rng.hpp"
#include "support.hpp"

using namespace chns;
using namespace chns::testing;

namespace {

ContrastiveConfig config_with_beta(double beta) {
  ContrastiveConfig cfg;
  cfg.beta = beta;
  return cfg;
}

}  // namespace

TEST_CASE("hardening weight") {
  CHECK(hardening_weight(0.73, 0.0) == doctest::Approx(1.0));
  CHECK(hardening_weight(-0.4, 0.0) == doctest::Approx(1.0));
  CHECK(hardening_weight(0.0, 0.1) == doctest::Approx(1.0));
  CHECK(hardening_weight(1.0, 0.1) == doctest::Approx(std::exp(0.1)).epsilon(1e-12));
  CHECK(hardening_weight(1.0, 0.1) == doctest::Approx(1.1051709180756477).epsilon(1e-12));
}

TEST_CASE("loss is zero with a single positive pair and no negatives") {
  std::mt19937_64 rng = make_rng(1);
  Batch batch = fake_batch(1, 0, rng);
  Matrix s = random_similarity(2, 8, rng);
  auto out = contrastive_loss(s, pair_labels(batch), config_with_beta(0.0), 0.07);
  CHECK(out.value == doctest::Approx(0.0));
  for (double g : out.grad_similarity.data()) CHECK(g == doctest::Approx(0.0));
}

TEST_CASE("two-speaker batch matches the closed form") {
  // All cross-speaker similarities s-, within-speaker s+: each of the 4
  // anchors contributes log(1 + 2 e^{(s- - s+)/tau}).
  const double sp = 0.9, sn = 0.1, tau = 0.1;
  Matrix s(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      if (i == j) {
        s.at(i, j) = 1.0;
      } else if (i / 2 == j / 2) {
        s.at(i, j) = sp;
      } else {
        s.at(i, j) = sn;
      }
    }
  std::mt19937_64 rng = make_rng(2);
  Batch batch = fake_batch(2, 0, rng);
  auto out = contrastive_loss(s, pair_labels(batch), config_with_beta(0.0), tau);

  const double expected = 4.0 * std::log(1.0 + 2.0 * std::exp((sn - sp) / tau));
  CHECK(out.value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out.value ==
        doctest::Approx(naive_supcon_loss(s, pair_labels(batch), tau)).epsilon(1e-12));
}

TEST_CASE("beta zero equals the independent supcon / n-pair evaluator") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    auto rng = derive_rng(3, {trial});
    std::uniform_int_distribution<std::size_t> speakers(2, 8);
    std::uniform_int_distribution<std::size_t> hard(0, 4);
    std::size_t n_spk = speakers(rng);
    Batch batch = fake_batch(n_spk, std::min(hard(rng), n_spk), rng);
    Matrix s = random_similarity(batch.n_slots(), 12, rng);
    PairLabelMatrix labels = pair_labels(batch);

    auto out = contrastive_loss(s, labels, config_with_beta(0.0), 0.1);
    const double reference = naive_supcon_loss(s, labels, 0.1);
    CHECK(std::abs(out.value - reference) < 1e-12 * std::max(1.0, std::abs(reference)));
  }
}

TEST_CASE("hardened loss matches the naive evaluator for beta > 0") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    auto rng = derive_rng(4, {trial});
    Batch batch = fake_batch(5, 3, rng);
    Matrix s = random_similarity(batch.n_slots(), 10, rng);
    PairLabelMatrix labels = pair_labels(batch);
    for (double beta : {0.1, 0.5}) {
      auto out = contrastive_loss(s, labels, config_with_beta(beta), 0.08);
      const double reference = naive_contrastive_loss(s, labels, beta, 0.08);
      CHECK(out.value == doctest::Approx(reference).epsilon(1e-12));
    }
  }
}

TEST_CASE("constant negatives: hardening equals a uniform e^{beta c} weight") {
  // With every negative similarity equal to c, H = e^{beta c} factors out of
  // the negative sum; compare against the beta=0 loss with scaled negatives.
  const double c = 0.3, beta = 0.4, tau = 0.12;
  std::mt19937_64 rng = make_rng(5);
  Batch batch = fake_batch(4, 2, rng);
  Matrix s = random_similarity(batch.n_slots(), 8, rng);
  PairLabelMatrix labels = pair_labels(batch);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels.at(i, j) == PairLabel::Negative ||
          labels.at(i, j) == PairLabel::HardNegative)
        s.at(i, j) = c;

  auto hardened = contrastive_loss(s, labels, config_with_beta(beta), tau);

  // beta = 0 route with each negative term multiplied by e^{beta c}.
  const double weight = std::exp(beta * c);
  double expected = 0.0;
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (labels.at(i, j) == PairLabel::Positive) pos.push_back(j);
      if (labels.at(i, j) == PairLabel::Negative ||
          labels.at(i, j) == PairLabel::HardNegative)
        neg.push_back(j);
    }
    double denom = 0.0;
    for (std::size_t j : neg) denom += weight * std::exp(s.at(i, j) / tau);
    for (std::size_t p : pos) {
      const double num = std::exp(s.at(i, p) / tau);
      expected += -std::log(num / (num + denom)) / static_cast<double>(pos.size());
    }
  }
  CHECK(hardened.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences") {
  for (double beta : {0.0, 0.1, 0.5}) {
    auto rng = derive_rng(6, {static_cast<std::uint64_t>(beta * 10)});
    Batch batch = fake_batch(4, 2, rng);
    Matrix s = random_similarity(batch.n_slots(), 10, rng);
    double err =
        contrastive_loss_grad_check(s, pair_labels(batch), config_with_beta(beta), 0.1);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("fixed tau reports zero gradient") {
  std::mt19937_64 rng = make_rng(7);
  Batch batch = fake_batch(3, 0, rng);
  Matrix s = random_similarity(batch.n_slots(), 6, rng);
  ContrastiveConfig cfg = config_with_beta(0.1);
  cfg.tau_trainable = false;
  auto out = contrastive_loss(s, pair_labels(batch), cfg, 0.1);
  CHECK(out.grad_log_tau == 0.0);
  CHECK(contrastive_loss_grad_check(s, pair_labels(batch), cfg, 0.1) < 1e-5);
}

TEST_CASE("loss is invariant under slot permutation") {
  std::mt19937_64 rng = make_rng(8);
  Batch batch = fake_batch(4, 2, rng);
  Matrix s = random_similarity(batch.n_slots(), 8, rng);
  PairLabelMatrix labels = pair_labels(batch);
  auto base = contrastive_loss(s, labels, config_with_beta(0.1), 0.1);

  const std::size_t n = labels.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);

  Matrix sp(n, n);
  PairLabelMatrix lp(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      sp.at(i, j) = s.at(perm[i], perm[j]);
      lp.set(i, j, labels.at(perm[i], perm[j]));
    }
  auto permuted = contrastive_loss(sp, lp, config_with_beta(0.1), 0.1);
  CHECK(permuted.value == doctest::Approx(base.value).epsilon(1e-12));
}

TEST_CASE("loss moves the right way under similarity perturbations") {
  std::mt19937_64 rng = make_rng(9);
  Batch batch = fake_batch(3, 2, rng);
  Matrix s = random_similarity(batch.n_slots(), 8, rng);
  PairLabelMatrix labels = pair_labels(batch);
  const double base = contrastive_loss(s, labels, config_with_beta(0.1), 0.1).value;
  const double h = 1e-4;

  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels.at(i, j) == PairLabel::Self) continue;
      Matrix bumped = s;
      bumped.at(i, j) += h;
      const double moved =
          contrastive_loss(bumped, labels, config_with_beta(0.1), 0.1).value;
      if (labels.at(i, j) == PairLabel::Positive) {
        CHECK(moved < base);
      } else {
        CHECK(moved > base);
      }
    }
  }
}

TEST_CASE("anchors without a positive are rejected") {
  Batch batch;
  batch.speakers.push_back({"a", {"a_0", "a_1"}, std::nullopt});
  PairLabelMatrix labels = pair_labels(batch);
  // Corrupt the labels so anchor 0 loses its positive.
  labels.set(0, 1, PairLabel::Negative);
  Matrix s(2, 2);
  s.at(0, 0) = s.at(1, 1) = 1.0;
  CHECK_THROWS_AS(contrastive_loss(s, labels, config_with_beta(0.0), 0.1), Error);
}

TEST_CASE("aam softmax with zero margin reduces to scaled cosine softmax") {
  std::mt19937_64 rng = make_rng(10);
  const std::size_t n = 6, classes = 4, dim = 8;
  Matrix e(n, dim), w(classes, dim);
  for (std::size_t i = 0; i < n; ++i) e.set_row(i, random_unit_vec(dim, rng));
  for (std::size_t c = 0; c < classes; ++c) w.set_row(c, random_unit_vec(dim, rng));
  std::vector<std::size_t> targets = {0, 1, 2, 3, 0, 1};

  auto out = aam_softmax_loss(e, w, targets, 0.0, 30.0);

  // Independent softmax cross-entropy evaluator.
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    std::vector<double> logits(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      double cs = 0.0;
      for (std::size_t d = 0; d < dim; ++d) cs += e.at(i, d) * w.at(c, d);
      logits[c] = 30.0 * cs;
      denom += std::exp(logits[c]);
    }
    expected += -std::log(std::exp(logits[targets[i]]) / denom) / static_cast<double>(n);
  }
  CHECK(out.value == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("aam softmax hand-computed two-class value") {
  // Embedding equal to its target weight, orthogonal other class:
  // loss = -log(e^{30 cos(0.2)} / (e^{30 cos(0.2)} + e^0)).
  Matrix e(1, 2), w(2, 2);
  e.at(0, 0) = 1.0;
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  auto out = aam_softmax_loss(e, w, {0}, 0.2, 30.0);
  const double target_logit = 30.0 * std::cos(0.2);
  const double expected =
      -std::log(std::exp(target_logit) / (std::exp(target_logit) + 1.0));
  CHECK(out.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("aam softmax gradients match finite differences") {
  std::mt19937_64 rng = make_rng(11);
  const std::size_t n = 5, classes = 3, dim = 6;
  Matrix e(n, dim), w(classes, dim);
  for (std::size_t i = 0; i < n; ++i) e.set_row(i, random_unit_vec(dim, rng));
  for (std::size_t c = 0; c < classes; ++c) w.set_row(c, random_unit_vec(dim, rng));
  std::vector<std::size_t> targets = {0, 1, 2, 0, 1};

  auto out = aam_softmax_loss(e, w, targets, 0.2, 30.0);
  const double h = 1e-6;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      Matrix up = e, down = e;
      up.at(i, d) += h;
      down.at(i, d) -= h;
      const double fd = (aam_softmax_loss(up, w, targets, 0.2, 30.0).value -
                         aam_softmax_loss(down, w, targets, 0.2, 30.0).value) /
                        (2 * h);
      worst = std::max(worst, rel(out.grad_embeddings.at(i, d), fd));
    }
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t d = 0; d < dim; ++d) {
      Matrix up = w, down = w;
      up.at(c, d) += h;
      down.at(c, d) -= h;
      const double fd = (aam_softmax_loss(e, up, targets, 0.2, 30.0).value -
                         aam_softmax_loss(e, down, targets, 0.2, 30.0).value) /
                        (2 * h);
      worst = std::max(worst, rel(out.grad_weights.at(c, d), fd));
    }
  CHECK(worst < 1e-5);
}

TEST_CASE("aam softmax rejects bad targets") {
  Matrix e(1, 2), w(2, 2);
  e.at(0, 0) = 1.0;
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  CHECK_THROWS_AS(aam_softmax_loss(e, w, {5}, 0.2, 30.0), Error);
}
