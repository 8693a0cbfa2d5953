#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chns/corpus.hpp"
#include "chns/encoder.hpp"
#include "chns/sampler.hpp"

namespace chns {

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;
};

enum class TrialPolicy { Random, Hard };

// Target trials pair distinct utterances of one speaker; non-target trials
// pair utterances of two speakers (hard policy: two speakers sharing the
// given attribute). Duplicate pairs are rejected.
std::vector<Trial> generate_trials(const CorpusManifest& manifest, TrialPolicy policy,
                                   std::size_t n_target, std::size_t n_nontarget,
                                   std::mt19937_64& rng,
                                   const std::string& attribute = "family");

struct ScoredTrials {
  std::vector<double> scores;
  std::vector<bool> targets;
};

ScoredTrials score_trials(const EncoderParams& params, const std::vector<Trial>& trials,
                          const Corpus& corpus);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Threshold sweep over all distinct scores (accept means score >= t) plus an
// accept-nothing endpoint; linear interpolation where FAR - FRR flips sign.
EerResult compute_eer(const ScoredTrials& scored);

struct DcfResult {
  double min_dcf = 0.0;
  double threshold = 0.0;
};

// DCF(t) = c_miss*p_target*P_miss(t) + c_fa*(1-p_target)*P_fa(t), minimized
// over the same sweep; reported raw unless normalized is set.
DcfResult compute_min_dcf(const ScoredTrials& scored, double p_target = 0.05,
                          double c_miss = 1.0, double c_fa = 1.0,
                          bool normalized = false);

struct MetricReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double min_dcf = 0.0;
  double min_dcf_threshold = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

MetricReport compute_metric_report(const ScoredTrials& scored, double p_target = 0.05,
                                   double c_miss = 1.0, double c_fa = 1.0);

void save_metric_report(const MetricReport& report, const std::string& path,
                        std::uint64_t seed);
MetricReport load_metric_report(const std::string& path);

// Text format: one `<label 0|1> <enroll_utt_id> <test_utt_id>` per line.
void save_trials(const std::vector<Trial>& trials, const std::string& path);
std::vector<Trial> load_trials(const std::string& path);

struct NegativeSimilarityHistogram {
  std::vector<double> masses;  // sums to 1 when total_pairs > 0
  double lo = -1.0;
  double hi = 1.0;
  double mean = 0.0;  // meaningful only when total_pairs > 0
  std::size_t total_pairs = 0;
};

// Pools cosine similarities over every cross-speaker slot pair of every
// batch, embedded with the given model.
NegativeSimilarityHistogram negative_similarity_histogram(
    const std::vector<Batch>& batches, const EncoderParams& params, const Corpus& corpus,
    std::size_t bins);

}  // namespace chns
