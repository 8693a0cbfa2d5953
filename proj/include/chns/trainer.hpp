#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chns/clustering.hpp"
#include "chns/corpus.hpp"
#include "chns/encoder.hpp"
#include "chns/evalkit.hpp"
#include "chns/loss.hpp"
#include "chns/sampler.hpp"

namespace chns {

enum class SamplerMode { Random, Chns };
enum class LossMode { SupCon, Hscl, AamSoftmax };

std::string to_string(SamplerMode mode);
std::string to_string(LossMode mode);
SamplerMode sampler_mode_from_string(const std::string& s);
LossMode loss_mode_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 30;
  BatchSpec batch;
  SamplerMode sampler_mode = SamplerMode::Random;
  // When set (with sampler_mode chns), epochs before the switch sample
  // randomly; at the switch the sampler flips to CHNS.
  std::optional<std::size_t> curriculum_switch_epoch;
  bool recluster_on_switch = true;

  LossMode loss_mode = LossMode::SupCon;
  double beta = 1.0;  // hardening exponent used in hscl mode (desk-calibrated)
  ContrastiveConfig contrastive;
  double aam_margin = 0.2;
  double aam_scale = 30.0;

  double max_lr = 0.003;
  double warmup_fraction = 0.1;
  std::vector<std::size_t> hidden_dims = {128, 128};
  std::size_t embedding_dim = 64;

  // Clustering knobs used for curriculum re-clustering.
  std::size_t cluster_k = 20;
  std::size_t voiceprint_m = 10;
  bool renormalize_voiceprints = false;
  KMeansOptions kmeans;

  // Held-out speakers for per-epoch EER monitoring (0 disables).
  std::size_t validation_speakers = 0;
  TrialPolicy validation_policy = TrialPolicy::Hard;
  std::size_t validation_targets = 500;
  std::size_t validation_nontargets = 500;

  std::uint64_t seed = 42;

  double effective_beta() const { return loss_mode == LossMode::Hscl ? beta : 0.0; }
  void validate() const;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double tau = 0.0;
  double loss = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double val_eer = 0.0;
  double val_min_dcf = 0.0;
};

struct TrainEvent {
  std::size_t epoch = 0;
  std::string kind;  // "sampler_switch" | "recluster"
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochMetrics> epoch_metrics;
  std::vector<TrainEvent> events;
};

struct TrainResult {
  EncoderParams params;
  TrainLog log;
  double tau = 0.1;
  std::optional<SpeakerClusterMap> cluster_map;  // the map in effect at the end
  std::vector<std::string> validation_speaker_ids;
};

struct TrainHooks {
  std::function<void(std::size_t epoch, const EncoderParams& params, double tau)>
      on_epoch_end;
  std::function<void(std::size_t epoch, const std::vector<Voiceprint>& voiceprints,
                     const SpeakerClusterMap& map)>
      on_recluster;
  // Called with each epoch's sampled batches before any training step.
  std::function<void(std::size_t epoch, const std::vector<Batch>& batches)>
      on_epoch_batches;
};

struct ModelClusteringResult {
  std::vector<Voiceprint> voiceprints;
  SpeakerClusterMap map;
  ClusterModel model;
};

// Embeds min(m, available) utterances per speaker with the given model and
// clusters the resulting voiceprints.
ModelClusteringResult cluster_speakers_with_model(const EncoderParams& params,
                                                  const Corpus& corpus,
                                                  const CorpusManifest& manifest,
                                                  std::size_t k, std::size_t m,
                                                  std::uint64_t seed, bool renormalize,
                                                  const KMeansOptions& options);

// Family-stratified held-out speaker selection; falls back to a plain shuffle
// when the attribute is missing.
std::vector<std::string> select_validation_speakers(const CorpusManifest& manifest,
                                                    std::size_t count, std::uint64_t seed,
                                                    const std::string& attribute = "family");

TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  std::optional<SpeakerClusterMap> initial_map,
                  const TrainHooks& hooks = {});

void save_train_log(const TrainLog& log, const std::string& steps_csv,
                    const std::string& epoch_csv, const std::string& events_csv);

}  // namespace chns
