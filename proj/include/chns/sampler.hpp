#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chns/clustering.hpp"
#include "chns/corpus.hpp"

namespace chns {

struct BatchSpec {
  std::size_t batch_size_utterances = 64;  // must be even; two slots per speaker
  double hard_ratio = 0.0;                 // fraction of speaker slots from clusters
  // A fully drawn cluster may exceed the hard budget; default is to subsample
  // it down so the budget is hit exactly.
  bool allow_overshoot = false;

  std::size_t speakers_per_batch() const { return batch_size_utterances / 2; }
  std::size_t hard_speaker_budget() const;
  void validate() const;
};

// One speaker in a batch: two distinct utterances plus provenance. A set
// cluster index means the speaker came from that drawn cluster; nullopt means
// uniform random fill.
struct BatchSpeaker {
  std::string speaker;
  std::array<std::string, 2> utterances;
  std::optional<std::size_t> cluster;
};

struct Batch {
  std::vector<BatchSpeaker> speakers;
  std::vector<std::size_t> source_clusters;  // drawn cluster indices, in draw order
  // Hard speaker slots the cluster map could not fill (0 in normal operation;
  // never silently under-filled).
  std::size_t hard_deficit = 0;

  std::size_t n_slots() const { return speakers.size() * 2; }
  // Slot s holds utterance s%2 of speaker s/2.
  const std::string& slot_speaker(std::size_t slot) const {
    return speakers[slot / 2].speaker;
  }
  const std::string& slot_utterance(std::size_t slot) const {
    return speakers[slot / 2].utterances[slot % 2];
  }
  std::size_t cluster_sourced_count() const;
};

enum class PairLabel : std::uint8_t { Self, Positive, HardNegative, Negative };

// Square slot-pair label matrix: SELF on the diagonal, P for same-speaker
// pairs, HN for cross-speaker pairs whose speakers came from the same drawn
// cluster, N elsewhere.
class PairLabelMatrix {
 public:
  PairLabelMatrix() = default;
  explicit PairLabelMatrix(std::size_t n)
      : n_(n), labels_(n * n, PairLabel::Negative) {}

  std::size_t size() const { return n_; }
  PairLabel at(std::size_t i, std::size_t j) const { return labels_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, PairLabel l) { labels_[i * n_ + j] = l; }

 private:
  std::size_t n_ = 0;
  std::vector<PairLabel> labels_;
};

// Cluster-driven batch composition: whole clusters are drawn uniformly
// without replacement until the hard budget is met (the last cluster is
// uniformly subsampled unless overshoot is allowed), then the remaining
// speaker slots are filled uniformly from speakers outside the batch.
Batch chns_sample_batch(const SpeakerClusterMap& map, const CorpusManifest& manifest,
                        const BatchSpec& spec, std::mt19937_64& rng);

// Baseline: all speakers drawn uniformly without replacement.
Batch random_sample_batch(const CorpusManifest& manifest, const BatchSpec& spec,
                          std::mt19937_64& rng);

PairLabelMatrix pair_labels(const Batch& batch);

// floor(total utterances / batch size) independently sampled batches, each
// from its own (seed, epoch, index) stream.
std::vector<Batch> epoch_plan(const CorpusManifest& manifest, const BatchSpec& spec,
                              const std::optional<SpeakerClusterMap>& map,
                              std::uint64_t seed, std::size_t epoch);

// Debug export: one JSON object per batch per line.
void append_batch_plan_jsonl(const std::vector<Batch>& batches, std::size_t epoch,
                             const std::string& path);

}  // namespace chns
