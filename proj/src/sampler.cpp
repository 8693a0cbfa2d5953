#include "chns/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "chns/error.hpp"
#include "chns/rng.hpp"

namespace chns {

std::size_t BatchSpec::hard_speaker_budget() const {
  return static_cast<std::size_t>(
      std::llround(hard_ratio * static_cast<double>(speakers_per_batch())));
}

void BatchSpec::validate() const {
  if (batch_size_utterances < 2 || batch_size_utterances % 2 != 0)
    throw Error(ErrorCode::InvalidSpec, "batch size must be even and >= 2");
  if (hard_ratio < 0.0 || hard_ratio > 1.0)
    throw Error(ErrorCode::InvalidSpec, "hard ratio must lie in [0, 1]");
}

std::size_t Batch::cluster_sourced_count() const {
  std::size_t n = 0;
  for (const auto& s : speakers)
    if (s.cluster.has_value()) n++;
  return n;
}

namespace {

// Uniform subsample of `take` indices from [0, n) without replacement.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t take,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  take = std::min(take, n);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

// Two distinct utterances of one speaker, uniformly.
std::array<std::string, 2> draw_positive_pair(const CorpusManifest& manifest,
                                              const std::string& speaker,
                                              std::mt19937_64& rng) {
  const auto& utts = manifest.utterances_of(speaker);
  auto idx = sample_indices(utts.size(), 2, rng);
  return {utts[idx[0]], utts[idx[1]]};
}

void fill_random_speakers(Batch& batch, const CorpusManifest& manifest,
                          std::size_t wanted, std::mt19937_64& rng) {
  std::unordered_set<std::string> taken;
  for (const auto& s : batch.speakers) taken.insert(s.speaker);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < manifest.speakers().size(); ++i)
    if (!taken.count(manifest.speakers()[i].id)) candidates.push_back(i);
  if (candidates.size() < wanted)
    throw Error(ErrorCode::InsufficientSpeakers,
                "need " + std::to_string(wanted) + " more speakers, corpus has " +
                    std::to_string(candidates.size()) + " left");

  for (std::size_t pos : sample_indices(candidates.size(), wanted, rng)) {
    const std::string& id = manifest.speakers()[candidates[pos]].id;
    batch.speakers.push_back({id, draw_positive_pair(manifest, id, rng), std::nullopt});
  }
}

}  // namespace

Batch random_sample_batch(const CorpusManifest& manifest, const BatchSpec& spec,
                          std::mt19937_64& rng) {
  spec.validate();
  if (manifest.speakers().size() < spec.speakers_per_batch())
    throw Error(ErrorCode::InsufficientSpeakers,
                "corpus has " + std::to_string(manifest.speakers().size()) +
                    " eligible speakers, batch needs " +
                    std::to_string(spec.speakers_per_batch()));
  Batch batch;
  fill_random_speakers(batch, manifest, spec.speakers_per_batch(), rng);
  return batch;
}

Batch chns_sample_batch(const SpeakerClusterMap& map, const CorpusManifest& manifest,
                        const BatchSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  if (map.assignment.empty())
    throw Error(ErrorCode::EmptyClusterMap, "cluster map has no speakers");
  if (manifest.speakers().size() < spec.speakers_per_batch())
    throw Error(ErrorCode::InsufficientSpeakers,
                "corpus has " + std::to_string(manifest.speakers().size()) +
                    " eligible speakers, batch needs " +
                    std::to_string(spec.speakers_per_batch()));
  for (const auto& s : manifest.speakers())
    if (!map.assignment.count(s.id))
      throw Error(ErrorCode::UnknownSpeaker,
                  "cluster map does not cover speaker " + s.id);

  Batch batch;
  const std::size_t total_speakers = spec.speakers_per_batch();
  const std::size_t budget = std::min(spec.hard_speaker_budget(), total_speakers);

  if (budget > 0) {
    // Draw clusters uniformly without replacement, each contributing all of
    // its speakers present in the manifest.
    std::vector<std::size_t> cluster_order;
    for (std::size_t c = 0; c < map.rosters.size(); ++c)
      if (!map.rosters[c].empty()) cluster_order.push_back(c);
    std::shuffle(cluster_order.begin(), cluster_order.end(), rng);

    std::size_t count = 0;
    for (std::size_t c : cluster_order) {
      if (count >= budget) break;
      std::vector<std::string> roster;
      for (const auto& id : map.rosters[c])
        if (manifest.has_speaker(id)) roster.push_back(id);
      if (roster.empty()) continue;

      std::size_t room = budget - count;
      if (roster.size() > room && !spec.allow_overshoot) {
        std::vector<std::string> cut;
        for (std::size_t pos : sample_indices(roster.size(), room, rng))
          cut.push_back(roster[pos]);
        roster = std::move(cut);
      } else if (roster.size() > total_speakers - count) {
        // Even with overshoot allowed the batch itself cannot grow.
        std::vector<std::string> cut;
        for (std::size_t pos :
             sample_indices(roster.size(), total_speakers - count, rng))
          cut.push_back(roster[pos]);
        roster = std::move(cut);
      }
      batch.source_clusters.push_back(c);
      for (const auto& id : roster) {
        batch.speakers.push_back({id, draw_positive_pair(manifest, id, rng), c});
        count++;
      }
    }
    if (count < budget) batch.hard_deficit = budget - count;
  }

  fill_random_speakers(batch, manifest, total_speakers - batch.speakers.size(), rng);
  return batch;
}

PairLabelMatrix pair_labels(const Batch& batch) {
  const std::size_t n = batch.n_slots();
  PairLabelMatrix labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels.set(i, i, PairLabel::Self);
    const auto& spk_i = batch.speakers[i / 2];
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& spk_j = batch.speakers[j / 2];
      PairLabel l = PairLabel::Negative;
      if (spk_i.speaker == spk_j.speaker) {
        l = PairLabel::Positive;
      } else if (spk_i.cluster.has_value() && spk_i.cluster == spk_j.cluster) {
        l = PairLabel::HardNegative;
      }
      labels.set(i, j, l);
      labels.set(j, i, l);
    }
  }
  return labels;
}

std::vector<Batch> epoch_plan(const CorpusManifest& manifest, const BatchSpec& spec,
                              const std::optional<SpeakerClusterMap>& map,
                              std::uint64_t seed, std::size_t epoch) {
  spec.validate();
  const std::size_t n_batches =
      manifest.utterances().size() / spec.batch_size_utterances;
  std::vector<Batch> batches;
  batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    auto rng = derive_rng(seed, {hash_string("batch"), epoch, b});
    if (map.has_value()) {
      batches.push_back(chns_sample_batch(*map, manifest, spec, rng));
    } else {
      batches.push_back(random_sample_batch(manifest, spec, rng));
    }
  }
  return batches;
}

void append_batch_plan_jsonl(const std::vector<Batch>& batches, std::size_t epoch,
                             const std::string& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot write batch plan: " + path);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    nlohmann::json doc;
    doc["epoch"] = epoch;
    doc["index"] = b;
    doc["source_clusters"] = batches[b].source_clusters;
    nlohmann::json speakers = nlohmann::json::array();
    for (const auto& s : batches[b].speakers) {
      nlohmann::json entry;
      entry["id"] = s.speaker;
      entry["utterances"] = {s.utterances[0], s.utterances[1]};
      entry["provenance"] = s.cluster.has_value() ? "cluster" : "random";
      if (s.cluster.has_value()) {
        entry["cluster"] = *s.cluster;
      } else {
        entry["cluster"] = nullptr;
      }
      speakers.push_back(entry);
    }
    doc["speakers"] = speakers;
    out << doc.dump() << "\n";
  }
}

}  // namespace chns
