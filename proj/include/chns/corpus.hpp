#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "chns/matrix.hpp"

namespace chns {

struct SpeakerInfo {
  std::string id;
  std::map<std::string, std::string> attributes;
};

struct UtteranceInfo {
  std::string id;
  std::string speaker_id;
  std::size_t row_index = 0;
};

// Dataset manifest. Construction validates referential integrity and drops
// speakers with fewer than two utterances (no positive pair is possible for
// them); dropped speakers are reported through the warnings list.
class CorpusManifest {
 public:
  CorpusManifest() = default;
  CorpusManifest(std::size_t dim, std::vector<SpeakerInfo> speakers,
                 std::vector<UtteranceInfo> utterances);

  std::size_t dim() const { return dim_; }
  const std::vector<SpeakerInfo>& speakers() const { return speakers_; }
  const std::vector<UtteranceInfo>& utterances() const { return utterances_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool has_speaker(const std::string& id) const;
  const SpeakerInfo& speaker(const std::string& id) const;
  const UtteranceInfo& utterance(const std::string& id) const;
  // Utterance ids of one speaker, in manifest order.
  const std::vector<std::string>& utterances_of(const std::string& speaker_id) const;

  // Keep only the given speakers (and their utterances). Row indices into the
  // feature file are preserved.
  CorpusManifest subset(const std::vector<std::string>& speaker_ids) const;

 private:
  std::size_t dim_ = 0;
  std::vector<SpeakerInfo> speakers_;
  std::vector<UtteranceInfo> utterances_;
  std::vector<std::string> warnings_;
  std::unordered_map<std::string, std::size_t> speaker_index_;
  std::unordered_map<std::string, std::size_t> utterance_index_;
  std::unordered_map<std::string, std::vector<std::string>> by_speaker_;
};

// Row-major feature storage. Files hold 32-bit floats; rows are upcast to
// doubles on load so all downstream numerics run at 64-bit.
struct FeatureStore {
  Matrix rows;

  std::size_t count() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
  std::span<const double> row(std::size_t i) const { return rows.row(i); }
};

CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& manifest, const std::string& path,
                   std::uint64_t seed);

FeatureStore load_features(const std::string& path);
void save_features(const Matrix& rows, const std::string& path);

struct Corpus {
  CorpusManifest manifest;
  FeatureStore features;

  std::span<const double> features_of(const std::string& utterance_id) const {
    return features.row(manifest.utterance(utterance_id).row_index);
  }
};

Corpus load_corpus(const std::string& manifest_path, const std::string& features_path);

}  // namespace chns
