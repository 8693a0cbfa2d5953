#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "chns/corpus.hpp"
#include "chns/matrix.hpp"

namespace chns {

// Controls for the planted-family corpus: families sit on the latent unit
// sphere with enforced pairwise separation, speakers scatter around their
// family mean, and utterances are a fixed linear channel mix of the speaker
// latent plus session noise.
struct CorpusSpec {
  std::size_t n_families = 20;
  std::size_t speakers_per_family = 10;
  std::size_t utterances_per_speaker = 30;
  std::size_t feature_dim = 40;
  std::size_t latent_dim = 16;
  double family_spread = 1.0;    // scale of the family mean vectors
  double speaker_spread = 0.08;  // per-coordinate noise around the family mean
  double session_noise = 0.05;   // per-coordinate feature noise per utterance
  // Family means are redrawn until pairwise distances reach
  // separation_factor * speaker_spread.
  double separation_factor = 6.0;

  void validate() const;
  std::size_t n_speakers() const { return n_families * speakers_per_family; }
};

struct GeneratedCorpus {
  CorpusManifest manifest;
  FeatureStore features;
  Matrix speaker_latents;  // one unit row per manifest speaker
  std::vector<std::size_t> family_of_speaker;
  Matrix family_means;
};

// Deterministic given (spec, seed); per-speaker derived streams keep the
// output independent of generation order.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

struct CorpusStats {
  double same_speaker_cos = 0.0;
  double within_family_cos = 0.0;               // different speakers, same family
  std::optional<double> cross_family_cos;       // absent with a single family
};

// Exhaustive mean feature cosines for sanity-checking the hardness structure.
CorpusStats corpus_stats(const CorpusManifest& manifest, const FeatureStore& features,
                         const std::string& attribute = "family");

}  // namespace chns
