#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "chns/corpus.hpp"
#include "chns/kmeans.hpp"
#include "chns/matrix.hpp"
#include "chns/vecmath.hpp"

namespace chns {

// Per-speaker centroid of m sampled utterance embeddings.
struct Voiceprint {
  std::string speaker;
  Vec vector;
  std::size_t m = 0;  // utterances actually used
};

// Disjoint, exhaustive partition of speakers into similarity clusters.
struct SpeakerClusterMap {
  std::map<std::string, std::size_t> assignment;
  std::vector<std::vector<std::string>> rosters;  // sorted speaker ids per cluster
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double inertia = 0.0;

  std::size_t speaker_count() const { return assignment.size(); }
  double mean_roster_size() const {
    return static_cast<double>(assignment.size()) / static_cast<double>(k);
  }
};

using EmbeddingLookup = std::function<Embedding(const std::string& utterance_id)>;

// Samples min(m, available) distinct utterances of the speaker uniformly
// without replacement and returns the centroid of their embeddings.
Voiceprint compute_voiceprint(const std::string& speaker, const CorpusManifest& manifest,
                              const EmbeddingLookup& embed, std::size_t m,
                              std::mt19937_64& rng);

// One voiceprint per manifest speaker, each from a stream derived from
// (seed, speaker index) so the result does not depend on iteration order.
std::vector<Voiceprint> compute_voiceprints(const CorpusManifest& manifest,
                                            const EmbeddingLookup& embed, std::size_t m,
                                            std::uint64_t seed);

struct ClusterMapResult {
  SpeakerClusterMap map;
  ClusterModel model;
};

// K-Means over voiceprint vectors (raw centroids by default; renormalize
// lifts them back onto the unit sphere first).
ClusterMapResult build_cluster_map(const std::vector<Voiceprint>& voiceprints,
                                   std::size_t k, std::uint64_t seed,
                                   bool renormalize = false,
                                   const KMeansOptions& options = {});

void save_cluster_map(const SpeakerClusterMap& map, const std::string& path);
SpeakerClusterMap load_cluster_map(const std::string& path);

// Voiceprints persist as a feature-format binary plus a JSON sidecar mapping
// row index to speaker id.
void save_voiceprints(const std::vector<Voiceprint>& vps, const std::string& bin_path,
                      const std::string& sidecar_path, std::uint64_t seed);
std::vector<Voiceprint> load_voiceprints(const std::string& bin_path,
                                         const std::string& sidecar_path);

// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<std::size_t>& a,
                           const std::vector<std::size_t>& b);

}  // namespace chns
