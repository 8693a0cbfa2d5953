#include "chns/clustering.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "chns/error.hpp"
#include "chns/rng.hpp"

namespace chns {

using nlohmann::json;

namespace {

// Uniform sample of `take` items without replacement (partial Fisher-Yates).
std::vector<std::string> sample_without_replacement(std::vector<std::string> pool,
                                                    std::size_t take,
                                                    std::mt19937_64& rng) {
  take = std::min(take, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace

Voiceprint compute_voiceprint(const std::string& speaker, const CorpusManifest& manifest,
                              const EmbeddingLookup& embed, std::size_t m,
                              std::mt19937_64& rng) {
  if (m < 1) throw Error(ErrorCode::InvalidSpec, "voiceprint sample count m must be >= 1");
  const auto& utterances = manifest.utterances_of(speaker);  // throws UnknownSpeaker
  if (utterances.empty())
    throw Error(ErrorCode::NoUtterances, "speaker " + speaker + " has no utterances");

  auto chosen = sample_without_replacement(utterances, m, rng);
  std::vector<Embedding> embeddings;
  embeddings.reserve(chosen.size());
  for (const auto& utt : chosen) embeddings.push_back(embed(utt));

  Voiceprint vp;
  vp.speaker = speaker;
  vp.vector = centroid(embeddings);
  vp.m = chosen.size();
  return vp;
}

std::vector<Voiceprint> compute_voiceprints(const CorpusManifest& manifest,
                                            const EmbeddingLookup& embed, std::size_t m,
                                            std::uint64_t seed) {
  std::vector<Voiceprint> out;
  out.reserve(manifest.speakers().size());
  for (std::size_t i = 0; i < manifest.speakers().size(); ++i) {
    auto rng = derive_rng(seed, {hash_string("voiceprint"), i});
    out.push_back(
        compute_voiceprint(manifest.speakers()[i].id, manifest, embed, m, rng));
  }
  return out;
}

ClusterMapResult build_cluster_map(const std::vector<Voiceprint>& voiceprints,
                                   std::size_t k, std::uint64_t seed, bool renormalize,
                                   const KMeansOptions& options) {
  if (voiceprints.empty())
    throw Error(ErrorCode::TooFewPoints, "no voiceprints to cluster");
  const std::size_t dim = voiceprints.front().vector.size();
  Matrix points(voiceprints.size(), dim);
  for (std::size_t i = 0; i < voiceprints.size(); ++i) {
    if (voiceprints[i].vector.size() != dim)
      throw Error(ErrorCode::DimensionMismatch, "voiceprint dimensions differ");
    if (renormalize) {
      points.set_row(i, normalize(voiceprints[i].vector).values());
    } else {
      points.set_row(i, voiceprints[i].vector);
    }
  }

  ClusterMapResult result;
  result.model = kmeans_fit(points, k, seed, options);
  auto labels = kmeans_assign(result.model, points);

  result.map.k = k;
  result.map.seed = seed;
  result.map.inertia = result.model.inertia;
  result.map.rosters.assign(k, {});
  for (std::size_t i = 0; i < voiceprints.size(); ++i)
    result.map.assignment[voiceprints[i].speaker] = labels[i];
  // Rosters in sorted-id order so the map is independent of input order.
  for (const auto& [speaker, cluster] : result.map.assignment)
    result.map.rosters[cluster].push_back(speaker);
  return result;
}

void save_cluster_map(const SpeakerClusterMap& map, const std::string& path) {
  json doc;
  doc["k"] = map.k;
  doc["seed"] = map.seed;
  doc["inertia"] = map.inertia;
  json assignment = json::object();
  for (const auto& [speaker, cluster] : map.assignment) assignment[speaker] = cluster;
  doc["assignment"] = assignment;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write cluster map: " + path);
  out << doc.dump(2) << "\n";
}

SpeakerClusterMap load_cluster_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open cluster map: " + path);
  json doc = json::parse(in);
  SpeakerClusterMap map;
  map.k = doc.at("k").get<std::size_t>();
  map.seed = doc.at("seed").get<std::uint64_t>();
  map.inertia = doc.at("inertia").get<double>();
  map.rosters.assign(map.k, {});
  for (auto it = doc.at("assignment").begin(); it != doc.at("assignment").end(); ++it) {
    std::size_t cluster = it.value().get<std::size_t>();
    if (cluster >= map.k)
      throw Error(ErrorCode::IoError, "cluster index out of range in " + path);
    map.assignment[it.key()] = cluster;
  }
  for (const auto& [speaker, cluster] : map.assignment)
    map.rosters[cluster].push_back(speaker);
  return map;
}

void save_voiceprints(const std::vector<Voiceprint>& vps, const std::string& bin_path,
                      const std::string& sidecar_path, std::uint64_t seed) {
  if (vps.empty()) throw Error(ErrorCode::EmptyList, "no voiceprints to save");
  Matrix rows(vps.size(), vps.front().vector.size());
  json speakers = json::array();
  json counts = json::array();
  for (std::size_t i = 0; i < vps.size(); ++i) {
    rows.set_row(i, vps[i].vector);
    speakers.push_back(vps[i].speaker);
    counts.push_back(vps[i].m);
  }
  save_features(rows, bin_path);
  json doc;
  doc["speakers"] = speakers;
  doc["m"] = counts;
  doc["seed"] = seed;
  std::ofstream out(sidecar_path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write voiceprint sidecar: " + sidecar_path);
  out << doc.dump(2) << "\n";
}

std::vector<Voiceprint> load_voiceprints(const std::string& bin_path,
                                         const std::string& sidecar_path) {
  FeatureStore store = load_features(bin_path);
  std::ifstream in(sidecar_path);
  if (!in)
    throw Error(ErrorCode::MissingArtifact, "cannot open voiceprint sidecar: " + sidecar_path);
  json doc = json::parse(in);
  const auto& speakers = doc.at("speakers");
  if (speakers.size() != store.count())
    throw Error(ErrorCode::IoError, "voiceprint sidecar row count mismatch");
  std::vector<Voiceprint> vps(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) {
    vps[i].speaker = speakers[i].get<std::string>();
    vps[i].vector = store.rows.row_vec(i);
    vps[i].m = doc.contains("m") ? doc.at("m")[i].get<std::size_t>() : 0;
  }
  return vps;
}

double adjusted_rand_index(const std::vector<std::size_t>& a,
                           const std::vector<std::size_t>& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch, "labelings have different lengths");
  if (a.empty()) throw Error(ErrorCode::EmptyList, "empty labelings");

  auto relabel = [](const std::vector<std::size_t>& v) {
    std::map<std::size_t, std::size_t> ids;
    std::vector<std::size_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      out[i] = ids.emplace(v[i], ids.size()).first->second;
    return out;
  };
  auto la = relabel(a);
  auto lb = relabel(b);
  std::size_t ka = *std::max_element(la.begin(), la.end()) + 1;
  std::size_t kb = *std::max_element(lb.begin(), lb.end()) + 1;

  std::vector<std::vector<std::size_t>> table(ka, std::vector<std::size_t>(kb, 0));
  for (std::size_t i = 0; i < la.size(); ++i) table[la[i]][lb[i]]++;

  auto choose2 = [](std::size_t n) { return static_cast<double>(n) * (n - 1) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  std::vector<std::size_t> row_sum(ka, 0), col_sum(kb, 0);
  for (std::size_t i = 0; i < ka; ++i)
    for (std::size_t j = 0; j < kb; ++j) {
      sum_ij += choose2(table[i][j]);
      row_sum[i] += table[i][j];
      col_sum[j] += table[i][j];
    }
  for (std::size_t i = 0; i < ka; ++i) sum_a += choose2(row_sum[i]);
  for (std::size_t j = 0; j < kb; ++j) sum_b += choose2(col_sum[j]);

  double total = choose2(la.size());
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace chns
