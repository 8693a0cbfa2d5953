#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "chns/clustering.hpp"
#include "chns/error.hpp"
#include "chns/rng.hpp"
#include "chns/vecmath.hpp"
#include "support.hpp"

using namespace chns;

namespace {

// Corpus of `n_speakers` with `utts_each` utterances; embedding i of speaker
// s is derived from per-(s, i) unit vectors kept in a lookup.
struct ToyEmbeddings {
  CorpusManifest manifest;
  std::map<std::string, Embedding> table;

  EmbeddingLookup lookup() const {
    return [this](const std::string& id) { return table.at(id); };
  }
};

ToyEmbeddings toy_corpus(std::size_t n_speakers, std::size_t utts_each, std::size_t dim,
                         std::uint64_t seed) {
  std::vector<SpeakerInfo> speakers;
  std::vector<UtteranceInfo> utts;
  ToyEmbeddings out;
  auto rng = make_rng(seed);
  std::size_t row = 0;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    std::string sid = "s" + std::to_string(s);
    speakers.push_back({sid, {}});
    for (std::size_t u = 0; u < utts_each; ++u) {
      std::string uid = sid + "_u" + std::to_string(u);
      utts.push_back({uid, sid, row++});
      out.table.emplace(uid, normalize(testing::random_unit_vec(dim, rng)));
    }
  }
  out.manifest = CorpusManifest(dim, std::move(speakers), std::move(utts));
  return out;
}

}  // namespace

TEST_CASE("voiceprint with m covering every utterance is the full centroid") {
  auto toy = toy_corpus(1, 10, 6, 1);
  auto rng = make_rng(2);
  Voiceprint vp = compute_voiceprint("s0", toy.manifest, toy.lookup(), 10, rng);
  CHECK(vp.m == 10);

  std::vector<Embedding> all;
  for (const auto& uid : toy.manifest.utterances_of("s0")) all.push_back(toy.table.at(uid));
  Vec expected = centroid(all);
  for (std::size_t d = 0; d < expected.size(); ++d)
    CHECK(vp.vector[d] == doctest::Approx(expected[d]).epsilon(1e-12));
}

TEST_CASE("voiceprint falls back to all utterances when fewer than m exist") {
  auto toy = toy_corpus(1, 3, 6, 3);
  auto rng = make_rng(4);
  Voiceprint vp = compute_voiceprint("s0", toy.manifest, toy.lookup(), 10, rng);
  CHECK(vp.m == 3);
  // Independent mean of the three stored embeddings.
  Vec expected(6, 0.0);
  for (const auto& uid : toy.manifest.utterances_of("s0"))
    for (std::size_t d = 0; d < 6; ++d) expected[d] += toy.table.at(uid)[d] / 3.0;
  for (std::size_t d = 0; d < 6; ++d)
    CHECK(vp.vector[d] == doctest::Approx(expected[d]).epsilon(1e-12));
}

TEST_CASE("voiceprint of identical embeddings is that embedding") {
  auto toy = toy_corpus(1, 5, 4, 5);
  Embedding u = normalize({1.0, 2.0, 3.0, 4.0});
  for (auto& [id, e] : toy.table) e = u;
  auto rng = make_rng(6);
  Voiceprint vp = compute_voiceprint("s0", toy.manifest, toy.lookup(), 3, rng);
  for (std::size_t d = 0; d < 4; ++d) CHECK(vp.vector[d] == doctest::Approx(u[d]));
}

TEST_CASE("voiceprint errors") {
  auto toy = toy_corpus(1, 3, 4, 7);
  auto rng = make_rng(8);
  CHECK_THROWS_AS(compute_voiceprint("ghost", toy.manifest, toy.lookup(), 5, rng), Error);
}

TEST_CASE("cluster map mean roster size matches the speaker arithmetic") {
  // 5894 mock voiceprints, k=50: mean roster size 117.88.
  std::mt19937_64 rng = make_rng(9);
  std::vector<Voiceprint> vps(5894);
  for (std::size_t i = 0; i < vps.size(); ++i) {
    vps[i].speaker = "spk" + std::to_string(i);
    vps[i].vector = testing::random_unit_vec(8, rng);
    vps[i].m = 10;
  }
  KMeansOptions opts;
  opts.max_iter = 15;  // partition arithmetic does not need convergence
  auto result = build_cluster_map(vps, 50, 123, false, opts);
  CHECK(result.map.mean_roster_size() == doctest::Approx(117.88).epsilon(1e-6));

  std::size_t total = 0;
  for (const auto& roster : result.map.rosters) total += roster.size();
  CHECK(total == 5894);
}

TEST_CASE("cluster map with k equal to speaker count is all singletons") {
  std::mt19937_64 rng = make_rng(10);
  std::vector<Voiceprint> vps(12);
  for (std::size_t i = 0; i < vps.size(); ++i) {
    vps[i].speaker = "spk" + std::to_string(i);
    vps[i].vector = testing::random_unit_vec(5, rng);
  }
  auto result = build_cluster_map(vps, 12, 0);
  for (const auto& roster : result.map.rosters) CHECK(roster.size() == 1);
}

TEST_CASE("cluster map recovers well separated voice families") {
  // 4 families of 10 speakers with separation far above the spread.
  std::mt19937_64 rng = make_rng(12);
  std::normal_distribution<double> g(0.0, 0.02);
  std::vector<Vec> family_means = {
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  std::vector<Voiceprint> vps;
  std::vector<std::size_t> truth;
  for (std::size_t f = 0; f < 4; ++f) {
    for (std::size_t s = 0; s < 10; ++s) {
      Voiceprint vp;
      vp.speaker = "f" + std::to_string(f) + "_s" + std::to_string(s);
      vp.vector = family_means[f];
      for (double& x : vp.vector) x += g(rng);
      vps.push_back(vp);
      truth.push_back(f);
    }
  }
  auto result = build_cluster_map(vps, 4, 77);

  // Verify against nearest-family-mean assignment.
  for (std::size_t i = 0; i < vps.size(); ++i) {
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < 4; ++f) {
      double d = sq_euclidean(std::span<const double>(vps[i].vector),
                              std::span<const double>(family_means[f]));
      if (d < best) {
        best = d;
        nearest = f;
      }
    }
    CHECK(nearest == truth[i]);
  }
  std::vector<std::size_t> predicted;
  for (const auto& vp : vps) predicted.push_back(result.map.assignment.at(vp.speaker));
  CHECK(adjusted_rand_index(predicted, truth) == doctest::Approx(1.0));
}

TEST_CASE("cluster map partition is disjoint and exhaustive") {
  std::mt19937_64 rng = make_rng(13);
  std::vector<Voiceprint> vps(57);
  for (std::size_t i = 0; i < vps.size(); ++i) {
    vps[i].speaker = "spk" + std::to_string(i);
    vps[i].vector = testing::random_unit_vec(6, rng);
  }
  auto result = build_cluster_map(vps, 9, 5);
  std::size_t total = 0;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < result.map.rosters.size(); ++c) {
    for (const auto& id : result.map.rosters[c]) {
      CHECK(seen.insert(id).second);
      CHECK(result.map.assignment.at(id) == c);
      total++;
    }
  }
  CHECK(total == vps.size());
}

TEST_CASE("unit-norm points: nearest centroid agrees between cosine and euclidean") {
  // With renormalized voiceprints the two orderings coincide, grounding the
  // squared-euclidean-for-cosine argument.
  std::mt19937_64 rng = make_rng(14);
  std::vector<Voiceprint> vps(40);
  for (std::size_t i = 0; i < vps.size(); ++i) {
    vps[i].speaker = "spk" + std::to_string(i);
    vps[i].vector = testing::random_unit_vec(8, rng);
  }
  auto result = build_cluster_map(vps, 5, 3, /*renormalize=*/true);

  Matrix unit_centroids = result.model.centroids;
  for (std::size_t c = 0; c < unit_centroids.rows(); ++c)
    unit_centroids.set_row(c, normalize(unit_centroids.row_vec(c)).values());

  for (const auto& vp : vps) {
    std::size_t best_euclid = 0, best_cos = 0;
    double de = std::numeric_limits<double>::infinity(), dc = -2.0;
    for (std::size_t c = 0; c < unit_centroids.rows(); ++c) {
      double e = sq_euclidean(std::span<const double>(vp.vector), unit_centroids.row(c));
      double cs = 0.0;
      for (std::size_t d = 0; d < vp.vector.size(); ++d)
        cs += vp.vector[d] * unit_centroids.at(c, d);
      if (e < de) {
        de = e;
        best_euclid = c;
      }
      if (cs > dc) {
        dc = cs;
        best_cos = c;
      }
    }
    CHECK(best_euclid == best_cos);
  }
}

TEST_CASE("cluster map and voiceprint files round trip") {
  std::mt19937_64 rng = make_rng(15);
  std::vector<Voiceprint> vps(20);
  for (std::size_t i = 0; i < vps.size(); ++i) {
    vps[i].speaker = "spk" + std::to_string(i);
    vps[i].vector = testing::random_unit_vec(4, rng);
    vps[i].m = 10;
  }
  auto result = build_cluster_map(vps, 4, 21);

  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path();
  auto map_path = (dir / "chns_test_map.json").string();
  save_cluster_map(result.map, map_path);
  SpeakerClusterMap loaded = load_cluster_map(map_path);
  CHECK(loaded.k == result.map.k);
  CHECK(loaded.seed == result.map.seed);
  CHECK(loaded.assignment == result.map.assignment);
  CHECK(loaded.rosters == result.map.rosters);

  auto bin = (dir / "chns_test_vp.bin").string();
  auto sidecar = (dir / "chns_test_vp.json").string();
  save_voiceprints(vps, bin, sidecar, 21);
  auto loaded_vps = load_voiceprints(bin, sidecar);
  REQUIRE(loaded_vps.size() == vps.size());
  CHECK(loaded_vps[3].speaker == vps[3].speaker);
  CHECK(loaded_vps[3].m == 10);
  CHECK(loaded_vps[3].vector[0] ==
        doctest::Approx(static_cast<double>(static_cast<float>(vps[3].vector[0]))));
  fs::remove(map_path);
  fs::remove(bin);
  fs::remove(sidecar);
}

TEST_CASE("adjusted rand index reference values") {
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index({0, 0, 0, 0}, {0, 1, 2, 3}) == doctest::Approx(0.0));
  // Hand-computed 6-item example.
  std::vector<std::size_t> a = {0, 0, 0, 1, 1, 1};
  std::vector<std::size_t> b = {0, 0, 1, 1, 2, 2};
  // Contingency: rows {2,1,0},{0,1,2}; sum_ij C2 = 1+0+0+0+0+1 = 2,
  // sum_a = 3+3 = 6, sum_b = 1+1+1 = 3, total C(6,2)=15.
  // ARI = (2 - 6*3/15) / (4.5 - 6*3/15) = 0.8 / 3.3
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(0.8 / 3.3).epsilon(1e-12));
}
