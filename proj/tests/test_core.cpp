#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "chns/corpus.hpp"
#include "chns/error.hpp"
#include "chns/rng.hpp"
#include "chns/vecmath.hpp"
#include "support.hpp"

using namespace chns;

TEST_CASE("normalize scales to unit norm") {
  auto e = normalize({3.0, 4.0});
  CHECK(e[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("normalize keeps unit vectors and is idempotent bitwise") {
  std::mt19937_64 rng = make_rng(7);
  for (int i = 0; i < 50; ++i) {
    Vec v = testing::random_unit_vec(16, rng);
    for (double& x : v) x *= 3.7;
    auto once = normalize(v);
    auto twice = normalize(once.values());
    for (std::size_t d = 0; d < once.dim(); ++d)
      CHECK(std::abs(once[d] - twice[d]) <= 1e-12);
    double sq = 0.0;
    for (std::size_t d = 0; d < once.dim(); ++d) sq += once[d] * once[d];
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-9);
  }
}

TEST_CASE("normalize rejects degenerate input") {
  CHECK_THROWS_AS(normalize({0.0, 0.0}), Error);
  try {
    normalize({0.0, 0.0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVector);
  }
  CHECK_THROWS_AS(normalize({1.0, std::nan("")}), Error);
  try {
    normalize({1.0, std::nan("")});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("cosine similarity basics") {
  auto u = normalize({1.0, 2.0, -1.0});
  CHECK(cosine_sim(u, u) == doctest::Approx(1.0));
  auto e1 = normalize({1.0, 0.0});
  auto e2 = normalize({0.0, 1.0});
  CHECK(cosine_sim(e1, e2) == doctest::Approx(0.0));
  auto neg = normalize({-1.0, -2.0, 1.0});
  CHECK(cosine_sim(u, neg) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_sim(e1, u), Error);
}

TEST_CASE("cosine similarity stays clamped in [-1, 1]") {
  std::mt19937_64 rng = make_rng(11);
  for (int i = 0; i < 200; ++i) {
    auto a = normalize(testing::random_unit_vec(8, rng));
    auto b = normalize(testing::random_unit_vec(8, rng));
    double s = cosine_sim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("squared euclidean on unit vectors matches 2 - 2cos") {
  auto u = normalize({0.3, -0.8, 0.1});
  CHECK(sq_euclidean(u, u) == doctest::Approx(0.0));
  auto e1 = normalize({1.0, 0.0});
  auto e2 = normalize({0.0, 1.0});
  CHECK(sq_euclidean(e1, e2) == doctest::Approx(2.0));
  auto neg = normalize({-0.3, 0.8, -0.1});
  CHECK(sq_euclidean(u, neg) == doctest::Approx(4.0));

  std::mt19937_64 rng = make_rng(3);
  for (int i = 0; i < 100; ++i) {
    auto a = normalize(testing::random_unit_vec(12, rng));
    auto b = normalize(testing::random_unit_vec(12, rng));
    CHECK(std::abs(sq_euclidean(a, b) - (2.0 - 2.0 * cosine_sim(a, b))) < 1e-9);
  }
}

TEST_CASE("centroid is the componentwise mean, not renormalized") {
  auto u = normalize({2.0, 1.0});
  Vec single = centroid({u});
  CHECK(single[0] == doctest::Approx(u[0]));

  auto neg = normalize({-2.0, -1.0});
  Vec zero = centroid({u, neg});
  CHECK(zero[0] == doctest::Approx(0.0));
  CHECK(zero[1] == doctest::Approx(0.0));

  Vec mid = centroid({normalize({1.0, 0.0}), normalize({0.0, 1.0})});
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(centroid({}), Error);
}

TEST_CASE("pairwise similarity matrix is symmetric with unit diagonal") {
  std::mt19937_64 rng = make_rng(5);
  std::vector<Embedding> es;
  for (int i = 0; i < 7; ++i) es.push_back(normalize(testing::random_unit_vec(6, rng)));
  Matrix m = pairwise_similarity_matrix(es);
  for (std::size_t i = 0; i < es.size(); ++i) {
    CHECK(m.at(i, i) == doctest::Approx(1.0));
    for (std::size_t j = 0; j < es.size(); ++j) {
      CHECK(m.at(i, j) == m.at(j, i));
      CHECK(m.at(i, j) == doctest::Approx(cosine_sim(es[i], es[j])));
    }
  }

  auto same = normalize({1.0, 1.0});
  Matrix ones = pairwise_similarity_matrix({same, same});
  for (double v : ones.data()) CHECK(v == doctest::Approx(1.0));

  Matrix eye = pairwise_similarity_matrix({normalize({1.0, 0.0}), normalize({0.0, 1.0})});
  CHECK(eye.at(0, 1) == doctest::Approx(0.0));
  CHECK(eye.at(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("manifest validates references and drops single-utterance speakers") {
  std::vector<SpeakerInfo> speakers = {{"a", {}}, {"b", {}}, {"c", {}}};
  std::vector<UtteranceInfo> utts = {
      {"a1", "a", 0}, {"a2", "a", 1}, {"b1", "b", 2}, {"b2", "b", 3}, {"c1", "c", 4}};
  CorpusManifest manifest(4, speakers, utts);
  CHECK(manifest.speakers().size() == 2);  // c dropped
  CHECK(manifest.utterances().size() == 4);
  CHECK(manifest.warnings().size() == 1);
  CHECK(!manifest.has_speaker("c"));
  CHECK(manifest.utterances_of("a").size() == 2);

  CHECK_THROWS_AS(CorpusManifest(4, speakers, {{"x1", "nope", 0}}), Error);
  CHECK_THROWS_AS(CorpusManifest(4, {{"a", {}}, {"a", {}}}, {}), Error);
}

TEST_CASE("feature file round trip preserves float32 payload") {
  std::mt19937_64 rng = make_rng(9);
  std::normal_distribution<double> g(0.0, 2.0);
  Matrix rows(5, 3);
  for (double& x : rows.data()) x = g(rng);

  auto path = std::filesystem::temp_directory_path() / "chns_test_features.bin";
  save_features(rows, path.string());
  FeatureStore loaded = load_features(path.string());
  REQUIRE(loaded.count() == 5);
  REQUIRE(loaded.dim() == 3);
  for (std::size_t i = 0; i < rows.data().size(); ++i)
    CHECK(loaded.rows.data()[i] ==
          doctest::Approx(static_cast<double>(static_cast<float>(rows.data()[i]))));
  std::filesystem::remove(path);
}

TEST_CASE("manifest json round trip") {
  std::vector<SpeakerInfo> speakers = {{"s0", {{"family", "0"}}}, {"s1", {{"family", "1"}}}};
  std::vector<UtteranceInfo> utts = {
      {"s0_u0", "s0", 0}, {"s0_u1", "s0", 1}, {"s1_u0", "s1", 2}, {"s1_u1", "s1", 3}};
  CorpusManifest manifest(8, speakers, utts);

  auto path = std::filesystem::temp_directory_path() / "chns_test_manifest.json";
  save_manifest(manifest, path.string(), 123);
  CorpusManifest loaded = load_manifest(path.string());
  CHECK(loaded.dim() == 8);
  CHECK(loaded.speakers().size() == 2);
  CHECK(loaded.speaker("s0").attributes.at("family") == "0");
  CHECK(loaded.utterance("s1_u1").row_index == 3);
  std::filesystem::remove(path);
}

TEST_CASE("derived rng streams are order independent") {
  auto a1 = derive_rng(42, {hash_string("batch"), 1, 2})();
  auto b = derive_rng(42, {hash_string("batch"), 7, 0})();
  auto a2 = derive_rng(42, {hash_string("batch"), 1, 2})();
  CHECK(a1 == a2);
  CHECK(a1 != b);
}
