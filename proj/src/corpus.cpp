#include "chns/corpus.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "chns/error.hpp"
#include "chns/vecmath.hpp"

namespace chns {

using nlohmann::json;

CorpusManifest::CorpusManifest(std::size_t dim, std::vector<SpeakerInfo> speakers,
                               std::vector<UtteranceInfo> utterances)
    : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidSpec, "manifest dim must be >= 1");

  std::unordered_map<std::string, std::vector<std::string>> by_speaker;
  std::set<std::string> speaker_ids;
  for (const auto& s : speakers) {
    if (s.id.empty()) throw Error(ErrorCode::InvalidSpec, "empty speaker id");
    if (!speaker_ids.insert(s.id).second)
      throw Error(ErrorCode::InvalidSpec, "duplicate speaker id: " + s.id);
  }
  std::set<std::string> utterance_ids;
  for (const auto& u : utterances) {
    if (u.id.empty()) throw Error(ErrorCode::InvalidSpec, "empty utterance id");
    if (!utterance_ids.insert(u.id).second)
      throw Error(ErrorCode::InvalidSpec, "duplicate utterance id: " + u.id);
    if (!speaker_ids.count(u.speaker_id))
      throw Error(ErrorCode::UnknownSpeaker,
                  "utterance " + u.id + " references unknown speaker " + u.speaker_id);
    by_speaker[u.speaker_id].push_back(u.id);
  }

  // Speakers without a possible positive pair are excluded up front.
  std::set<std::string> kept;
  for (const auto& s : speakers) {
    auto it = by_speaker.find(s.id);
    std::size_t n = it == by_speaker.end() ? 0 : it->second.size();
    if (n < 2) {
      warnings_.push_back("speaker " + s.id + " has " + std::to_string(n) +
                          " utterance(s); dropped (needs >= 2)");
      continue;
    }
    kept.insert(s.id);
    speakers_.push_back(s);
  }
  for (auto& u : utterances) {
    if (kept.count(u.speaker_id)) utterances_.push_back(std::move(u));
  }

  for (std::size_t i = 0; i < speakers_.size(); ++i) speaker_index_[speakers_[i].id] = i;
  for (std::size_t i = 0; i < utterances_.size(); ++i) {
    utterance_index_[utterances_[i].id] = i;
    by_speaker_[utterances_[i].speaker_id].push_back(utterances_[i].id);
  }
}

bool CorpusManifest::has_speaker(const std::string& id) const {
  return speaker_index_.count(id) > 0;
}

const SpeakerInfo& CorpusManifest::speaker(const std::string& id) const {
  auto it = speaker_index_.find(id);
  if (it == speaker_index_.end())
    throw Error(ErrorCode::UnknownSpeaker, "speaker not in manifest: " + id);
  return speakers_[it->second];
}

const UtteranceInfo& CorpusManifest::utterance(const std::string& id) const {
  auto it = utterance_index_.find(id);
  if (it == utterance_index_.end())
    throw Error(ErrorCode::UnknownUtterance, "utterance not in manifest: " + id);
  return utterances_[it->second];
}

const std::vector<std::string>& CorpusManifest::utterances_of(
    const std::string& speaker_id) const {
  auto it = by_speaker_.find(speaker_id);
  if (it == by_speaker_.end())
    throw Error(ErrorCode::UnknownSpeaker, "speaker not in manifest: " + speaker_id);
  return it->second;
}

CorpusManifest CorpusManifest::subset(const std::vector<std::string>& speaker_ids) const {
  std::set<std::string> wanted(speaker_ids.begin(), speaker_ids.end());
  std::vector<SpeakerInfo> speakers;
  std::vector<UtteranceInfo> utterances;
  for (const auto& s : speakers_) {
    if (wanted.count(s.id)) speakers.push_back(s);
  }
  for (const auto& u : utterances_) {
    if (wanted.count(u.speaker_id)) utterances.push_back(u);
  }
  return CorpusManifest(dim_, std::move(speakers), std::move(utterances));
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open manifest: " + path);
  json doc = json::parse(in);

  std::vector<SpeakerInfo> speakers;
  for (const auto& s : doc.at("speakers")) {
    SpeakerInfo info;
    info.id = s.at("id").get<std::string>();
    if (s.contains("attributes")) {
      for (auto it = s.at("attributes").begin(); it != s.at("attributes").end(); ++it)
        info.attributes[it.key()] = it.value().get<std::string>();
    }
    speakers.push_back(std::move(info));
  }
  std::vector<UtteranceInfo> utterances;
  for (const auto& u : doc.at("utterances")) {
    UtteranceInfo info;
    info.id = u.at("id").get<std::string>();
    info.speaker_id = u.at("speaker_id").get<std::string>();
    info.row_index = u.at("row_index").get<std::size_t>();
    utterances.push_back(std::move(info));
  }
  return CorpusManifest(doc.at("dim").get<std::size_t>(), std::move(speakers),
                        std::move(utterances));
}

void save_manifest(const CorpusManifest& manifest, const std::string& path,
                   std::uint64_t seed) {
  json doc;
  doc["dim"] = manifest.dim();
  doc["seed"] = seed;
  doc["speakers"] = json::array();
  for (const auto& s : manifest.speakers()) {
    json attrs = json::object();
    for (const auto& [k, v] : s.attributes) attrs[k] = v;
    doc["speakers"].push_back({{"id", s.id}, {"attributes", attrs}});
  }
  doc["utterances"] = json::array();
  for (const auto& u : manifest.utterances()) {
    doc["utterances"].push_back(
        {{"id", u.id}, {"speaker_id", u.speaker_id}, {"row_index", u.row_index}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write manifest: " + path);
  out << doc.dump(2) << "\n";
}

namespace {

constexpr char kFeatureMagic[4] = {'C', 'H', 'N', 'S'};
constexpr std::uint32_t kFeatureVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(f));
  std::memcpy(&bits, &f, sizeof(bits));
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  std::uint32_t bits = read_u32(in);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

}  // namespace

void save_features(const Matrix& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write feature file: " + path);
  out.write(kFeatureMagic, 4);
  write_u32(out, kFeatureVersion);
  write_u64(out, rows.rows());
  write_u32(out, static_cast<std::uint32_t>(rows.cols()));
  for (double x : rows.data()) write_f32(out, static_cast<float>(x));
  if (!out) throw Error(ErrorCode::IoError, "short write to feature file: " + path);
}

FeatureStore load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw Error(ErrorCode::IoError, "bad magic in feature file: " + path);
  std::uint32_t version = read_u32(in);
  if (version != kFeatureVersion)
    throw Error(ErrorCode::IoError,
                "unsupported feature file version " + std::to_string(version));
  std::uint64_t count = read_u64(in);
  std::uint32_t dim = read_u32(in);
  Matrix rows(count, dim);
  for (double& x : rows.data()) x = static_cast<double>(read_f32(in));
  if (!in) throw Error(ErrorCode::IoError, "truncated feature file: " + path);
  return FeatureStore{std::move(rows)};
}

Corpus load_corpus(const std::string& manifest_path, const std::string& features_path) {
  Corpus c{load_manifest(manifest_path), load_features(features_path)};
  if (c.manifest.dim() != c.features.dim())
    throw Error(ErrorCode::DimensionMismatch,
                "manifest dim " + std::to_string(c.manifest.dim()) +
                    " does not match feature file dim " + std::to_string(c.features.dim()));
  for (const auto& u : c.manifest.utterances()) {
    if (u.row_index >= c.features.count())
      throw Error(ErrorCode::IoError, "utterance " + u.id + " row index out of range");
  }
  return c;
}

}  // namespace chns
