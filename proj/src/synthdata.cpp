#include "chns/synthdata.hpp"

#include <cmath>
#include <cstdio>

#include "chns/error.hpp"
#include "chns/rng.hpp"
#include "chns/vecmath.hpp"

namespace chns {

void CorpusSpec::validate() const {
  if (n_families < 1 || speakers_per_family < 1)
    throw Error(ErrorCode::InvalidSpec, "family and speaker counts must be >= 1");
  if (utterances_per_speaker < 2)
    throw Error(ErrorCode::InvalidSpec,
                "utterances_per_speaker must be >= 2 so positive pairs exist");
  if (feature_dim < 1 || latent_dim < 1)
    throw Error(ErrorCode::InvalidSpec, "dims must be >= 1");
  if (!(family_spread > 0.0) || !(speaker_spread > 0.0) || !(session_noise > 0.0))
    throw Error(ErrorCode::InvalidSpec, "spreads must be > 0");
  if (!(separation_factor >= 0.0))
    throw Error(ErrorCode::InvalidSpec, "separation factor must be >= 0");
}

namespace {

Vec gaussian_vec(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(dim);
  for (double& x : v) x = g(rng);
  return v;
}

std::string zero_pad(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
  return buf;
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();

  // Family means: uniform directions scaled by family_spread, redrawn until
  // they clear the required separation from every earlier family.
  const double min_separation = spec.separation_factor * spec.speaker_spread;
  Matrix family_means(spec.n_families, spec.latent_dim);
  {
    auto rng = derive_rng(seed, {hash_string("families")});
    for (std::size_t f = 0; f < spec.n_families; ++f) {
      bool placed = false;
      for (std::size_t attempt = 0; attempt < 10000 && !placed; ++attempt) {
        Vec mean = normalize(gaussian_vec(spec.latent_dim, rng)).values();
        for (double& x : mean) x *= spec.family_spread;
        placed = true;
        for (std::size_t prev = 0; prev < f && placed; ++prev) {
          if (std::sqrt(sq_euclidean(std::span<const double>(mean),
                                     family_means.row(prev))) < min_separation)
            placed = false;
        }
        if (placed) family_means.set_row(f, mean);
      }
      if (!placed)
        throw Error(ErrorCode::InvalidSpec,
                    "cannot place family means at the requested separation");
    }
  }

  // Fixed channel mix, entries scaled so feature norms stay O(1).
  Matrix channel_mix(spec.feature_dim, spec.latent_dim);
  {
    auto rng = derive_rng(seed, {hash_string("channel")});
    std::normal_distribution<double> g(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (double& x : channel_mix.data()) x = g(rng) * scale;
  }

  const std::size_t n_speakers = spec.n_speakers();
  const std::size_t n_utterances = n_speakers * spec.utterances_per_speaker;
  GeneratedCorpus out;
  out.family_means = family_means;
  out.speaker_latents = Matrix(n_speakers, spec.latent_dim);
  out.family_of_speaker.resize(n_speakers);

  Matrix features(n_utterances, spec.feature_dim);
  std::vector<SpeakerInfo> speakers;
  std::vector<UtteranceInfo> utterances;
  speakers.reserve(n_speakers);
  utterances.reserve(n_utterances);

  for (std::size_t s = 0; s < n_speakers; ++s) {
    const std::size_t family = s / spec.speakers_per_family;
    out.family_of_speaker[s] = family;
    auto rng = derive_rng(seed, {hash_string("speaker"), s});

    Vec latent = family_means.row_vec(family);
    Vec noise = gaussian_vec(spec.latent_dim, rng);
    for (std::size_t d = 0; d < spec.latent_dim; ++d)
      latent[d] += spec.speaker_spread * noise[d];
    latent = normalize(latent).values();
    out.speaker_latents.set_row(s, latent);

    const std::string speaker_id =
        "f" + zero_pad(family, 2) + "_s" + zero_pad(s, 4);
    speakers.push_back({speaker_id, {{"family", std::to_string(family)}}});

    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      const std::size_t row = s * spec.utterances_per_speaker + u;
      Vec session = gaussian_vec(spec.feature_dim, rng);
      for (std::size_t fd = 0; fd < spec.feature_dim; ++fd) {
        double acc = 0.0;
        auto mix_row = channel_mix.row(fd);
        for (std::size_t ld = 0; ld < spec.latent_dim; ++ld)
          acc += mix_row[ld] * latent[ld];
        features.at(row, fd) = acc + spec.session_noise * session[fd];
      }
      utterances.push_back({speaker_id + "_u" + zero_pad(u, 3), speaker_id, row});
    }
  }

  out.manifest =
      CorpusManifest(spec.feature_dim, std::move(speakers), std::move(utterances));
  out.features = FeatureStore{std::move(features)};
  return out;
}

CorpusStats corpus_stats(const CorpusManifest& manifest, const FeatureStore& features,
                         const std::string& attribute) {
  const auto& utts = manifest.utterances();

  auto raw_cos = [&](std::size_t a, std::size_t b) {
    auto ra = features.row(utts[a].row_index);
    auto rb = features.row(utts[b].row_index);
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
      d += ra[i] * rb[i];
      na += ra[i] * ra[i];
      nb += rb[i] * rb[i];
    }
    return d / (std::sqrt(na) * std::sqrt(nb));
  };
  auto family_of = [&](const UtteranceInfo& u) -> const std::string& {
    static const std::string kNone;
    const auto& attrs = manifest.speaker(u.speaker_id).attributes;
    auto it = attrs.find(attribute);
    return it == attrs.end() ? kNone : it->second;
  };

  double same_sum = 0.0, within_sum = 0.0, cross_sum = 0.0;
  std::size_t same_n = 0, within_n = 0, cross_n = 0;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    for (std::size_t j = i + 1; j < utts.size(); ++j) {
      const double c = raw_cos(i, j);
      if (utts[i].speaker_id == utts[j].speaker_id) {
        same_sum += c;
        same_n++;
      } else if (!family_of(utts[i]).empty() && family_of(utts[i]) == family_of(utts[j])) {
        within_sum += c;
        within_n++;
      } else {
        cross_sum += c;
        cross_n++;
      }
    }
  }

  CorpusStats stats;
  stats.same_speaker_cos = same_n ? same_sum / static_cast<double>(same_n) : 0.0;
  stats.within_family_cos = within_n ? within_sum / static_cast<double>(within_n) : 0.0;
  if (cross_n > 0) stats.cross_family_cos = cross_sum / static_cast<double>(cross_n);
  return stats;
}

}  // namespace chns
