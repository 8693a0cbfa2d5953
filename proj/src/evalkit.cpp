#include "chns/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "chns/error.hpp"
#include "chns/vecmath.hpp"

namespace chns {

using nlohmann::json;

namespace {

std::pair<std::string, std::string> ordered_pair(const std::string& a,
                                                 const std::string& b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

std::vector<Trial> generate_trials(const CorpusManifest& manifest, TrialPolicy policy,
                                   std::size_t n_target, std::size_t n_nontarget,
                                   std::mt19937_64& rng, const std::string& attribute) {
  const auto& speakers = manifest.speakers();
  if (speakers.empty()) throw Error(ErrorCode::InsufficientData, "manifest has no speakers");

  // Attribute groups with at least two speakers, for hard non-targets.
  std::vector<std::vector<std::size_t>> groups;
  std::vector<double> group_weight_cdf;
  if (policy == TrialPolicy::Hard) {
    std::map<std::string, std::vector<std::size_t>> by_attr;
    for (std::size_t i = 0; i < speakers.size(); ++i) {
      auto it = speakers[i].attributes.find(attribute);
      if (it == speakers[i].attributes.end())
        throw Error(ErrorCode::MissingAttribute,
                    "speaker " + speakers[i].id + " lacks attribute '" + attribute + "'");
      by_attr[it->second].push_back(i);
    }
    double acc = 0.0;
    for (auto& [value, members] : by_attr) {
      if (members.size() < 2) continue;
      acc += static_cast<double>(members.size()) *
             static_cast<double>(members.size() - 1) / 2.0;
      groups.push_back(std::move(members));
      group_weight_cdf.push_back(acc);
    }
    if (n_nontarget > 0 && groups.empty())
      throw Error(ErrorCode::InsufficientData,
                  "no attribute group has two speakers; hard non-targets impossible");
  }

  std::vector<Trial> trials;
  std::set<std::pair<std::string, std::string>> seen;

  const std::size_t max_attempts = 1000 + 200 * (n_target + n_nontarget);
  std::size_t attempts = 0;

  std::uniform_int_distribution<std::size_t> speaker_pick(0, speakers.size() - 1);
  while (trials.size() < n_target) {
    if (++attempts > max_attempts)
      throw Error(ErrorCode::InsufficientData,
                  "could not find " + std::to_string(n_target) + " distinct target trials");
    std::size_t s = speaker_pick(rng);
    const auto& utts = manifest.utterances_of(speakers[s].id);
    std::uniform_int_distribution<std::size_t> utt_pick(0, utts.size() - 1);
    std::size_t a = utt_pick(rng), b = utt_pick(rng);
    if (a == b) continue;
    auto key = ordered_pair(utts[a], utts[b]);
    if (!seen.insert(key).second) continue;
    trials.push_back({key.first, key.second, true});
  }

  attempts = 0;
  std::size_t made = 0;
  while (made < n_nontarget) {
    if (++attempts > max_attempts)
      throw Error(ErrorCode::InsufficientData,
                  "could not find " + std::to_string(n_nontarget) +
                      " distinct non-target trials");
    std::size_t s1, s2;
    if (policy == TrialPolicy::Hard) {
      // Group chosen proportionally to its number of speaker pairs.
      std::uniform_real_distribution<double> u(0.0, group_weight_cdf.back());
      std::size_t g = static_cast<std::size_t>(
          std::lower_bound(group_weight_cdf.begin(), group_weight_cdf.end(), u(rng)) -
          group_weight_cdf.begin());
      const auto& members = groups[std::min(g, groups.size() - 1)];
      std::uniform_int_distribution<std::size_t> member_pick(0, members.size() - 1);
      s1 = members[member_pick(rng)];
      s2 = members[member_pick(rng)];
    } else {
      s1 = speaker_pick(rng);
      s2 = speaker_pick(rng);
    }
    if (s1 == s2) continue;
    const auto& utts1 = manifest.utterances_of(speakers[s1].id);
    const auto& utts2 = manifest.utterances_of(speakers[s2].id);
    std::uniform_int_distribution<std::size_t> p1(0, utts1.size() - 1);
    std::uniform_int_distribution<std::size_t> p2(0, utts2.size() - 1);
    auto key = ordered_pair(utts1[p1(rng)], utts2[p2(rng)]);
    if (!seen.insert(key).second) continue;
    trials.push_back({key.first, key.second, false});
    made++;
  }
  return trials;
}

ScoredTrials score_trials(const EncoderParams& params, const std::vector<Trial>& trials,
                          const Corpus& corpus) {
  // Embed each distinct utterance once.
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& t : trials) {
    for (const auto& id : {t.enroll, t.test}) {
      if (index.emplace(id, ids.size()).second) ids.push_back(id);
    }
  }
  Matrix inputs(ids.size(), corpus.features.dim());
  for (std::size_t i = 0; i < ids.size(); ++i)
    inputs.set_row(i, corpus.features_of(ids[i]));  // throws UnknownUtterance
  Matrix embedded = encoder_forward(params, inputs);

  ScoredTrials scored;
  scored.scores.reserve(trials.size());
  scored.targets.reserve(trials.size());
  for (const auto& t : trials) {
    if (t.enroll == t.test)
      throw Error(ErrorCode::InvalidSpec, "trial pairs an utterance with itself");
    scored.scores.push_back(
        dot(embedded.row(index.at(t.enroll)), embedded.row(index.at(t.test))));
    scored.targets.push_back(t.target);
  }
  return scored;
}

namespace {

struct SweepPoint {
  double threshold;
  double far;
  double frr;
};

// (threshold, FAR, FRR) at every distinct score, ascending, plus an
// accept-nothing endpoint one past the max score.
std::vector<SweepPoint> sweep_points(const ScoredTrials& scored) {
  std::vector<double> targets, nontargets;
  for (std::size_t i = 0; i < scored.scores.size(); ++i) {
    (scored.targets[i] ? targets : nontargets).push_back(scored.scores[i]);
  }
  if (targets.empty() || nontargets.empty())
    throw Error(ErrorCode::DegenerateLabels,
                "need at least one target and one non-target trial");
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());

  std::vector<double> candidates = scored.scores;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.push_back(candidates.back() + 1.0);  // accept nothing

  const double n_tar = static_cast<double>(targets.size());
  const double n_non = static_cast<double>(nontargets.size());
  std::vector<SweepPoint> points;
  points.reserve(candidates.size());
  for (double t : candidates) {
    const auto below_tar = static_cast<double>(
        std::lower_bound(targets.begin(), targets.end(), t) - targets.begin());
    const auto below_non = static_cast<double>(
        std::lower_bound(nontargets.begin(), nontargets.end(), t) - nontargets.begin());
    points.push_back({t, (n_non - below_non) / n_non, below_tar / n_tar});
  }
  return points;
}

}  // namespace

EerResult compute_eer(const ScoredTrials& scored) {
  const auto points = sweep_points(scored);
  // FAR - FRR starts at +1 (accept everything) and ends at -1; find the flip.
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d1 = points[i - 1].far - points[i - 1].frr;
    const double d2 = points[i].far - points[i].frr;
    if (d2 > 0.0) continue;
    const double alpha = d1 / (d1 - d2);
    EerResult r;
    r.eer = points[i - 1].frr + alpha * (points[i].frr - points[i - 1].frr);
    r.threshold = points[i - 1].threshold +
                  alpha * (points[i].threshold - points[i - 1].threshold);
    return r;
  }
  throw Error(ErrorCode::DegenerateLabels, "no FAR/FRR crossing found");
}

DcfResult compute_min_dcf(const ScoredTrials& scored, double p_target, double c_miss,
                          double c_fa, bool normalized) {
  const auto points = sweep_points(scored);
  DcfResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& p : points) {
    const double dcf = c_miss * p_target * p.frr + c_fa * (1.0 - p_target) * p.far;
    if (dcf < best.min_dcf) {
      best.min_dcf = dcf;
      best.threshold = p.threshold;
    }
  }
  if (normalized) best.min_dcf /= std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  return best;
}

MetricReport compute_metric_report(const ScoredTrials& scored, double p_target,
                                   double c_miss, double c_fa) {
  MetricReport report;
  const auto eer = compute_eer(scored);
  const auto dcf = compute_min_dcf(scored, p_target, c_miss, c_fa);
  report.eer = eer.eer;
  report.eer_threshold = eer.threshold;
  report.min_dcf = dcf.min_dcf;
  report.min_dcf_threshold = dcf.threshold;
  for (bool t : scored.targets) (t ? report.n_target : report.n_nontarget)++;
  return report;
}

void save_metric_report(const MetricReport& report, const std::string& path,
                        std::uint64_t seed) {
  json doc;
  doc["eer"] = report.eer;
  doc["eer_threshold"] = report.eer_threshold;
  doc["min_dcf"] = report.min_dcf;
  doc["min_dcf_threshold"] = report.min_dcf_threshold;
  doc["n_target"] = report.n_target;
  doc["n_nontarget"] = report.n_nontarget;
  doc["seed"] = seed;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write metric report: " + path);
  out << doc.dump(2) << "\n";
}

MetricReport load_metric_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open metric report: " + path);
  json doc = json::parse(in);
  MetricReport report;
  report.eer = doc.at("eer").get<double>();
  report.eer_threshold = doc.at("eer_threshold").get<double>();
  report.min_dcf = doc.at("min_dcf").get<double>();
  report.min_dcf_threshold = doc.at("min_dcf_threshold").get<double>();
  report.n_target = doc.at("n_target").get<std::size_t>();
  report.n_nontarget = doc.at("n_nontarget").get<std::size_t>();
  return report;
}

void save_trials(const std::vector<Trial>& trials, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write trial list: " + path);
  for (const auto& t : trials)
    out << (t.target ? 1 : 0) << " " << t.enroll << " " << t.test << "\n";
}

std::vector<Trial> load_trials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open trial list: " + path);
  std::vector<Trial> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int label;
    Trial t;
    if (!(ss >> label >> t.enroll >> t.test) || (label != 0 && label != 1))
      throw Error(ErrorCode::IoError, "malformed trial line: " + line);
    t.target = label == 1;
    trials.push_back(std::move(t));
  }
  return trials;
}

NegativeSimilarityHistogram negative_similarity_histogram(
    const std::vector<Batch>& batches, const EncoderParams& params, const Corpus& corpus,
    std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::InvalidSpec, "bins must be >= 1");
  NegativeSimilarityHistogram hist;
  hist.masses.assign(bins, 0.0);

  std::vector<double> counts(bins, 0.0);
  double sum = 0.0;
  for (const auto& batch : batches) {
    const std::size_t n = batch.n_slots();
    Matrix inputs(n, corpus.features.dim());
    for (std::size_t s = 0; s < n; ++s)
      inputs.set_row(s, corpus.features_of(batch.slot_utterance(s)));
    Matrix embedded = encoder_forward(params, inputs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (batch.slot_speaker(i) == batch.slot_speaker(j)) continue;
        const double s = dot(embedded.row(i), embedded.row(j));
        auto bin = static_cast<std::size_t>((s - hist.lo) / (hist.hi - hist.lo) *
                                            static_cast<double>(bins));
        counts[std::min(bin, bins - 1)] += 1.0;
        sum += s;
        hist.total_pairs++;
      }
    }
  }
  if (hist.total_pairs > 0) {
    for (std::size_t b = 0; b < bins; ++b)
      hist.masses[b] = counts[b] / static_cast<double>(hist.total_pairs);
    hist.mean = sum / static_cast<double>(hist.total_pairs);
  }
  return hist;
}

}  // namespace chns
