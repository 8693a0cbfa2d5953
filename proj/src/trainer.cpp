#include "chns/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "chns/error.hpp"
#include "chns/rng.hpp"
#include "chns/vecmath.hpp"

namespace chns {

std::string to_string(SamplerMode mode) {
  return mode == SamplerMode::Random ? "random" : "chns";
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::SupCon: return "supcon";
    case LossMode::Hscl: return "hscl";
    case LossMode::AamSoftmax: return "aamsoftmax";
  }
  return "unknown";
}

SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "random") return SamplerMode::Random;
  if (s == "chns") return SamplerMode::Chns;
  throw Error(ErrorCode::InvalidConfig, "unknown sampler mode: " + s);
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "supcon") return LossMode::SupCon;
  if (s == "hscl") return LossMode::Hscl;
  if (s == "aamsoftmax") return LossMode::AamSoftmax;
  throw Error(ErrorCode::InvalidConfig, "unknown loss mode: " + s);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
    throw Error(ErrorCode::InvalidConfig, "warmup fraction must lie in [0, 1)");
  batch.validate();
  contrastive.validate();
  if (curriculum_switch_epoch && *curriculum_switch_epoch >= epochs)
    throw Error(ErrorCode::InvalidConfig, "curriculum switch epoch is past the run");
}

ModelClusteringResult cluster_speakers_with_model(const EncoderParams& params,
                                                  const Corpus& corpus,
                                                  const CorpusManifest& manifest,
                                                  std::size_t k, std::size_t m,
                                                  std::uint64_t seed, bool renormalize,
                                                  const KMeansOptions& options) {
  EmbeddingLookup embed = [&](const std::string& utterance_id) {
    Matrix input(1, corpus.features.dim());
    input.set_row(0, corpus.features_of(utterance_id));
    Matrix out = encoder_forward(params, input);
    return normalize(out.row_vec(0));
  };
  ModelClusteringResult result;
  result.voiceprints = compute_voiceprints(manifest, embed, m, seed);
  auto clustered = build_cluster_map(result.voiceprints, k, seed, renormalize, options);
  result.map = std::move(clustered.map);
  result.model = std::move(clustered.model);
  return result;
}

std::vector<std::string> select_validation_speakers(const CorpusManifest& manifest,
                                                    std::size_t count, std::uint64_t seed,
                                                    const std::string& attribute) {
  std::map<std::string, std::vector<std::string>> by_attr;
  for (const auto& s : manifest.speakers()) {
    auto it = s.attributes.find(attribute);
    by_attr[it == s.attributes.end() ? "" : it->second].push_back(s.id);
  }
  for (auto& [value, ids] : by_attr) {
    auto rng = derive_rng(seed, {hash_string("valsplit"), hash_string(value)});
    std::shuffle(ids.begin(), ids.end(), rng);
  }
  // Round-robin over groups so families contribute evenly and hard trials
  // remain possible within the held-out set.
  std::vector<std::string> out;
  std::size_t layer = 0;
  while (out.size() < count) {
    bool any = false;
    for (auto& [value, ids] : by_attr) {
      if (layer < ids.size() && out.size() < count) {
        out.push_back(ids[layer]);
        any = true;
      }
    }
    if (!any) break;
    layer++;
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// dS[i][j]/de_i = e_j and dS[i][j]/de_j = e_i; both roles accumulate.
Matrix similarity_grad_to_embeddings(const Matrix& grad_similarity,
                                     const Matrix& embeddings) {
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  Matrix grad(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grad_similarity.at(i, j);
      if (g == 0.0 || i == j) continue;
      for (std::size_t c = 0; c < d; ++c) {
        grad.at(i, c) += g * embeddings.at(j, c);
        grad.at(j, c) += g * embeddings.at(i, c);
      }
    }
  }
  return grad;
}

Matrix batch_similarity(const Matrix& embeddings) {
  const std::size_t n = embeddings.rows();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = dot(embeddings.row(i), embeddings.row(j));
      s.at(i, j) = v;
      s.at(j, i) = v;
    }
  }
  return s;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  std::optional<SpeakerClusterMap> initial_map, const TrainHooks& hooks) {
  config.validate();

  const bool curriculum =
      config.sampler_mode == SamplerMode::Chns && config.curriculum_switch_epoch.has_value();
  if (config.sampler_mode == SamplerMode::Chns && !initial_map && !curriculum)
    throw Error(ErrorCode::ClusterMapMissing,
                "chns sampling needs a cluster map or a curriculum switch epoch");
  if (curriculum && !config.recluster_on_switch && !initial_map)
    throw Error(ErrorCode::ClusterMapMissing,
                "curriculum without reclustering needs an initial cluster map");

  // Hold out validation speakers, if requested.
  CorpusManifest train_manifest = corpus.manifest;
  std::vector<std::string> val_ids;
  if (config.validation_speakers > 0) {
    if (config.validation_speakers >= corpus.manifest.speakers().size())
      throw Error(ErrorCode::InsufficientSpeakers,
                  "validation split would consume every speaker");
    val_ids = select_validation_speakers(corpus.manifest, config.validation_speakers,
                                         config.seed);
    std::vector<std::string> train_ids;
    std::set<std::string> held(val_ids.begin(), val_ids.end());
    for (const auto& s : corpus.manifest.speakers())
      if (!held.count(s.id)) train_ids.push_back(s.id);
    train_manifest = corpus.manifest.subset(train_ids);
  }

  std::vector<Trial> val_trials;
  std::optional<CorpusManifest> val_manifest;
  if (!val_ids.empty()) {
    val_manifest = corpus.manifest.subset(val_ids);
    auto rng = derive_rng(config.seed, {hash_string("valtrials")});
    val_trials = generate_trials(*val_manifest, config.validation_policy,
                                 config.validation_targets, config.validation_nontargets,
                                 rng);
  }

  TrainResult result;
  result.validation_speaker_ids = val_ids;
  result.cluster_map = std::move(initial_map);
  result.params = EncoderParams::init(corpus.features.dim(), config.hidden_dims,
                                      config.embedding_dim,
                                      derive_key(config.seed, {hash_string("init")}));

  OptimizerState opt = OptimizerState::for_params(result.params);
  double log_tau = std::log(config.contrastive.tau_init);
  AdamLane tau_lane{Vec(1, 0.0), Vec(1, 0.0)};
  std::size_t tau_steps = 0;
  result.tau = config.contrastive.tau_init;

  // AAM classifier head over training speakers.
  Matrix class_weights;
  std::vector<std::string> class_ids;
  OptimizerState head_opt;
  if (config.loss_mode == LossMode::AamSoftmax) {
    for (const auto& s : train_manifest.speakers()) class_ids.push_back(s.id);
    std::sort(class_ids.begin(), class_ids.end());
    class_weights = Matrix(class_ids.size(), config.embedding_dim);
    auto rng = derive_rng(config.seed, {hash_string("aamhead")});
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t c = 0; c < class_weights.rows(); ++c) {
      Vec w(config.embedding_dim);
      for (double& x : w) x = g(rng);
      class_weights.set_row(c, normalize(w).values());
    }
    head_opt.lanes.push_back({Vec(class_weights.data().size(), 0.0),
                              Vec(class_weights.data().size(), 0.0)});
  }
  auto class_index = [&](const std::string& speaker) {
    auto it = std::lower_bound(class_ids.begin(), class_ids.end(), speaker);
    return static_cast<std::size_t>(it - class_ids.begin());
  };

  const std::size_t steps_per_epoch =
      train_manifest.utterances().size() / config.batch.batch_size_utterances;
  if (steps_per_epoch == 0)
    throw Error(ErrorCode::InsufficientData,
                "corpus smaller than a single batch; reduce the batch size");
  const std::size_t total_steps = config.epochs * steps_per_epoch;

  ContrastiveConfig closs = config.contrastive;
  closs.beta = config.effective_beta();

  bool chns_active = config.sampler_mode == SamplerMode::Chns && !curriculum;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (curriculum && epoch == *config.curriculum_switch_epoch) {
      if (config.recluster_on_switch) {
        auto clustered = cluster_speakers_with_model(
            result.params, corpus, train_manifest, config.cluster_k,
            config.voiceprint_m, derive_key(config.seed, {hash_string("recluster"), epoch}),
            config.renormalize_voiceprints, config.kmeans);
        result.cluster_map = std::move(clustered.map);
        result.log.events.push_back({epoch, "recluster"});
        if (hooks.on_recluster)
          hooks.on_recluster(epoch, clustered.voiceprints, *result.cluster_map);
      }
      if (!result.cluster_map)
        throw Error(ErrorCode::ClusterMapMissing, "no cluster map at curriculum switch");
      chns_active = true;
      result.log.events.push_back({epoch, "sampler_switch"});
    }

    auto batches = epoch_plan(
        train_manifest, config.batch,
        chns_active ? result.cluster_map : std::optional<SpeakerClusterMap>{},
        config.seed, epoch);
    if (hooks.on_epoch_batches) hooks.on_epoch_batches(epoch, batches);

    for (const auto& batch : batches) {
      const std::size_t n = batch.n_slots();
      Matrix inputs(n, corpus.features.dim());
      for (std::size_t s = 0; s < n; ++s)
        inputs.set_row(s, corpus.features_of(batch.slot_utterance(s)));

      ForwardCache cache;
      Matrix embeddings = encoder_forward(result.params, inputs, &cache);

      const double lr = lr_at(global_step, total_steps, config.warmup_fraction,
                              config.max_lr);
      double loss_value = 0.0;
      Matrix grad_embeddings;

      if (config.loss_mode == LossMode::AamSoftmax) {
        std::vector<std::size_t> targets(n);
        for (std::size_t s = 0; s < n; ++s) targets[s] = class_index(batch.slot_speaker(s));
        auto out = aam_softmax_loss(embeddings, class_weights, targets, config.aam_margin,
                                    config.aam_scale);
        loss_value = out.value;
        grad_embeddings = std::move(out.grad_embeddings);

        head_opt.step++;
        adam_update_flat(class_weights.data(), head_opt.lanes[0], out.grad_weights.data(),
                         lr, head_opt.step, head_opt.config);
        for (std::size_t c = 0; c < class_weights.rows(); ++c)
          class_weights.set_row(c, normalize(class_weights.row_vec(c)).values());
      } else {
        Matrix similarity = batch_similarity(embeddings);
        PairLabelMatrix labels = pair_labels(batch);
        auto out = contrastive_loss(similarity, labels, closs, result.tau);
        loss_value = out.value;
        grad_embeddings = similarity_grad_to_embeddings(out.grad_similarity, embeddings);

        if (closs.tau_trainable) {
          Vec tau_param{log_tau};
          Vec tau_grad{out.grad_log_tau};
          tau_steps++;
          adam_update_flat(tau_param, tau_lane, tau_grad, lr, tau_steps, opt.config);
          log_tau = std::max(tau_param[0], std::log(closs.tau_min));
          result.tau = std::exp(log_tau);
        }
      }

      EncoderGrads grads = encoder_backward(result.params, cache, grad_embeddings);
      adam_step(opt, result.params, grads, lr);

      result.log.steps.push_back({epoch, global_step, lr, result.tau, loss_value});
      global_step++;
    }

    if (val_manifest) {
      ScoredTrials scored = score_trials(result.params, val_trials,
                                         Corpus{*val_manifest, corpus.features});
      auto eer = compute_eer(scored);
      auto dcf = compute_min_dcf(scored);
      result.log.epoch_metrics.push_back({epoch, eer.eer, dcf.min_dcf});
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, result.params, result.tau);
  }
  return result;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_train_log(const TrainLog& log, const std::string& steps_csv,
                    const std::string& epoch_csv, const std::string& events_csv) {
  {
    std::ofstream out(steps_csv);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + steps_csv);
    out << "epoch,step,lr,tau,loss\n";
    for (const auto& s : log.steps)
      out << s.epoch << "," << s.step << "," << fmt_double(s.lr) << ","
          << fmt_double(s.tau) << "," << fmt_double(s.loss) << "\n";
  }
  {
    std::ofstream out(epoch_csv);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + epoch_csv);
    out << "epoch,val_eer,val_min_dcf\n";
    for (const auto& e : log.epoch_metrics)
      out << e.epoch << "," << fmt_double(e.val_eer) << "," << fmt_double(e.val_min_dcf)
          << "\n";
  }
  {
    std::ofstream out(events_csv);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + events_csv);
    out << "epoch,event\n";
    for (const auto& e : log.events) out << e.epoch << "," << e.kind << "\n";
  }
}

}  // namespace chns
