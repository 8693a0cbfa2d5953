#include "chns/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "chns/error.hpp"
#include "chns/rng.hpp"

namespace chns {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void write_snapshot(const KeyValueConfig& config, const fs::path& out_dir,
                    const std::string& command) {
  std::ofstream out(out_dir / ("config." + command + ".snapshot"));
  if (!out) throw Error(ErrorCode::IoError, "cannot write config snapshot");
  out << config.serialize();
}

void require_fresh(const std::vector<fs::path>& artifacts, bool force) {
  if (force) return;
  for (const auto& p : artifacts) {
    if (fs::exists(p))
      throw Error(ErrorCode::IoError,
                  "output " + p.string() + " already exists (use --force to overwrite)");
  }
}

std::uint64_t config_seed(const KeyValueConfig& config) {
  return config.get_uint("seed", 42);
}

void save_checkpoint_with_sidecar(const EncoderParams& params, const fs::path& bin_path,
                                  const TrainConfig& config, double tau,
                                  std::size_t epochs_done) {
  save_checkpoint(params, bin_path.string());
  json doc;
  doc["seed"] = config.seed;
  doc["tau"] = tau;
  doc["epochs_done"] = epochs_done;
  doc["epochs"] = config.epochs;
  doc["loss_mode"] = to_string(config.loss_mode);
  doc["sampler_mode"] = to_string(config.sampler_mode);
  doc["beta"] = config.effective_beta();
  doc["embedding_dim"] = config.embedding_dim;
  doc["hidden_dims"] = config.hidden_dims;
  doc["batch_size"] = config.batch.batch_size_utterances;
  doc["hard_ratio"] = config.batch.hard_ratio;
  doc["cluster_k"] = config.cluster_k;
  doc["max_lr"] = config.max_lr;
  doc["warmup_fraction"] = config.warmup_fraction;
  fs::path sidecar = bin_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint sidecar");
  out << doc.dump(2) << "\n";
}

TrialPolicy trial_policy_from_string(const std::string& s) {
  if (s == "random") return TrialPolicy::Random;
  if (s == "hard") return TrialPolicy::Hard;
  throw Error(ErrorCode::InvalidConfig, "unknown trial policy: " + s);
}

}  // namespace

CorpusSpec corpus_spec_from_config(const KeyValueConfig& config) {
  CorpusSpec spec;
  spec.n_families = config.get_uint("corpus.n_families", spec.n_families);
  spec.speakers_per_family =
      config.get_uint("corpus.speakers_per_family", spec.speakers_per_family);
  spec.utterances_per_speaker =
      config.get_uint("corpus.utterances_per_speaker", spec.utterances_per_speaker);
  spec.feature_dim = config.get_uint("corpus.feature_dim", spec.feature_dim);
  spec.latent_dim = config.get_uint("corpus.latent_dim", spec.latent_dim);
  spec.family_spread = config.get_double("corpus.family_spread", spec.family_spread);
  spec.speaker_spread = config.get_double("corpus.speaker_spread", spec.speaker_spread);
  spec.session_noise = config.get_double("corpus.session_noise", spec.session_noise);
  spec.separation_factor =
      config.get_double("corpus.separation_factor", spec.separation_factor);
  return spec;
}

TrainConfig train_config_from_config(const KeyValueConfig& config, std::uint64_t seed) {
  TrainConfig train;
  train.seed = seed;
  train.epochs = config.get_uint("train.epochs", 30);
  train.batch.batch_size_utterances = config.get_uint("sampler.batch_size", 64);
  train.batch.hard_ratio = config.get_double("sampler.hard_ratio", 1.0);
  train.batch.allow_overshoot = config.get_bool("sampler.allow_overshoot", false);
  train.sampler_mode = sampler_mode_from_string(config.get_string("sampler.mode", "random"));
  if (auto switch_epoch = config.get_optional_int("train.curriculum_switch_epoch"))
    train.curriculum_switch_epoch = static_cast<std::size_t>(*switch_epoch);
  train.recluster_on_switch = config.get_bool("train.recluster_on_switch", true);
  train.loss_mode = loss_mode_from_string(config.get_string("loss.mode", "supcon"));
  train.beta = config.get_double("loss.beta", 1.0);
  train.contrastive.tau_init = config.get_double("loss.tau_init", 0.1);
  train.contrastive.tau_trainable = config.get_bool("loss.tau_trainable", true);
  train.contrastive.tau_min = config.get_double("loss.tau_min", 1e-3);
  train.aam_margin = config.get_double("loss.aam_margin", 0.2);
  train.aam_scale = config.get_double("loss.aam_scale", 30.0);
  train.max_lr = config.get_double("train.max_lr", 0.003);
  train.warmup_fraction = config.get_double("train.warmup_fraction", 0.1);
  train.hidden_dims = config.get_size_list("model.hidden_dims", {128, 128});
  train.embedding_dim = config.get_uint("model.embedding_dim", 64);
  train.cluster_k = config.get_uint("cluster.k", 20);
  train.voiceprint_m = config.get_uint("cluster.m_utterances", 10);
  train.renormalize_voiceprints = config.get_bool("cluster.renormalize_voiceprints", false);
  train.kmeans.max_iter = config.get_uint("cluster.max_iter", 300);
  train.kmeans.tol = config.get_double("cluster.tol", 1e-6);
  train.kmeans.restarts = config.get_uint("cluster.restarts", 1);
  train.validation_speakers = config.get_uint("train.validation_speakers", 0);
  train.validation_policy =
      trial_policy_from_string(config.get_string("train.validation_policy", "hard"));
  train.validation_targets = config.get_uint("train.validation_targets", 500);
  train.validation_nontargets = config.get_uint("train.validation_nontargets", 500);
  return train;
}

Corpus load_corpus_dir(const fs::path& dir) {
  return load_corpus((dir / "manifest.json").string(), (dir / "features.bin").string());
}

void run_gen_data(const KeyValueConfig& config, const fs::path& out_dir, bool force) {
  const fs::path manifest_path = out_dir / "manifest.json";
  const fs::path features_path = out_dir / "features.bin";
  require_fresh({manifest_path, features_path}, force);
  fs::create_directories(out_dir);

  const std::uint64_t seed = config_seed(config);
  CorpusSpec spec = corpus_spec_from_config(config);
  GeneratedCorpus corpus = generate_corpus(spec, seed);
  save_manifest(corpus.manifest, manifest_path.string(), seed);
  save_features(corpus.features.rows, features_path.string());
  write_snapshot(config, out_dir, "gen-data");

  std::cout << "gen-data: " << corpus.manifest.speakers().size() << " speakers, "
            << corpus.manifest.utterances().size() << " utterances -> " << out_dir
            << "\n";
}

void run_cluster(const KeyValueConfig& config, const fs::path& out_dir, bool force) {
  const fs::path vp_bin = out_dir / "voiceprints.bin";
  const fs::path vp_json = out_dir / "voiceprints.json";
  const fs::path map_path = out_dir / "cluster_map.json";
  require_fresh({vp_bin, vp_json, map_path}, force);

  Corpus corpus = load_corpus_dir(config.require_string("corpus.path"));
  EncoderParams params = load_checkpoint(config.require_string("cluster.checkpoint"));

  const std::uint64_t seed = config_seed(config);
  KMeansOptions options;
  options.max_iter = config.get_uint("cluster.max_iter", 300);
  options.tol = config.get_double("cluster.tol", 1e-6);
  options.restarts = config.get_uint("cluster.restarts", 1);

  auto clustered = cluster_speakers_with_model(
      params, corpus, corpus.manifest, config.get_uint("cluster.k", 20),
      config.get_uint("cluster.m_utterances", 10), seed,
      config.get_bool("cluster.renormalize_voiceprints", false), options);

  fs::create_directories(out_dir);
  save_voiceprints(clustered.voiceprints, vp_bin.string(), vp_json.string(), seed);
  save_cluster_map(clustered.map, map_path.string());
  write_snapshot(config, out_dir, "cluster");

  std::cout << "cluster: k=" << clustered.map.k << ", mean roster size "
            << fmt_short(clustered.map.mean_roster_size()) << ", inertia "
            << fmt_short(clustered.map.inertia) << " -> " << map_path << "\n";
}

void run_train(const KeyValueConfig& config, const fs::path& out_dir, bool force) {
  const fs::path ckpt_dir = out_dir / "checkpoints";
  const fs::path log_path = out_dir / "train_log.csv";
  require_fresh({ckpt_dir, log_path}, force);

  Corpus corpus = load_corpus_dir(config.require_string("corpus.path"));
  const std::uint64_t seed = config_seed(config);
  TrainConfig train_config = train_config_from_config(config, seed);

  std::optional<SpeakerClusterMap> initial_map;
  if (config.has("sampler.cluster_map"))
    initial_map = load_cluster_map(config.require_string("sampler.cluster_map"));

  // Surface configuration errors before any training happens.
  const bool curriculum = train_config.sampler_mode == SamplerMode::Chns &&
                          train_config.curriculum_switch_epoch.has_value();
  if (train_config.sampler_mode == SamplerMode::Chns && !initial_map && !curriculum)
    throw Error(ErrorCode::ClusterMapMissing,
                "sampler.mode=chns needs sampler.cluster_map or a curriculum switch");

  fs::create_directories(ckpt_dir);
  const std::size_t checkpoint_every = config.get_uint("train.checkpoint_every", 1);

  TrainHooks hooks;
  hooks.on_epoch_end = [&](std::size_t epoch, const EncoderParams& params, double tau) {
    if (checkpoint_every == 0 || epoch % checkpoint_every != 0) return;
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu.bin", epoch);
    save_checkpoint_with_sidecar(params, ckpt_dir / name, train_config, tau, epoch + 1);
  };
  hooks.on_recluster = [&](std::size_t epoch, const std::vector<Voiceprint>& voiceprints,
                           const SpeakerClusterMap& map) {
    char name[48];
    std::snprintf(name, sizeof(name), "cluster_map_epoch_%03zu.json", epoch);
    save_cluster_map(map, (out_dir / name).string());
    std::snprintf(name, sizeof(name), "voiceprints_epoch_%03zu", epoch);
    save_voiceprints(voiceprints, (out_dir / (std::string(name) + ".bin")).string(),
                     (out_dir / (std::string(name) + ".json")).string(),
                     train_config.seed);
  };
  if (config.get_bool("train.export_batch_plan", false)) {
    const std::string plan_path = (out_dir / "batch_plan.jsonl").string();
    std::ofstream(plan_path, std::ios::trunc).close();
    hooks.on_epoch_batches = [plan_path](std::size_t epoch,
                                         const std::vector<Batch>& batches) {
      append_batch_plan_jsonl(batches, epoch, plan_path);
    };
  }

  TrainResult result = train(train_config, corpus, std::move(initial_map), hooks);

  save_checkpoint_with_sidecar(result.params, ckpt_dir / "final.bin", train_config,
                               result.tau, train_config.epochs);
  save_train_log(result.log, log_path.string(), (out_dir / "epoch_metrics.csv").string(),
                 (out_dir / "train_events.csv").string());
  if (result.cluster_map)
    save_cluster_map(*result.cluster_map, (out_dir / "cluster_map_final.json").string());
  if (!result.validation_speaker_ids.empty()) {
    std::ofstream out(out_dir / "validation_speakers.txt");
    for (const auto& id : result.validation_speaker_ids) out << id << "\n";
  }
  write_snapshot(config, out_dir, "train");

  double final_loss =
      result.log.steps.empty() ? 0.0 : result.log.steps.back().loss;
  std::cout << "train: " << train_config.epochs << " epochs, "
            << result.log.steps.size() << " steps, final loss "
            << fmt_short(final_loss) << ", tau " << fmt_short(result.tau) << " -> "
            << out_dir << "\n";
}

void run_eval(const KeyValueConfig& config, const fs::path& out_dir, bool force) {
  const fs::path trials_path = out_dir / "trials.txt";
  const fs::path report_path = out_dir / "metric_report.json";
  require_fresh({trials_path, report_path}, force);

  Corpus corpus = load_corpus_dir(config.require_string("corpus.path"));
  EncoderParams params = load_checkpoint(config.require_string("eval.checkpoint"));
  const std::uint64_t seed = config_seed(config);

  CorpusManifest manifest = corpus.manifest;
  if (config.has("eval.speakers")) {
    std::ifstream in(config.require_string("eval.speakers"));
    if (!in)
      throw Error(ErrorCode::MissingArtifact,
                  "cannot open speaker list: " + config.require_string("eval.speakers"));
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) ids.push_back(line);
    }
    manifest = corpus.manifest.subset(ids);
  }

  std::vector<Trial> trials;
  if (config.has("eval.trials")) {
    trials = load_trials(config.require_string("eval.trials"));
  } else {
    auto rng = derive_rng(seed, {hash_string("evaltrials")});
    trials = generate_trials(
        manifest, trial_policy_from_string(config.get_string("eval.trial_policy", "hard")),
        config.get_uint("eval.n_target", 1000), config.get_uint("eval.n_nontarget", 1000),
        rng);
  }

  ScoredTrials scored = score_trials(params, trials, Corpus{manifest, corpus.features});
  MetricReport report =
      compute_metric_report(scored, config.get_double("eval.p_target", 0.05),
                            config.get_double("eval.c_miss", 1.0),
                            config.get_double("eval.c_fa", 1.0));

  fs::create_directories(out_dir);
  save_trials(trials, trials_path.string());
  save_metric_report(report, report_path.string(), seed);
  write_snapshot(config, out_dir, "eval");

  std::cout << "eval: eer " << fmt_short(report.eer * 100.0) << "%, minDCF "
            << fmt_short(report.min_dcf) << " over " << trials.size() << " trials -> "
            << report_path << "\n";
}

namespace {

// Warm random-sampling phase, clustering with the warm model, then the full
// CHNS training run; returns the evaluated report.
MetricReport grid_cell(const KeyValueConfig& base, const fs::path& cell_dir,
                       std::size_t k, double hard_ratio, std::uint64_t cell_seed,
                       bool force) {
  KeyValueConfig config = base;
  config.set("seed", std::to_string(cell_seed));
  config.set("cluster.k", std::to_string(k));
  config.set("sampler.hard_ratio", fmt_short(hard_ratio));

  const std::size_t total_epochs = config.get_uint("train.epochs", 30);
  const std::size_t warm_epochs = config.get_uint(
      "grid.warm_epochs",
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                   0.05 * static_cast<double>(total_epochs)))));

  // Warm phase.
  KeyValueConfig warm = config;
  warm.set("sampler.mode", "random");
  warm.set("train.epochs", std::to_string(warm_epochs));
  warm.set("train.validation_speakers", "0");
  run_train(warm, cell_dir / "warm", force);

  // Cluster with the warm model.
  KeyValueConfig cluster = config;
  cluster.set("cluster.checkpoint", (cell_dir / "warm/checkpoints/final.bin").string());
  run_cluster(cluster, cell_dir / "cluster", force);

  // Full CHNS run.
  KeyValueConfig chns = config;
  chns.set("sampler.mode", "chns");
  chns.set("sampler.cluster_map", (cell_dir / "cluster/cluster_map.json").string());
  run_train(chns, cell_dir / "train", force);

  KeyValueConfig eval = config;
  eval.set("eval.checkpoint", (cell_dir / "train/checkpoints/final.bin").string());
  run_eval(eval, cell_dir / "eval", force);

  return load_metric_report((cell_dir / "eval/metric_report.json").string());
}

}  // namespace

void run_grid(const KeyValueConfig& config, const fs::path& out_dir, bool force) {
  const fs::path results_path = out_dir / "grid_results.csv";
  require_fresh({results_path}, force);
  fs::create_directories(out_dir);

  load_corpus_dir(config.require_string("corpus.path"));  // validate early
  const std::uint64_t base_seed = config_seed(config);
  const auto k_values = config.get_size_list("grid.k_values", {10, 20, 50, 100});
  const auto hard_ratios = config.get_double_list("grid.hard_ratios", {0.2, 0.5, 0.8, 1.0});

  std::ofstream out(results_path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write grid results");
  out << "k,hard_ratio,eer,min_dcf,seed,status\n";

  for (std::size_t k : k_values) {
    for (double hard_ratio : hard_ratios) {
      std::uint64_t bits;
      std::memcpy(&bits, &hard_ratio, sizeof(bits));
      const std::uint64_t cell_seed = derive_key(base_seed, {hash_string("grid"), k, bits});
      char cell_name[64];
      std::snprintf(cell_name, sizeof(cell_name), "k%03zu_hr%s", k,
                    fmt_short(hard_ratio).c_str());
      const fs::path cell_dir = out_dir / "cells" / cell_name;
      try {
        MetricReport report = grid_cell(config, cell_dir, k, hard_ratio, cell_seed, force);
        out << k << "," << fmt_short(hard_ratio) << "," << fmt_double(report.eer) << ","
            << fmt_double(report.min_dcf) << "," << cell_seed << ",ok\n";
      } catch (const std::exception& e) {
        std::cerr << "grid cell " << cell_name << " failed: " << e.what() << "\n";
        out << k << "," << fmt_short(hard_ratio) << ",nan,nan," << cell_seed
            << ",failed\n";
      }
      out.flush();
    }
  }
  write_snapshot(config, out_dir, "grid");
  std::cout << "grid: results -> " << results_path << "\n";
}

void run_report(const KeyValueConfig& config, const std::vector<std::string>& run_dirs,
                const fs::path& out_dir, bool force) {
  if (run_dirs.empty()) throw Error(ErrorCode::InvalidConfig, "report needs run directories");
  const fs::path report_path = out_dir / "report.csv";
  const fs::path hist_path = out_dir / "histograms.csv";
  require_fresh({report_path, hist_path}, force);
  fs::create_directories(out_dir);

  const std::size_t n_batches = config.get_uint("report.histogram_batches", 100);
  const std::size_t bins = config.get_uint("report.histogram_bins", 50);

  std::ofstream report_out(report_path);
  std::ofstream hist_out(hist_path);
  if (!report_out || !hist_out)
    throw Error(ErrorCode::IoError, "cannot write report outputs");
  report_out << "run,strategy,eer,min_dcf,seed,neg_sim_mean\n";
  hist_out << "run,strategy,bin_lo,bin_hi,mass\n";

  for (const auto& run : run_dirs) {
    const fs::path run_dir(run);
    const fs::path sidecar = run_dir / "checkpoints/final.json";
    const fs::path snapshot = run_dir / "config.train.snapshot";
    if (!fs::exists(sidecar) || !fs::exists(snapshot))
      throw Error(ErrorCode::MissingArtifact,
                  "run " + run + " lacks a final checkpoint or train snapshot");

    std::ifstream sidecar_in(sidecar);
    json meta = json::parse(sidecar_in);
    const LossMode loss = loss_mode_from_string(meta.at("loss_mode").get<std::string>());
    const SamplerMode sampler =
        sampler_mode_from_string(meta.at("sampler_mode").get<std::string>());
    const std::string label = strategy_label(loss, sampler);
    const std::uint64_t seed = meta.at("seed").get<std::uint64_t>();

    KeyValueConfig run_config = KeyValueConfig::from_file(snapshot.string());
    Corpus corpus = load_corpus_dir(run_config.require_string("corpus.path"));
    EncoderParams params = load_checkpoint((run_dir / "checkpoints/final.bin").string());

    // Metric row; a run evaluated in place has metric_report.json, otherwise
    // the caller passed an eval directory alongside.
    MetricReport metrics{};
    bool have_metrics = false;
    for (const fs::path& candidate :
         {run_dir / "metric_report.json", run_dir / "eval/metric_report.json"}) {
      if (fs::exists(candidate)) {
        metrics = load_metric_report(candidate.string());
        have_metrics = true;
        break;
      }
    }

    // Negative-similarity distribution under the run's own sampler.
    std::optional<SpeakerClusterMap> map;
    if (sampler == SamplerMode::Chns) {
      const fs::path map_path = run_dir / "cluster_map_final.json";
      if (!fs::exists(map_path))
        throw Error(ErrorCode::MissingArtifact,
                    "chns run " + run + " lacks cluster_map_final.json");
      map = load_cluster_map(map_path.string());
    }
    TrainConfig train_config = train_config_from_config(run_config, seed);
    std::vector<Batch> batches;
    const std::uint64_t hist_seed = derive_key(seed, {hash_string("report")});
    for (std::size_t b = 0; b < n_batches; ++b) {
      auto rng = derive_rng(hist_seed, {hash_string("batch"), b});
      if (map) {
        batches.push_back(
            chns_sample_batch(*map, corpus.manifest, train_config.batch, rng));
      } else {
        batches.push_back(random_sample_batch(corpus.manifest, train_config.batch, rng));
      }
    }
    auto hist = negative_similarity_histogram(batches, params, corpus, bins);

    report_out << run << "," << label << ","
               << (have_metrics ? fmt_double(metrics.eer) : "nan") << ","
               << (have_metrics ? fmt_double(metrics.min_dcf) : "nan") << "," << seed
               << "," << fmt_double(hist.mean) << "\n";
    const double width = (hist.hi - hist.lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      hist_out << run << "," << label << "," << fmt_double(hist.lo + width * b) << ","
               << fmt_double(hist.lo + width * (b + 1)) << ","
               << fmt_double(hist.masses[b]) << "\n";
    }
  }
  write_snapshot(config, out_dir, "report");
  std::cout << "report: " << run_dirs.size() << " runs -> " << report_path << "\n";
}

std::string strategy_label(LossMode loss, SamplerMode sampler) {
  if (loss == LossMode::AamSoftmax) return "AAMSoftmax";
  const std::string base = loss == LossMode::SupCon ? "SupCon" : "H-SCL";
  return sampler == SamplerMode::Chns ? base + " + CHNS" : base;
}

}  // namespace chns
