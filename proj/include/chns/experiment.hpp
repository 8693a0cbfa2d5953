#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "chns/config.hpp"
#include "chns/corpus.hpp"
#include "chns/evalkit.hpp"
#include "chns/synthdata.hpp"
#include "chns/trainer.hpp"

namespace chns {

// Config-driven pipeline stages shared by the CLI and the test suites. Every
// stage snapshots its resolved config into the output directory and refuses
// to overwrite existing artifacts unless force is set.

CorpusSpec corpus_spec_from_config(const KeyValueConfig& config);
TrainConfig train_config_from_config(const KeyValueConfig& config, std::uint64_t seed);

// Synthesized corpus -> <out>/manifest.json + <out>/features.bin.
void run_gen_data(const KeyValueConfig& config, const std::filesystem::path& out_dir,
                  bool force);

// Voiceprints + cluster map from a checkpoint ->
// <out>/voiceprints.{bin,json} + <out>/cluster_map.json.
void run_cluster(const KeyValueConfig& config, const std::filesystem::path& out_dir,
                 bool force);

// Training run -> <out>/checkpoints/..., train_log.csv, epoch_metrics.csv,
// train_events.csv, cluster_map_final.json (chns runs).
void run_train(const KeyValueConfig& config, const std::filesystem::path& out_dir,
               bool force);

// Trials + metrics for a checkpoint -> <out>/trials.txt + metric_report.json.
void run_eval(const KeyValueConfig& config, const std::filesystem::path& out_dir,
              bool force);

// Full warm->cluster->train->eval pipeline per (k, hard_ratio) cell ->
// <out>/grid_results.csv.
void run_grid(const KeyValueConfig& config, const std::filesystem::path& out_dir,
              bool force);

// Collates metric reports of completed runs and emits negative-similarity
// histograms per sampler mode -> <out>/report.csv + histograms.csv.
void run_report(const KeyValueConfig& config, const std::vector<std::string>& run_dirs,
                const std::filesystem::path& out_dir, bool force);

// Strategy label in the style of the headline comparison table.
std::string strategy_label(LossMode loss, SamplerMode sampler);

Corpus load_corpus_dir(const std::filesystem::path& dir);

}  // namespace chns
