#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chns/config.hpp"
#include "chns/error.hpp"
#include "chns/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  bool force = false;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file (key = value lines)");
  cmd->add_option("--out", args.out_dir, "Output directory")->required();
  cmd->add_option("--seed", args.seed, "Seed override");
  cmd->add_flag("--force", args.force, "Overwrite existing outputs");
  cmd->add_option("--set", args.overrides, "Override a config key (key=value)");
}

chns::KeyValueConfig resolve_config(const CommonArgs& args) {
  chns::KeyValueConfig config;
  if (!args.config_path.empty())
    config = chns::KeyValueConfig::from_file(args.config_path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw chns::Error(chns::ErrorCode::InvalidConfig,
                        "--set expects key=value, got: " + kv);
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.seed.empty()) config.set("seed", args.seed);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chns: clustering-based hard negative sampling lab for speaker "
               "verification experiments"};
  app.require_subcommand(1);

  CommonArgs gen_args, cluster_args, train_args, eval_args, grid_args, report_args;
  std::string cluster_checkpoint, eval_checkpoint, train_map, corpus_dir_gen;
  std::string cluster_corpus, train_corpus, eval_corpus, grid_corpus;
  std::vector<std::string> report_runs;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  add_common(gen, gen_args);

  auto* cluster = app.add_subcommand("cluster", "Compute voiceprints and a cluster map");
  add_common(cluster, cluster_args);
  cluster->add_option("--corpus", cluster_corpus, "Corpus directory");
  cluster->add_option("--checkpoint", cluster_checkpoint, "Encoder checkpoint");

  auto* train = app.add_subcommand("train", "Train an encoder");
  add_common(train, train_args);
  train->add_option("--corpus", train_corpus, "Corpus directory");
  train->add_option("--cluster-map", train_map, "Cluster map for chns sampling");

  auto* eval = app.add_subcommand("eval", "Score trials and compute EER/minDCF");
  add_common(eval, eval_args);
  eval->add_option("--corpus", eval_corpus, "Corpus directory");
  eval->add_option("--checkpoint", eval_checkpoint, "Encoder checkpoint");

  auto* grid = app.add_subcommand("grid", "Run the cluster-count x hard-ratio grid");
  add_common(grid, grid_args);
  grid->add_option("--corpus", grid_corpus, "Corpus directory");

  auto* report = app.add_subcommand("report", "Collate runs into a comparison table");
  add_common(report, report_args);
  report->add_option("runs", report_runs, "Completed run directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      run_gen_data(resolve_config(gen_args), gen_args.out_dir, gen_args.force);
    } else if (cluster->parsed()) {
      auto config = resolve_config(cluster_args);
      if (!cluster_corpus.empty()) config.set("corpus.path", cluster_corpus);
      if (!cluster_checkpoint.empty()) config.set("cluster.checkpoint", cluster_checkpoint);
      run_cluster(config, cluster_args.out_dir, cluster_args.force);
    } else if (train->parsed()) {
      auto config = resolve_config(train_args);
      if (!train_corpus.empty()) config.set("corpus.path", train_corpus);
      if (!train_map.empty()) config.set("sampler.cluster_map", train_map);
      run_train(config, train_args.out_dir, train_args.force);
    } else if (eval->parsed()) {
      auto config = resolve_config(eval_args);
      if (!eval_corpus.empty()) config.set("corpus.path", eval_corpus);
      if (!eval_checkpoint.empty()) config.set("eval.checkpoint", eval_checkpoint);
      run_eval(config, eval_args.out_dir, eval_args.force);
    } else if (grid->parsed()) {
      auto config = resolve_config(grid_args);
      if (!grid_corpus.empty()) config.set("corpus.path", grid_corpus);
      run_grid(config, grid_args.out_dir, grid_args.force);
    } else if (report->parsed()) {
      run_report(resolve_config(report_args), report_runs, report_args.out_dir,
                 report_args.force);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
