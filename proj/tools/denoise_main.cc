// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line front end: corpus generation, aux pretraining, training,
// evaluation and the experiment tables.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "denoise/aux_ensemble/aux_ensemble.h"
#include "denoise/conformer/conformer.h"
#include "denoise/corpus/corpus.h"
#include "denoise/errors.h"
#include "denoise/metrics/metrics.h"
#include "denoise/trainer/trainer.h"

namespace fs = std::filesystem;
using namespace denoise;

namespace {

constexpr const char* kOutputRootEnv = "DENOISE_OUTPUT_ROOT";

// Relative output locations land under $DENOISE_OUTPUT_ROOT when it is set.
fs::path output_path(const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) / p : p;
}

void log_epoch(const trainer::EpochRecord& e) {
  std::fprintf(stderr, "epoch %zu lr %.2e train %.6f val stoi %.4f si_sdr %.3f dB spec_l1 %.5f\n", e.epoch, e.lr,
               e.train_total, e.val_stoi, e.val_si_sdr_db, e.val_spec_l1);
}

trainer::TrainConfig read_config(const fs::path& path) {
  auto cfg = trainer::load_config(path);
  cfg.checkpoint_dir = output_path(cfg.checkpoint_dir);
  return cfg;
}

struct CorpusArgs {
  std::string out;
  corpus::CorpusOptions opt;
};

struct AuxArgs {
  std::string manifest;
  std::string out;
  std::vector<std::string> tasks{"all"};
  aux::PretrainOptions opt;
};

struct ConfigArgs {
  std::string out;
  bool desk = false;
  std::string train_manifest, val_manifest, aux_dir, checkpoint_dir;
  std::vector<std::string> losses;
  std::string strategy;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  bool noisy = false;
};

int run_corpus(const CorpusArgs& a) {
  const fs::path out = output_path(a.out);
  auto paths = corpus::build_corpus(a.opt, out);
  std::cout << paths.train_manifest.string() << "\n" << paths.val_manifest.string() << "\n";
  return 0;
}

int run_aux(const AuxArgs& a) {
  const auto manifest = corpus::read_manifest(a.manifest);
  std::vector<aux::AuxName> tasks;
  for (const auto& t : a.tasks) {
    if (t == "all") {
      tasks.assign(std::begin(aux::kAllAux), std::end(aux::kAllAux));
    } else {
      tasks.push_back(aux::parse_aux_name(t));
    }
  }
  const fs::path out = output_path(a.out);
  fs::create_directories(out);
  for (auto t : tasks) {
    auto res = aux::pretrain_toy_aux(t, manifest, a.opt);
    const fs::path path = out / (std::string(aux::aux_name(t)) + ".dnck");
    aux::save_aux(path, res.net);
    std::printf("%s %s %.4f %s\n", std::string(aux::aux_name(t)).c_str(), res.net.val_metric.c_str(),
                res.net.val_score, path.string().c_str());
  }
  return 0;
}

int run_config_init(const ConfigArgs& a) {
  auto cfg = a.desk ? trainer::TrainConfig::desk() : trainer::TrainConfig{};
  if (!a.train_manifest.empty()) cfg.train_manifest = a.train_manifest;
  if (!a.val_manifest.empty()) cfg.val_manifest = a.val_manifest;
  if (!a.aux_dir.empty()) cfg.aux_dir = a.aux_dir;
  if (!a.checkpoint_dir.empty()) cfg.checkpoint_dir = a.checkpoint_dir;
  if (!a.losses.empty()) cfg.enabled = aux::parse_term_set(a.losses);
  if (!a.strategy.empty()) cfg.strategy = mtl::parse_strategy(a.strategy);
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.seed > 0) cfg.seed = a.seed;
  trainer::save_config(output_path(a.out), cfg);
  return 0;
}

int run_train(const std::string& config) {
  auto cfg = read_config(config);
  trainer::TrainHooks hooks;
  hooks.on_epoch = log_epoch;
  auto rec = trainer::train(cfg, hooks);
  const auto& b = rec.best();
  std::printf("best epoch %zu: stoi %.4f si_sdr %.3f dB spec_l1 %.5f (%.1f s)\n", b.epoch, b.val_stoi,
              b.val_si_sdr_db, b.val_spec_l1, rec.wall_time_s);
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto manifest = corpus::read_manifest(a.manifest);
  metrics::EvalResult r;
  if (a.noisy) {
    r = metrics::evaluate_noisy(manifest);
  } else {
    if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --noisy");
    auto net = conformer::load_masknet(a.checkpoint);
    r = metrics::evaluate(net, manifest);
  }
  if (a.out.empty()) {
    std::cout << metrics::eval_csv(r);
  } else {
    metrics::write_eval_csv(output_path(a.out), r);
  }
  return 0;
}

int run_table(const std::string& kind, const std::string& config, const std::string& out) {
  auto cfg = read_config(config);
  trainer::Table t;
  if (kind == "base") {
    t = trainer::run_table_base(cfg);
  } else if (kind == "comb") {
    t = trainer::run_table_comb(cfg);
  } else if (kind == "ablation") {
    t = trainer::run_ablation(cfg);
  } else {
    t = trainer::run_mtl_compare(cfg);
  }
  if (out.empty()) {
    std::cout << trainer::table_csv(t);
  } else {
    trainer::write_table_csv(output_path(out), t);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech denoising with an ensemble of perceptual losses"};
  app.require_subcommand(1);
  std::function<int()> action;

  auto* corpus_cmd = app.add_subcommand("corpus", "Synthetic corpus")->require_subcommand(1);
  CorpusArgs ca;
  auto* build = corpus_cmd->add_subcommand("build", "Generate mixtures and manifests");
  build->add_option("--out", ca.out, "Output directory")->required();
  build->add_option("--train", ca.opt.train_size, "Training mixtures")->capture_default_str();
  build->add_option("--val", ca.opt.val_size, "Validation mixtures")->capture_default_str();
  build->add_option("--seed", ca.opt.seed)->capture_default_str();
  build->add_option("--duration", ca.opt.duration_s, "Seconds per utterance")->capture_default_str();
  build->callback([&] { action = [&] { return run_corpus(ca); }; });

  auto* aux_cmd = app.add_subcommand("aux", "Auxiliary networks")->require_subcommand(1);
  AuxArgs aa;
  auto* pre = aux_cmd->add_subcommand("pretrain", "Pretrain toy auxiliary networks");
  pre->add_option("--train-manifest", aa.manifest)->required()->check(CLI::ExistingFile);
  pre->add_option("--out", aa.out, "Checkpoint directory")->required();
  pre->add_option("--task", aa.tasks, "event, acoustic, speaker, emotion, pase, wav2vec or all")
      ->capture_default_str();
  pre->add_option("--epochs", aa.opt.epochs)->capture_default_str();
  pre->add_option("--seed", aa.opt.seed)->capture_default_str();
  pre->add_option("--lr", aa.opt.lr)->capture_default_str();
  pre->add_option("--batch", aa.opt.batch)->capture_default_str();
  pre->add_option("--max-rows", aa.opt.max_rows, "0 uses every row")->capture_default_str();
  pre->callback([&] { action = [&] { return run_aux(aa); }; });

  auto* cfg_cmd = app.add_subcommand("config", "Training configuration files")->require_subcommand(1);
  ConfigArgs ga;
  auto* init = cfg_cmd->add_subcommand("init", "Write a configuration with every field");
  init->add_option("--out", ga.out)->required();
  init->add_flag("--desk", ga.desk, "Small model sized for one CPU core");
  init->add_option("--train-manifest", ga.train_manifest);
  init->add_option("--val-manifest", ga.val_manifest);
  init->add_option("--aux-dir", ga.aux_dir);
  init->add_option("--checkpoint-dir", ga.checkpoint_dir);
  init->add_option("--losses", ga.losses, "Enabled loss terms");
  init->add_option("--strategy", ga.strategy);
  init->add_option("--epochs", ga.epochs);
  init->add_option("--seed", ga.seed);
  init->callback([&] { action = [&] { return run_config_init(ga); }; });

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train a mask network");
  train_cmd->add_option("--config", train_config)->required()->check(CLI::ExistingFile);
  train_cmd->callback([&] { action = [&] { return run_train(train_config); }; });

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", ea.manifest)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ea.out, "CSV path; stdout when omitted");
  eval_cmd->add_flag("--noisy", ea.noisy, "Score the unprocessed mixtures");
  eval_cmd->callback([&] { action = [&] { return run_eval(ea); }; });

  std::string table_config, table_out, table_kind;
  auto* table_cmd = app.add_subcommand("table", "Run an experiment grid");
  table_cmd->add_option("kind", table_kind)->required()->check(CLI::IsMember({"base", "comb", "ablation", "mtl"}));
  table_cmd->add_option("--config", table_config)->required()->check(CLI::ExistingFile);
  table_cmd->add_option("--out", table_out, "CSV path; stdout when omitted");
  table_cmd->callback([&] { action = [&] { return run_table(table_kind, table_config, table_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action ? action() : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "denoise: %s\n", e.what());
    return 2;
  }
}
