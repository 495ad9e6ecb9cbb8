// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_TRAINER_TRAINER_H_
#define DENOISE_TRAINER_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "denoise/aux_ensemble/aux_ensemble.h"
#include "denoise/conformer/conformer.h"
#include "denoise/metrics/metrics.h"
#include "denoise/mtl/mtl.h"

namespace denoise::trainer {

enum class LrSchedule { kConstant, kStepDecay };

struct TrainConfig {
  conformer::ConformerConfig conformer;
  aux::TermSet enabled = aux::term_set({aux::Term::kL1});
  aux::LossWeights weights = aux::LossWeights::hand_tuned();
  mtl::Strategy strategy = mtl::Strategy::kFixed;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t accumulation_steps = 8;
  double lr = 0.00075;
  LrSchedule lr_schedule = LrSchedule::kStepDecay;
  std::vector<std::size_t> lr_decay_epochs = {6, 8};  // 1-based; x0.5 from each
  std::uint64_t seed = 1;
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  std::filesystem::path checkpoint_dir;
  // Directory of pretrained aux checkpoints, or "random_frozen".
  std::filesystem::path aux_dir;
  // Mask network to start from instead of a fresh initialization.
  std::filesystem::path init_checkpoint;
  std::size_t max_train_rows = 0;  // 0 uses every row
  std::size_t max_val_rows = 0;

  // ConfigError on broken invariants.
  void validate() const;
  bool needs_aux() const;

  // Small model and short runs that fit a single CPU core.
  static TrainConfig desk();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& c);

// Learning rate for a 0-based epoch.
double lr_at(const TrainConfig& cfg, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  mtl::TermValues train_loss{};  // mean raw loss per term
  double train_total = 0.0;      // mean weighted objective
  mtl::TermValues weight{};      // mean applied weight per term
  double val_stoi = 0.0;
  double val_si_sdr_db = 0.0;
  double val_spec_l1 = 0.0;
};

struct ClassMetrics {
  double stoi = 0.0;
  double si_sdr_db = 0.0;
  double spec_l1 = 0.0;
  std::size_t count = 0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // index into epochs
  // Best checkpoint's validation metrics per noise class name.
  std::map<std::string, ClassMetrics> best_by_class;
  std::size_t parameter_count = 0;
  std::uint64_t param_checksum = 0;  // best checkpoint
  std::uint64_t aux_checksum_before = 0;
  std::uint64_t aux_checksum_after = 0;
  double wall_time_s = 0.0;

  const EpochRecord& best() const { return epochs.at(best_epoch); }
  std::vector<mtl::TrajectoryRow> trajectory() const;
};

// with_wall_time=false leaves out the only field that varies between runs.
nlohmann::json to_json(const RunRecord& r, bool with_wall_time = true);

struct TrainHooks {
  // Called after every optimizer step with the 1-based epoch and step.
  std::function<void(std::size_t, std::size_t, double)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains the mask network, validating after each epoch. Writes
// checkpoint_dir/{last,best}.dnck and run.json when checkpoint_dir is set.
// NumericError on a non-finite loss; ConfigError for a missing aux network.
RunRecord train(const TrainConfig& cfg, const TrainHooks& hooks = {});

// Same as train() but hands back the final in-memory network as well.
RunRecord train(const TrainConfig& cfg, conformer::MaskNet& final_net, const TrainHooks& hooks = {});

corpus::Manifest truncated(const corpus::Manifest& m, std::size_t max_rows);

// ---------------------------------------------------------------------------
// Experiment grids.

struct TableRow {
  std::string name;
  aux::TermSet enabled;
  RunRecord record;
};

struct Table {
  std::string kind;
  std::vector<TableRow> rows;
  bool with_params = false;
};

struct TableVariant {
  std::string name;
  TrainConfig config;
};

// Row configurations without running them. Each row trains into
// base.checkpoint_dir/<name>.
std::vector<TableVariant> base_variants(const TrainConfig& base);
std::vector<TableVariant> comb_variants(const TrainConfig& base);
std::vector<TableVariant> ablation_variants(const TrainConfig& base);
std::vector<TableVariant> mtl_variants(const TrainConfig& base);

Table run_table_base(const TrainConfig& base);
Table run_table_comb(const TrainConfig& base);
Table run_ablation(const TrainConfig& base);
// Also writes base.checkpoint_dir/trajectory_<strategy>.csv for every learned
// strategy.
Table run_mtl_compare(const TrainConfig& base);

// Header "row,losses,stoi,si_sdr_db,spec_l1,best_epoch" plus ",params" for
// the ablation table. STOI as a percentage.
std::string table_csv(const Table& t);
void write_table_csv(const std::filesystem::path& path, const Table& t);

}  // namespace denoise::trainer

#endif  // DENOISE_TRAINER_TRAINER_H_
