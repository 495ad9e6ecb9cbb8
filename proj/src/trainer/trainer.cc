// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/trainer/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "denoise/autodiff/adam.h"
#include "denoise/autodiff/ops.h"
#include "denoise/autodiff/tape.h"
#include "denoise/dsp/stft.h"
#include "denoise/dsp/wav.h"
#include "denoise/errors.h"
#include "denoise/random.h"

namespace denoise::trainer {

using aux::kNumTerms;
using aux::Term;
using aux::TermSet;
using mtl::Strategy;
using mtl::TermValues;
using nlohmann::json;

namespace {

constexpr std::size_t kL1 = static_cast<std::size_t>(Term::kL1);

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string join_terms(const TermSet& s) {
  std::string out;
  for (const auto& n : aux::term_names(s)) out += (out.empty() ? "" : "+") + n;
  return out;
}

std::string_view schedule_name(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "step_decay"; }

LrSchedule parse_schedule(std::string_view s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "step_decay") return LrSchedule::kStepDecay;
  throw ConfigError("unknown lr_schedule '" + std::string(s) + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ad::Tensor> tensors_of(const ad::NamedTensors& named) {
  std::vector<ad::Tensor> out;
  out.reserve(named.size());
  for (const auto& [_, t] : named) out.push_back(t);
  return out;
}

struct Pair {
  dsp::Spectrogram noisy;
  dsp::Spectrogram clean;
};

Pair load_pair(const corpus::Manifest& m, std::size_t row) {
  const auto& r = m.rows.at(row);
  auto noisy = dsp::read_wav(r.noisy_path);
  auto clean = dsp::read_wav(r.clean_path);
  if (noisy.size() != clean.size()) throw InputError("length mismatch in " + r.noisy_path.string());
  return {dsp::stft(noisy), dsp::stft(clean)};
}

std::size_t flat_size(const std::vector<ad::Tensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

void add_grads(const std::vector<ad::Tensor>& params, std::vector<double>& dst) {
  std::size_t k = 0;
  for (const auto& p : params) {
    if (p.has_grad()) {
      auto g = p.grad();
      for (std::size_t i = 0; i < g.size(); ++i) dst[k + i] += g[i];
    }
    k += p.size();
  }
}

void set_grads(const std::vector<ad::Tensor>& params, const std::vector<double>& src) {
  std::size_t k = 0;
  for (auto p : params) {
    auto g = p.mutable_grad();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(k), src.begin() + static_cast<std::ptrdiff_t>(k + g.size()),
              g.begin());
    k += g.size();
  }
}

[[noreturn]] void nan_abort(std::size_t epoch, std::size_t step, std::size_t row, const aux::TermLosses& tl) {
  std::ostringstream msg;
  msg << "non-finite loss at epoch " << epoch << " step " << step << " (train row " << row << "):";
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (tl.enabled.test(i)) msg << " " << aux::term_name(static_cast<Term>(i)) << "=" << tl.value[i].item();
  }
  throw NumericError(msg.str());
}

aux::AuxEnsemble ensemble_for(const TrainConfig& cfg) {
  const bool random = cfg.aux_dir == aux::kRandomFrozen;
  return aux::load_ensemble(cfg.enabled, random ? std::filesystem::path() : cfg.aux_dir,
                            derive_seed(cfg.seed, 0xa0));
}

json epoch_json(const EpochRecord& e, const TermSet& enabled) {
  json loss = json::object(), weight = json::object();
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!enabled.test(i)) continue;
    const std::string n(aux::term_name(static_cast<Term>(i)));
    loss[n] = e.train_loss[i];
    weight[n] = e.weight[i];
  }
  return {{"epoch", e.epoch},         {"lr", e.lr},
          {"train_total", e.train_total}, {"train_loss", loss},
          {"weight", weight},         {"val_stoi", e.val_stoi},
          {"val_si_sdr_db", e.val_si_sdr_db}, {"val_spec_l1", e.val_spec_l1}};
}

std::string epoch_csv(const RunRecord& r) {
  const TermSet& en = r.config.enabled;
  std::string out = "epoch,lr,train_total";
  for (const auto& n : aux::term_names(en)) out += ",loss_" + n;
  for (const auto& n : aux::term_names(en)) out += ",weight_" + n;
  out += ",val_stoi,val_si_sdr_db,val_spec_l1\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "," + fixed(e.lr, 8) + "," + fixed(e.train_total, 8);
    for (std::size_t i = 0; i < kNumTerms; ++i) {
      if (en.test(i)) out += "," + fixed(e.train_loss[i], 8);
    }
    for (std::size_t i = 0; i < kNumTerms; ++i) {
      if (en.test(i)) out += "," + fixed(e.weight[i], 8);
    }
    out += "," + fixed(100.0 * std::clamp(e.val_stoi, 0.0, 1.0), 4) + "," + fixed(e.val_si_sdr_db, 4) + "," +
           fixed(e.val_spec_l1, 6) + "\n";
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

void TrainConfig::validate() const {
  conformer.validate();
  if (enabled.none()) throw ConfigError("at least one loss term must be enabled");
  weights.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1 || accumulation_steps < 1) throw ConfigError("batch_size and accumulation_steps must be >= 1");
  if (batch_size % accumulation_steps != 0) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " is not a multiple of accumulation_steps " +
                      std::to_string(accumulation_steps));
  }
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  for (std::size_t e : lr_decay_epochs) {
    if (e < 1) throw ConfigError("lr_decay_epochs are 1-based");
  }
  if (train_manifest.empty() || val_manifest.empty()) throw ConfigError("train_manifest and val_manifest are required");
  if (needs_aux() && aux_dir.empty()) {
    throw ConfigError("aux_dir is required when perceptual terms are enabled (a directory or \"random_frozen\")");
  }
  if (strategy == Strategy::kGradCosine && !enabled.test(kL1)) {
    throw ConfigError("gradcosine needs the l1 term as its main loss");
  }
}

bool TrainConfig::needs_aux() const {
  for (std::size_t i = 0; i < kL1; ++i) {
    if (enabled.test(i)) return true;
  }
  return false;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.conformer.attention_dim = 64;
  c.conformer.num_blocks = 2;
  c.conformer.heads = 4;
  c.conformer.conv_kernel = 15;
  c.batch_size = 8;
  c.accumulation_steps = 2;
  return c;
}

void to_json(json& j, const TrainConfig& c) {
  json w = json::object();
  for (std::size_t i = 0; i < kNumTerms; ++i) w[std::string(aux::term_name(static_cast<Term>(i)))] = c.weights.lambda[i];
  j = {{"conformer", c.conformer},
       {"enabled_losses", aux::term_names(c.enabled)},
       {"weights", w},
       {"strategy", std::string(mtl::strategy_name(c.strategy))},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"accumulation_steps", c.accumulation_steps},
       {"lr", c.lr},
       {"lr_schedule", std::string(schedule_name(c.lr_schedule))},
       {"lr_decay_epochs", c.lr_decay_epochs},
       {"seed", c.seed},
       {"train_manifest", c.train_manifest.string()},
       {"val_manifest", c.val_manifest.string()},
       {"checkpoint_dir", c.checkpoint_dir.string()},
       {"aux_dir", c.aux_dir.string()},
       {"init_checkpoint", c.init_checkpoint.string()},
       {"max_train_rows", c.max_train_rows},
       {"max_val_rows", c.max_val_rows}};
}

void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> known = {
      "conformer",     "enabled_losses", "weights",         "strategy",       "epochs",
      "batch_size",    "accumulation_steps", "lr",          "lr_schedule",    "lr_decay_epochs",
      "seed",          "train_manifest", "val_manifest",    "checkpoint_dir", "aux_dir",
      "init_checkpoint", "max_train_rows", "max_val_rows"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown train config field '" + k + "'");
  }
  try {
    TrainConfig d;
    c.conformer = j.contains("conformer") ? j.at("conformer").get<conformer::ConformerConfig>() : d.conformer;
    c.enabled = j.contains("enabled_losses")
                    ? aux::parse_term_set(j.at("enabled_losses").get<std::vector<std::string>>())
                    : d.enabled;
    c.weights = d.weights;
    if (j.contains("weights")) {
      for (const auto& [k, v] : j.at("weights").items()) c.weights[aux::parse_term(k)] = v.get<double>();
    }
    c.strategy = j.contains("strategy") ? mtl::parse_strategy(j.at("strategy").get<std::string>()) : d.strategy;
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.accumulation_steps = j.value("accumulation_steps", d.accumulation_steps);
    c.lr = j.value("lr", d.lr);
    c.lr_schedule = j.contains("lr_schedule") ? parse_schedule(j.at("lr_schedule").get<std::string>()) : d.lr_schedule;
    c.lr_decay_epochs = j.value("lr_decay_epochs", d.lr_decay_epochs);
    c.seed = j.value("seed", d.seed);
    c.train_manifest = j.value("train_manifest", std::string());
    c.val_manifest = j.value("val_manifest", std::string());
    c.checkpoint_dir = j.value("checkpoint_dir", std::string());
    c.aux_dir = j.value("aux_dir", std::string());
    c.init_checkpoint = j.value("init_checkpoint", std::string());
    c.max_train_rows = j.value("max_train_rows", d.max_train_rows);
    c.max_val_rows = j.value("max_val_rows", d.max_val_rows);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

void save_config(const std::filesystem::path& path, const TrainConfig& c) {
  write_text(path, json(c).dump(2) + "\n");
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  if (cfg.lr_schedule == LrSchedule::kStepDecay) {
    for (std::size_t e : cfg.lr_decay_epochs) {
      if (epoch + 1 >= e) lr *= 0.5;
    }
  }
  return lr;
}

corpus::Manifest truncated(const corpus::Manifest& m, std::size_t max_rows) {
  corpus::Manifest out = m;
  if (max_rows > 0 && out.rows.size() > max_rows) out.rows.resize(max_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Records.

std::vector<mtl::TrajectoryRow> RunRecord::trajectory() const {
  std::vector<mtl::TrajectoryRow> rows;
  for (const auto& e : epochs) {
    for (std::size_t i = 0; i < kNumTerms; ++i) {
      if (config.enabled.test(i)) rows.push_back({e.epoch, static_cast<Term>(i), e.train_loss[i], e.weight[i]});
    }
  }
  return rows;
}

json to_json(const RunRecord& r, bool with_wall_time) {
  json epochs = json::array();
  for (const auto& e : r.epochs) epochs.push_back(epoch_json(e, r.config.enabled));
  json classes = json::object();
  for (const auto& [k, m] : r.best_by_class) {
    classes[k] = {{"stoi", m.stoi}, {"si_sdr_db", m.si_sdr_db}, {"spec_l1", m.spec_l1}, {"count", m.count}};
  }
  json j = {{"config", r.config},
            {"epochs", epochs},
            {"best_epoch", r.epochs.empty() ? 0 : r.epochs[r.best_epoch].epoch},
            {"best_by_noise_class", classes},
            {"parameter_count", r.parameter_count},
            {"param_checksum", hex64(r.param_checksum)},
            {"aux_checksum_before", hex64(r.aux_checksum_before)},
            {"aux_checksum_after", hex64(r.aux_checksum_after)}};
  if (with_wall_time) j["wall_time_s"] = r.wall_time_s;
  return j;
}

// ---------------------------------------------------------------------------
// Training.

RunRecord train(const TrainConfig& cfg, const TrainHooks& hooks) {
  conformer::MaskNet net;
  return train(cfg, net, hooks);
}

RunRecord train(const TrainConfig& cfg, conformer::MaskNet& net, const TrainHooks& hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  const auto train_set = truncated(corpus::read_manifest(cfg.train_manifest), cfg.max_train_rows);
  const auto val_set = truncated(corpus::read_manifest(cfg.val_manifest), cfg.max_val_rows);
  if (train_set.rows.empty()) throw CorpusError("training manifest " + cfg.train_manifest.string() + " is empty");
  if (val_set.rows.empty()) throw CorpusError("validation manifest " + cfg.val_manifest.string() + " is empty");

  const aux::AuxEnsemble ensemble = ensemble_for(cfg);
  const std::size_t f_bins = dsp::StftConfig{}.bins();
  if (cfg.init_checkpoint.empty()) {
    net = conformer::build(cfg.conformer, f_bins, derive_seed(cfg.seed, 0x11));
  } else {
    net = conformer::load_masknet(cfg.init_checkpoint);
    if (net.f_bins != f_bins) throw ConfigError("init_checkpoint has " + std::to_string(net.f_bins) + " bins");
  }

  RunRecord rec;
  rec.config = cfg;
  rec.config.conformer = net.config;
  rec.parameter_count = net.parameter_count();
  rec.aux_checksum_before = ensemble.checksum();

  mtl::WeightState ws = mtl::make_state(cfg.strategy, cfg.enabled, cfg.weights);
  std::vector<ad::Tensor> params = tensors_of(net.parameters());
  const std::size_t n_net = params.size();
  for (const auto& s : mtl::uncertainty_parameters(ws)) params.push_back(s);
  auto adam_state = ad::AdamState::for_params(params);

  aux::LossWeights w;
  switch (cfg.strategy) {
    case Strategy::kFixed:
    case Strategy::kGradCosine: w = mtl::fixed_weights(cfg.weights); break;
    case Strategy::kEqual:
    case Strategy::kCov: w = mtl::uniform_over(cfg.enabled); break;
    case Strategy::kDwa: w = mtl::dwa_initial(ws); break;
    case Strategy::kUncertainty: w = mtl::uncertainty_weights(ws); break;
  }

  std::vector<std::size_t> order(train_set.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(derive_seed(cfg.seed, 0x5f));
  const std::size_t micro = cfg.batch_size / cfg.accumulation_steps;
  std::vector<ad::Tensor> net_params(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n_net));
  const bool per_term = cfg.strategy == Strategy::kGradCosine;
  const std::size_t flat = per_term ? flat_size(net_params) : 0;

  std::optional<metrics::EvalResult> best_eval;
  double best_sdr = -std::numeric_limits<double>::infinity();
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch + 1;
    er.lr = lr_at(cfg, epoch);
    const ad::AdamOptions adam{er.lr};
    shuffler.shuffle(order);
    TermValues loss_sum{}, weight_sum{};
    double total_sum = 0;
    std::size_t steps = 0;

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(e - b);
      for (auto& p : params) p.zero_grad();
      std::vector<std::vector<double>> term_grads(per_term ? kNumTerms : 0);
      for (auto& g : term_grads) g.assign(flat, 0.0);
      TermValues batch_loss{};

      for (std::size_t m = b; m < e; m += micro) {
        const std::size_t me = std::min(e, m + micro);
        ad::Tape tape;
        ad::TapeScope scope(tape);
        ad::Tensor total;
        std::array<ad::Tensor, kNumTerms> term_total;
        for (std::size_t k = m; k < me; ++k) {
          const std::size_t row = order[k];
          const Pair pr = load_pair(train_set, row);
          auto enhanced = conformer::enhance(net, pr.noisy, true);
          auto terms = aux::compute_terms(cfg.enabled, ensemble, aux::perl_inputs(enhanced, pr.clean));
          for (std::size_t i = 0; i < kNumTerms; ++i) {
            if (!cfg.enabled.test(i)) continue;
            const double v = terms.value[i].item();
            if (!std::isfinite(v)) nan_abort(er.epoch, steps + 1, row, terms);
            batch_loss[i] += v * inv_batch;
          }
          ad::Tensor utt;
          if (cfg.strategy == Strategy::kUncertainty) {
            std::vector<ad::Tensor> ls, lv;
            for (std::size_t i = 0; i < kNumTerms; ++i) {
              if (!cfg.enabled.test(i)) continue;
              ls.push_back(terms.value[i]);
              lv.push_back(ws.log_var[i]);
            }
            utt = mtl::uncertainty_total(ls, lv);
            total_sum += utt.item() * inv_batch;
          } else if (per_term) {
            for (std::size_t i = 0; i < kNumTerms; ++i) {
              if (!cfg.enabled.test(i)) continue;
              ad::Tensor t = ad::scale(terms.value[i], w.lambda[i] * inv_batch);
              term_total[i] = term_total[i].defined() ? ad::add(term_total[i], t) : t;
              total_sum += w.lambda[i] * terms.value[i].item() * inv_batch;
            }
            continue;
          } else {
            auto rep = aux::weigh(terms, w);
            utt = rep.total_tensor;
            total_sum += rep.total * inv_batch;
          }
          ad::Tensor scaled = ad::scale(utt, inv_batch);
          total = total.defined() ? ad::add(total, scaled) : scaled;
        }
        if (per_term) {
          for (std::size_t i = 0; i < kNumTerms; ++i) {
            if (!term_total[i].defined()) continue;
            for (auto& p : net_params) p.zero_grad();
            tape.backward(term_total[i]);
            add_grads(net_params, term_grads[i]);
          }
        } else {
          tape.backward(total);
        }
      }

      TermValues applied = w.lambda;
      if (cfg.strategy == Strategy::kUncertainty) applied = mtl::uncertainty_weights(ws).lambda;
      if (per_term) {
        std::vector<std::vector<double>> aux_grads;
        std::vector<std::size_t> aux_terms;
        for (std::size_t i = 0; i < kL1; ++i) {
          if (!cfg.enabled.test(i)) continue;
          aux_grads.push_back(std::move(term_grads[i]));
          aux_terms.push_back(i);
        }
        auto filtered = mtl::gradcosine_filter(term_grads[kL1], aux_grads);
        set_grads(net_params, filtered.combined);
        for (std::size_t k = 0; k < aux_terms.size(); ++k) {
          if (!filtered.accepted[k]) applied[aux_terms[k]] = 0.0;
        }
      }
      ad::adam_step(params, adam_state, adam);
      ++steps;
      ++global_step;
      for (std::size_t i = 0; i < kNumTerms; ++i) {
        loss_sum[i] += batch_loss[i] * static_cast<double>(e - b);
        weight_sum[i] += applied[i];
      }
      if (cfg.strategy == Strategy::kCov) w = mtl::cov_weights(ws, batch_loss);
      if (hooks.on_step) hooks.on_step(er.epoch, steps, batch_loss[kL1]);
    }

    const double n_rows = static_cast<double>(order.size());
    for (std::size_t i = 0; i < kNumTerms; ++i) {
      if (!cfg.enabled.test(i)) continue;
      er.train_loss[i] = loss_sum[i] / n_rows;
      er.weight[i] = weight_sum[i] / static_cast<double>(steps);
    }
    er.train_total = total_sum / static_cast<double>(steps);
    if (cfg.strategy == Strategy::kDwa) w = mtl::dwa_weights(ws, er.train_loss);

    auto val = metrics::evaluate(net, val_set);
    er.val_stoi = val.mean_stoi;
    er.val_si_sdr_db = val.mean_si_sdr_db;
    er.val_spec_l1 = val.mean_spec_l1;
    rec.epochs.push_back(er);
    if (!cfg.checkpoint_dir.empty()) conformer::save_masknet(cfg.checkpoint_dir / "last.dnck", net);
    if (er.val_si_sdr_db > best_sdr) {
      best_sdr = er.val_si_sdr_db;
      rec.best_epoch = rec.epochs.size() - 1;
      rec.param_checksum = ad::checksum(net.parameters());
      best_eval = std::move(val);
      if (!cfg.checkpoint_dir.empty()) conformer::save_masknet(cfg.checkpoint_dir / "best.dnck", net);
    }
    if (hooks.on_epoch) hooks.on_epoch(er);
  }

  for (int c = 0; c < corpus::kNumNoiseClasses; ++c) {
    const auto nc = static_cast<corpus::NoiseClass>(c);
    auto sub = best_eval->subset([nc](const metrics::EvalRow& r) { return r.noise_class == nc; });
    if (sub.rows.empty()) continue;
    rec.best_by_class[std::string(corpus::noise_class_name(nc))] = {sub.mean_stoi, sub.mean_si_sdr_db,
                                                                    sub.mean_spec_l1, sub.rows.size()};
  }
  rec.aux_checksum_after = ensemble.checksum();
  if (rec.aux_checksum_after != rec.aux_checksum_before) {
    throw ContractError("auxiliary network parameters changed during training");
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.checkpoint_dir.empty()) {
    write_text(cfg.checkpoint_dir / "epochs.csv", epoch_csv(rec));
    write_text(cfg.checkpoint_dir / "run.json", to_json(rec).dump(2) + "\n");
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Experiment grids.

namespace {

TableVariant variant(const TrainConfig& base, const std::string& name, TermSet enabled) {
  TableVariant v{name, base};
  v.config.enabled = enabled;
  v.config.strategy = Strategy::kFixed;
  v.config.weights = aux::LossWeights::hand_tuned();
  if (!base.checkpoint_dir.empty()) v.config.checkpoint_dir = base.checkpoint_dir / name;
  return v;
}

Table run_variants(const std::string& kind, const std::vector<TableVariant>& variants, bool with_params) {
  Table t{kind, {}, with_params};
  for (const auto& v : variants) t.rows.push_back({v.name, v.config.enabled, train(v.config)});
  return t;
}

}  // namespace

std::vector<TableVariant> base_variants(const TrainConfig& base) {
  std::vector<TableVariant> out;
  out.push_back(variant(base, "l1", aux::term_set({Term::kL1})));
  for (aux::AuxName n : aux::kAllAux) {
    auto v = variant(base, std::string(aux::aux_name(n)), aux::term_set({aux::term_of(n), Term::kL1}));
    v.config.weights[Term::kL1] = 0.0;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<TableVariant> comb_variants(const TrainConfig& base) {
  std::vector<TableVariant> out;
  out.push_back(variant(base, "l1", aux::term_set({Term::kL1})));
  for (aux::AuxName n : aux::kAllAux) {
    out.push_back(variant(base, "l1+" + std::string(aux::aux_name(n)), aux::term_set({Term::kL1, aux::term_of(n)})));
  }
  out.push_back(variant(base, "l1+pase+event", aux::term_set({Term::kL1, Term::kPase, Term::kEvent})));
  out.push_back(
      variant(base, "l1+pase+event+speaker", aux::term_set({Term::kL1, Term::kPase, Term::kEvent, Term::kSpeaker})));
  out.push_back(variant(base, "perl", aux::all_terms()));
  return out;
}

std::vector<TableVariant> ablation_variants(const TrainConfig& base) {
  const TermSet best = aux::term_set({Term::kL1, Term::kEvent});
  std::vector<TableVariant> out;
  auto v = variant(base, "conformer", best);
  v.config.conformer.use_swish = true;
  v.config.conformer.use_conv_module = true;
  v.config.conformer.use_macaron = true;
  v.config.conformer.use_relative_pe = true;
  out.push_back(v);
  const std::pair<const char*, bool conformer::ConformerConfig::*> steps[] = {
      {"relu", &conformer::ConformerConfig::use_swish},
      {"no_conv", &conformer::ConformerConfig::use_conv_module},
      {"no_macaron", &conformer::ConformerConfig::use_macaron},
      {"no_relative_pe", &conformer::ConformerConfig::use_relative_pe}};
  for (const auto& [name, field] : steps) {
    TableVariant next = out.back();
    next.name = name;
    next.config.conformer.*field = false;
    if (!base.checkpoint_dir.empty()) next.config.checkpoint_dir = base.checkpoint_dir / name;
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<TableVariant> mtl_variants(const TrainConfig& base) {
  std::vector<TableVariant> out;
  out.push_back(variant(base, "hand_tuned", aux::all_terms()));
  auto ft = variant(base, "finetune_l1+event", aux::term_set({Term::kL1, Term::kEvent}));
  if (!base.checkpoint_dir.empty()) ft.config.init_checkpoint = base.checkpoint_dir / "hand_tuned" / "best.dnck";
  out.push_back(ft);
  for (Strategy s : {Strategy::kEqual, Strategy::kCov, Strategy::kUncertainty, Strategy::kDwa, Strategy::kGradCosine}) {
    auto v = variant(base, std::string(mtl::strategy_name(s)), aux::all_terms());
    v.config.strategy = s;
    out.push_back(std::move(v));
  }
  return out;
}

Table run_table_base(const TrainConfig& base) { return run_variants("base", base_variants(base), false); }
Table run_table_comb(const TrainConfig& base) { return run_variants("comb", comb_variants(base), false); }
Table run_ablation(const TrainConfig& base) { return run_variants("ablation", ablation_variants(base), true); }

Table run_mtl_compare(const TrainConfig& base) {
  const auto variants = mtl_variants(base);
  if (variants[1].config.init_checkpoint.empty()) {
    throw ConfigError("the mtl table needs checkpoint_dir for its fine-tuning row");
  }
  Table t = run_variants("mtl", variants, false);
  for (const auto& row : t.rows) {
    const Strategy s = row.record.config.strategy;
    if (s == Strategy::kFixed || s == Strategy::kEqual) continue;
    mtl::write_trajectory_csv(base.checkpoint_dir / ("trajectory_" + std::string(mtl::strategy_name(s)) + ".csv"),
                              row.record.trajectory());
  }
  return t;
}

std::string table_csv(const Table& t) {
  std::string out = "row,losses,stoi,si_sdr_db,spec_l1,best_epoch";
  out += t.with_params ? ",params\n" : "\n";
  for (const auto& r : t.rows) {
    const auto& b = r.record.best();
    out += r.name + "," + join_terms(r.enabled) + "," + fixed(100.0 * std::clamp(b.val_stoi, 0.0, 1.0), 4) + "," +
           fixed(b.val_si_sdr_db, 4) + "," + fixed(b.val_spec_l1, 6) + "," + std::to_string(b.epoch);
    if (t.with_params) out += "," + std::to_string(r.record.parameter_count);
    out += "\n";
  }
  return out;
}

void write_table_csv(const std::filesystem::path& path, const Table& t) { write_text(path, table_csv(t)); }

}  // namespace denoise::trainer
