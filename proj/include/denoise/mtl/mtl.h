// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_MTL_MTL_H_
#define DENOISE_MTL_MTL_H_

#include <array>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/autodiff/tensor.h"
#include "denoise/aux_ensemble/aux_ensemble.h"

namespace denoise::mtl {

using aux::kNumTerms;
using aux::LossWeights;
using aux::TermSet;

inline constexpr double kEpsilon = 1e-12;
inline constexpr double kDwaTemperature = 2.0;

enum class Strategy { kFixed, kEqual, kUncertainty, kCov, kDwa, kGradCosine };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);  // ConfigError on unknown names

using TermValues = std::array<double, kNumTerms>;

// Streaming mean and population variance.
struct Welford {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
};

struct WeightState {
  Strategy strategy = Strategy::kFixed;
  TermSet enabled;
  LossWeights base;  // fixed strategy, and the per-term scales for GradCosine

  // uncertainty: one log-variance per term, trainable; undefined when disabled
  std::array<ad::Tensor, kNumTerms> log_var;

  // CoV
  std::array<Welford, kNumTerms> loss_mean;   // of L_i
  std::array<Welford, kNumTerms> ratio_stats; // of L_i / previous running mean

  // DWA: the last two epoch-mean losses, oldest first
  std::deque<TermValues> history;
  double temperature = kDwaTemperature;

  std::size_t step = 0;
  std::size_t epoch = 0;
};

// Fresh state; `base` must validate. ConfigError on an empty term set.
WeightState make_state(Strategy s, const TermSet& enabled, const LossWeights& base);

// Weights that sum to one over the enabled terms.
LossWeights uniform_over(const TermSet& enabled);

LossWeights fixed_weights(const LossWeights& lambda);

// sum_i exp(-s_i) * L_i + s_i. ContractError when the counts differ.
ad::Tensor uncertainty_total(const std::vector<ad::Tensor>& losses, const std::vector<ad::Tensor>& log_var);

// Trainable log-variances of the enabled terms, in term order.
std::vector<ad::Tensor> uncertainty_parameters(const WeightState& st);

// Effective weights exp(-s_i).
LossWeights uncertainty_weights(const WeightState& st);

// Records one step's raw losses and returns weights summing to one. Uniform
// until every enabled term has two observations, and whenever all
// coefficients vanish.
LossWeights cov_weights(WeightState& st, const TermValues& losses);

// Records one epoch's mean losses and returns the weights for the next
// epoch: K * softmax(r / T) with r_i = L_i(t-1) / L_i(t-2), or one per term
// while fewer than two epochs are recorded.
LossWeights dwa_weights(WeightState& st, const TermValues& epoch_means);

// Initial DWA weights (one per enabled term).
LossWeights dwa_initial(const WeightState& st);

struct GradCosineResult {
  std::vector<double> combined;
  std::vector<bool> accepted;
  std::vector<double> cosine;
  bool zero_main = false;  // main gradient had zero norm; only main applied
};

// main + every aux gradient whose cosine with main is positive.
GradCosineResult gradcosine_filter(const std::vector<double>& main_grad,
                                   const std::vector<std::vector<double>>& aux_grads);

struct TrajectoryRow {
  std::size_t epoch = 0;
  aux::Term term = aux::Term::kL1;
  double raw_loss = 0.0;
  double weight = 0.0;
};

// Header "epoch,term,raw_loss,weight".
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);

}  // namespace denoise::mtl

#endif  // DENOISE_MTL_MTL_H_
