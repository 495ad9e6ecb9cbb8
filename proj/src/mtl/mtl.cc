// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/mtl/mtl.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "denoise/autodiff/ops.h"
#include "denoise/errors.h"

namespace denoise::mtl {

namespace {

std::size_t enabled_count(const TermSet& s) { return s.count(); }

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10e", v);
  return buf;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kFixed: return "fixed";
    case Strategy::kEqual: return "equal";
    case Strategy::kUncertainty: return "uncertainty";
    case Strategy::kCov: return "cov";
    case Strategy::kDwa: return "dwa";
    case Strategy::kGradCosine: return "gradcosine";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view s) {
  for (Strategy x : {Strategy::kFixed, Strategy::kEqual, Strategy::kUncertainty, Strategy::kCov, Strategy::kDwa,
                     Strategy::kGradCosine}) {
    if (strategy_name(x) == s) return x;
  }
  throw ConfigError("unknown weighting strategy '" + std::string(s) + "'");
}

void Welford::add(double x) {
  ++count;
  const double d = x - mean;
  mean += d / static_cast<double>(count);
  m2 += d * (x - mean);
}

WeightState make_state(Strategy s, const TermSet& enabled, const LossWeights& base) {
  if (enabled.none()) throw ConfigError("weighting needs at least one enabled term");
  base.validate();
  WeightState st;
  st.strategy = s;
  st.enabled = enabled;
  st.base = base;
  if (s == Strategy::kUncertainty) {
    for (std::size_t i = 0; i < kNumTerms; ++i) {
      if (enabled.test(i)) st.log_var[i] = ad::Tensor::zeros({}, true);
    }
  }
  return st;
}

LossWeights uniform_over(const TermSet& enabled) {
  LossWeights w;
  const double k = static_cast<double>(enabled_count(enabled));
  for (std::size_t i = 0; i < kNumTerms; ++i) w.lambda[i] = enabled.test(i) ? 1.0 / k : 0.0;
  return w;
}

LossWeights fixed_weights(const LossWeights& lambda) {
  lambda.validate();
  return lambda;
}

ad::Tensor uncertainty_total(const std::vector<ad::Tensor>& losses, const std::vector<ad::Tensor>& log_var) {
  if (losses.size() != log_var.size() || losses.empty()) {
    throw ContractError("uncertainty weighting: " + std::to_string(losses.size()) + " losses but " +
                        std::to_string(log_var.size()) + " log-variances");
  }
  ad::Tensor total;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    ad::Tensor term = ad::add(ad::mul(ad::exp(ad::neg(log_var[i])), losses[i]), log_var[i]);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

std::vector<ad::Tensor> uncertainty_parameters(const WeightState& st) {
  std::vector<ad::Tensor> out;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (st.log_var[i].defined()) out.push_back(st.log_var[i]);
  }
  return out;
}

LossWeights uncertainty_weights(const WeightState& st) {
  LossWeights w;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (st.log_var[i].defined()) w.lambda[i] = std::exp(-st.log_var[i].item());
  }
  return w;
}

LossWeights cov_weights(WeightState& st, const TermValues& losses) {
  ++st.step;
  bool ready = true;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!st.enabled.test(i)) continue;
    const double prev = st.loss_mean[i].count > 0 ? st.loss_mean[i].mean : losses[i];
    st.ratio_stats[i].add(losses[i] / std::max(prev, kEpsilon));
    st.loss_mean[i].add(losses[i]);
    ready = ready && st.ratio_stats[i].count >= 2;
  }
  if (!ready) return uniform_over(st.enabled);
  LossWeights w;
  double total = 0;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!st.enabled.test(i)) continue;
    const auto& r = st.ratio_stats[i];
    w.lambda[i] = std::sqrt(r.variance()) / std::max(r.mean, kEpsilon);
    total += w.lambda[i];
  }
  if (total < kEpsilon) return uniform_over(st.enabled);
  for (double& v : w.lambda) v /= total;
  return w;
}

LossWeights dwa_initial(const WeightState& st) {
  LossWeights w;
  for (std::size_t i = 0; i < kNumTerms; ++i) w.lambda[i] = st.enabled.test(i) ? 1.0 : 0.0;
  return w;
}

LossWeights dwa_weights(WeightState& st, const TermValues& epoch_means) {
  if (!(st.temperature > 0)) throw ConfigError("DWA temperature must be positive");
  st.history.push_back(epoch_means);
  while (st.history.size() > 2) st.history.pop_front();
  ++st.epoch;
  if (st.history.size() < 2) return dwa_initial(st);
  const auto& older = st.history[0];
  const auto& newer = st.history[1];
  TermValues e{};
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!st.enabled.test(i)) continue;
    e[i] = newer[i] / std::max(older[i], kEpsilon) / st.temperature;
    peak = std::max(peak, e[i]);
  }
  double z = 0;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!st.enabled.test(i)) continue;
    e[i] = std::exp(e[i] - peak);
    z += e[i];
  }
  const double k = static_cast<double>(enabled_count(st.enabled));
  LossWeights w;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (st.enabled.test(i)) w.lambda[i] = k * e[i] / z;
  }
  return w;
}

GradCosineResult gradcosine_filter(const std::vector<double>& main_grad,
                                   const std::vector<std::vector<double>>& aux_grads) {
  GradCosineResult r;
  r.combined = main_grad;
  r.accepted.assign(aux_grads.size(), false);
  r.cosine.assign(aux_grads.size(), 0.0);
  double mm = 0;
  for (double v : main_grad) mm += v * v;
  r.zero_main = mm == 0.0;
  for (std::size_t k = 0; k < aux_grads.size(); ++k) {
    const auto& g = aux_grads[k];
    if (g.size() != main_grad.size()) throw ContractError("gradcosine: gradient lengths differ");
    if (r.zero_main) continue;
    double dot = 0, gg = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      dot += g[i] * main_grad[i];
      gg += g[i] * g[i];
    }
    r.cosine[k] = gg > 0 ? dot / std::sqrt(mm * gg) : 0.0;
    if (dot > 0) {
      r.accepted[k] = true;
      for (std::size_t i = 0; i < g.size(); ++i) r.combined[i] += g[i];
    }
  }
  return r;
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::string out = "epoch,term,raw_loss,weight\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + std::string(aux::term_name(r.term)) + "," + sci(r.raw_loss) + "," +
           sci(r.weight) + "\n";
  }
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << trajectory_csv(rows);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace denoise::mtl
