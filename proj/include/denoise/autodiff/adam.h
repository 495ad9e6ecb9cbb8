// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_ADAM_H_
#define DENOISE_AUTODIFF_ADAM_H_

#include <cstddef>
#include <vector>

#include "denoise/autodiff/tensor.h"

namespace denoise::ad {

struct AdamOptions {
  double lr = 7.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one per parameter, plus the shared step count.
struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const std::vector<Tensor>& params);
};

// One bias-corrected Adam update using each parameter's accumulated grad
// (an absent grad counts as zero). Increments state.step.
void adam_step(const std::vector<Tensor>& params, AdamState& state, const AdamOptions& opt);

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_ADAM_H_
