// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_INIT_H_
#define DENOISE_AUTODIFF_INIT_H_

#include <cstdint>
#include <random>

#include "denoise/autodiff/tensor.h"

namespace denoise::ad {

// Seeded parameter factory. Uniform draws are built from raw 64-bit engine
// output so values are identical across standard libraries.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // Box-Muller

  // U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); trainable.
  Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out);
  Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
  Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_INIT_H_
