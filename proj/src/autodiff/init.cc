// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/autodiff/init.h"

#include <cmath>
#include <numbers>

namespace denoise::ad {

double Initializer::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Initializer::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Initializer::glorot(Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = uniform(-a, a);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace denoise::ad
