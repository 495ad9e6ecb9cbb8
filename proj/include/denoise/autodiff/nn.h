// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_NN_H_
#define DENOISE_AUTODIFF_NN_H_

#include <cstddef>

#include "denoise/autodiff/tensor.h"

namespace denoise::ad {

inline constexpr double kNormEpsilon = 1e-5;

// ---------------------------------------------------------------------------
// Normalization.

struct LayerNormParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
};

// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const LayerNormParams& p, double eps = kNormEpsilon);

struct BatchNormParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  Tensor running_mean;  // [C], updated in training mode
  Tensor running_var;   // [C]
  double momentum = 0.1;
};

// Normalizes each channel (last axis) over all leading axes. Training mode
// uses the statistics of `x` and needs at least two rows; eval mode uses the
// running statistics.
Tensor batch_norm(const Tensor& x, BatchNormParams& p, bool training, double eps = kNormEpsilon);

// ---------------------------------------------------------------------------
// Time convolution over x[B, T, C] with symmetric "same" padding.
//
//   kDepthwise: weight [K, C], one filter per channel
//   kPointwise: weight [Cin, Cout]
//   kFull:      weight [K, Cin, Cout]
//
// Output length is ceil(T / stride). K must be odd.
enum class ConvMode { kDepthwise, kPointwise, kFull };

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvMode mode,
              std::size_t stride = 1);

// ---------------------------------------------------------------------------
// Multi-head self-attention over x[B, T, D].

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [D, D] and [D]
  Tensor rel_bias;  // [heads, 2 * max_distance + 1]; used with relative PE only
};

struct AttentionOptions {
  std::size_t heads = 4;
  // Learned per-head logit bias indexed by clamp(i - j). When false,
  // sinusoidal absolute encodings are added to the input instead.
  bool relative_pe = true;
  std::size_t max_distance = 64;
};

Tensor attention(const Tensor& x, const AttentionParams& p, const AttentionOptions& opt);
// Attention weights [B, heads, T, T]; never recorded.
Tensor attention_probabilities(const Tensor& x, const AttentionParams& p,
                               const AttentionOptions& opt);
// [T, D] table: sin on even columns, cos on odd ones.
Tensor sinusoidal_positions(std::size_t frames, std::size_t dim);

// ---------------------------------------------------------------------------
// Squeeze-and-excitation channel gating over x[B, T, C]:
// time-mean -> linear C->C/r -> relu -> linear C/r->C -> sigmoid -> x * gate.

struct SqueezeExciteParams {
  Tensor w1, b1;  // [C, C/r], [C/r]
  Tensor w2, b2;  // [C/r, C], [C]
};

Tensor squeeze_excite(const Tensor& x, const SqueezeExciteParams& p, std::size_t squeeze_factor);
// Per-channel gates [B, C] that squeeze_excite would apply.
Tensor squeeze_excite_gates(const Tensor& x, const SqueezeExciteParams& p,
                            std::size_t squeeze_factor);

// ---------------------------------------------------------------------------
// Elman recurrence h_t = tanh(x_t wx + h_{t-1} wh + b), h_0 = 0, over
// x[B, T, Cin]; returns every h_t as [B, T, H].
Tensor rnn_tanh(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b);

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_NN_H_
