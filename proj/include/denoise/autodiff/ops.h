// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_OPS_H_
#define DENOISE_AUTODIFF_OPS_H_

#include <cstddef>
#include <vector>

#include "denoise/autodiff/tensor.h"

namespace denoise::ad {

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Binary ops broadcast numpy-style (right-aligned,
// size-1 axes stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
// Natural log; every input must be positive.
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);

// ---------------------------------------------------------------------------
// Activations.
enum class Activation { kRelu, kSigmoid, kSwish, kSoftmaxLastDim, kGluLastDim };

Tensor activation(const Tensor& x, Activation kind);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// x * sigmoid(x)
Tensor swish(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
// Splits the last axis in halves (a, b) and returns a * sigmoid(b).
Tensor glu_lastdim(const Tensor& x);

// ---------------------------------------------------------------------------
// Reductions and shape manipulation.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over one axis; the axis is removed from the shape.
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
// Stacks same-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& items);
// Scalar element `index` of the flattened tensor.
Tensor element(const Tensor& x, std::size_t index);
Tensor transpose2d(const Tensor& x);

// ---------------------------------------------------------------------------
// Dense layers.

// x[..., K] @ w[K, N] + b[N]. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// a[M, K] @ b[K, N].
Tensor matmul(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Losses.

// mean |a - b|
Tensor mean_abs_diff(const Tensor& a, const Tensor& b);
// mean (a - b)^2
Tensor mean_squared_diff(const Tensor& a, const Tensor& b);
// Mean negative log-likelihood of `labels` under softmax(logits[N, C]).
// Rows whose label is negative are ignored.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_OPS_H_
