// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_TAPE_H_
#define DENOISE_AUTODIFF_TAPE_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "denoise/autodiff/tensor.h"

namespace denoise::ad {

// Receives the gradient of the node output and accumulates into inputs.
using BackwardFn = std::function<void(const std::vector<double>& grad_out)>;

struct TapeNode {
  std::string kind;
  std::vector<std::uint64_t> input_ids;  // 0 marks a leaf input
  std::shared_ptr<detail::TensorImpl> output;
  BackwardFn backward;
};

// Reverse-mode record of operations. Nodes are appended in execution order,
// so inputs always precede their consumers. A tape is bound to one thread
// through TapeScope; tapes on different threads share nothing.
class Tape {
 public:
  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Propagates d(loss)/d(.) to every reachable leaf that requires grad.
  // Leaf gradients accumulate across calls; intermediate buffers are reset
  // at the start of each call.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }

  std::uint64_t append(TapeNode node);

 private:
  std::vector<TapeNode> nodes_;
  std::uint64_t next_id_ = 1;
};

// Makes a tape the active recorder on the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording on the current thread (inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

namespace detail {

// Builds an op result. When a tape is active and any input requires grad,
// the result joins the tape with `backward`; otherwise it is a constant.
Tensor record(const char* kind, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, BackwardFn backward);
Tensor record(const char* kind, Shape shape, std::vector<double> data,
              const std::vector<const Tensor*>& inputs, BackwardFn backward);

// True when an op over `inputs` would be recorded on the active tape.
bool recording(std::initializer_list<const Tensor*> inputs);

// Gradient buffer to accumulate into, or null when `t` takes no gradient.
inline std::vector<double>* grad_target(const std::shared_ptr<TensorImpl>& t) {
  return t->requires_grad ? &t->grad_buffer() : nullptr;
}

}  // namespace detail

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_TAPE_H_
