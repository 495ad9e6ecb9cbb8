// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/autodiff/tape.h"

#include "denoise/errors.h"

namespace denoise::ad {

namespace {
thread_local Tape* g_active = nullptr;
}  // namespace

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoGradScope::NoGradScope() : previous_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = previous_; }

Tape::~Tape() {
  // Results outliving the tape become plain constants.
  for (auto& node : nodes_) {
    node.output->tape = nullptr;
    node.output->requires_grad = false;
    node.output->grad.clear();
  }
}

std::uint64_t Tape::append(TapeNode node) {
  const std::uint64_t id = next_id_++;
  node.output->node_id = id;
  node.output->tape = this;
  nodes_.push_back(std::move(node));
  return id;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (loss.impl()->tape != this) {
    throw ContractError("backward() loss was not recorded on this tape");
  }
  for (auto& node : nodes_) node.output->grad.clear();
  loss.impl()->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from loss
    it->backward(it->output->grad);
  }
}

namespace detail {

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!g_active) return false;
  for (const Tensor* in : inputs) {
    if (in && in->defined() && in->impl()->requires_grad) return true;
  }
  return false;
}

Tensor record(const char* kind, Shape shape, std::vector<double> data,
              const std::vector<const Tensor*>& inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  Tape* tape = g_active;
  if (!tape) return out;
  bool needs = false;
  std::vector<std::uint64_t> ids;
  ids.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (!in || !in->defined()) {
      ids.push_back(0);
      continue;
    }
    const auto& impl = in->impl();
    if (impl->tape && impl->tape != tape) {
      throw ContractError(std::string(kind) + ": input recorded on a different tape");
    }
    needs = needs || impl->requires_grad;
    ids.push_back(impl->node_id);
  }
  if (!needs) return out;
  out.impl()->requires_grad = true;
  tape->append(TapeNode{kind, std::move(ids), out.impl(), std::move(backward)});
  return out;
}

Tensor record(const char* kind, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  return record(kind, std::move(shape), std::move(data), std::vector<const Tensor*>(inputs),
                std::move(backward));
}

}  // namespace detail

}  // namespace denoise::ad
