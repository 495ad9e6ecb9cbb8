// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_TENSOR_H_
#define DENOISE_AUTODIFF_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace denoise::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty when no gradient has been accumulated.
  std::vector<double> grad;
  bool requires_grad = false;
  // Producing tape; null for leaves.
  Tape* tape = nullptr;
  // 0 for leaves, otherwise unique within the producing tape.
  std::uint64_t node_id = 0;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Shared handle to a float64 n-d array in row-major order. Copies alias the
// same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  // Writes bypass the tape; only valid on leaves or outside a backward pass.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  std::uint64_t node_id() const;
  bool is_leaf() const;

  Tensor clone() const;
  // Same values, cut from any tape history, no gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Order-sensitive FNV-1a over the raw bytes of every tensor.
std::uint64_t checksum(const NamedTensors& tensors);
std::size_t parameter_count(const NamedTensors& tensors);

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_TENSOR_H_
