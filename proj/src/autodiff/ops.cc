// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/autodiff/ops.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "denoise/autodiff/tape.h"
#include "denoise/errors.h"
#include "eigen_maps.h"

namespace denoise::ad {

using detail::grad_target;
using detail::record;
using detail::recording;

namespace {

// Flat index maps from an output element to the contributing a/b elements.
struct Broadcast {
  Shape out;
  bool same = false;
  std::vector<std::uint32_t> ia, ib;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  // Strides, zeroed along stretched axes.
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ta = 1, tb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ta;
    sb[i] = pb[i] == 1 ? 0 : tb;
    ta *= pa[i];
    tb *= pb[i];
  }
  const std::size_t n = numel(plan.out);
  plan.ia.resize(n);
  plan.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < n; ++k) {
    plan.ia[k] = static_cast<std::uint32_t>(oa);
    plan.ib[k] = static_cast<std::uint32_t>(ob);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < plan.out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return plan;
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  static constexpr const char* kNames[] = {"add", "sub", "mul"};
  const char* name = kNames[static_cast<int>(kind)];
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = numel(plan->out);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = ad[plan->same ? k : plan->ia[k]];
    const double y = bd[plan->same ? k : plan->ib[k]];
    out[k] = kind == BinaryKind::kAdd ? x + y : kind == BinaryKind::kSub ? x - y : x * y;
  }
  if (!recording({&a, &b})) return Tensor(plan->out, std::move(out));
  auto ai = a.impl(), bi = b.impl();
  Shape shape = plan->out;
  return record(name, std::move(shape), std::move(out), {&a, &b},
                [ai, bi, plan, kind](const std::vector<double>& g) {
                  const std::size_t n = g.size();
                  if (auto* ga = grad_target(ai)) {
                    for (std::size_t k = 0; k < n; ++k) {
                      const std::size_t j = plan->same ? k : plan->ia[k];
                      const double d =
                          kind == BinaryKind::kMul ? g[k] * bi->data[plan->same ? k : plan->ib[k]]
                                                   : g[k];
                      (*ga)[j] += d;
                    }
                  }
                  if (auto* gb = grad_target(bi)) {
                    for (std::size_t k = 0; k < n; ++k) {
                      const std::size_t j = plan->same ? k : plan->ib[k];
                      double d = g[k];
                      if (kind == BinaryKind::kSub) d = -d;
                      if (kind == BinaryKind::kMul) d *= ai->data[plan->same ? k : plan->ia[k]];
                      (*gb)[j] += d;
                    }
                  }
                });
}

// y = f(x) elementwise; dfdx(x, y) gives the local derivative.
template <typename F, typename D>
Tensor unary(const char* name, const Tensor& x, F f, D dfdx) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  if (!recording({&x})) return Tensor(x.shape(), std::move(out));
  auto xi = x.impl();
  auto y = std::make_shared<std::vector<double>>(out);
  return record(name, x.shape(), std::move(out), {&x},
                [xi, y, dfdx](const std::vector<double>& g) {
                  if (auto* gx = grad_target(xi)) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      (*gx)[i] += g[i] * dfdx(xi->data[i], (*y)[i]);
                    }
                  }
                });
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul); }

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double v) { return v + value; },
               [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0 ? 1.0 : v < 0 ? -1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0)) throw ContractError("log: non-positive input " + std::to_string(v));
  }
  return unary("log", a, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor swish(const Tensor& x) {
  return unary("swish", x, [](double v) { return v * sigmoid_scalar(v); },
               [](double v, double) {
                 const double s = sigmoid_scalar(v);
                 return s * (1.0 + v * (1.0 - s));
               });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax_lastdim: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c ? x.size() / c : 0;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * c;
    double* o = out.data() + r * c;
    const double m = *std::max_element(in, in + c);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - m));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  if (!recording({&x})) return Tensor(x.shape(), std::move(out));
  auto xi = x.impl();
  auto y = std::make_shared<std::vector<double>>(out);
  return record("softmax", x.shape(), std::move(out), {&x},
                [xi, y, rows, c](const std::vector<double>& g) {
                  auto* gx = grad_target(xi);
                  if (!gx) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* yr = y->data() + r * c;
                    const double* gr = g.data() + r * c;
                    double dot = 0;
                    for (std::size_t j = 0; j < c; ++j) dot += yr[j] * gr[j];
                    for (std::size_t j = 0; j < c; ++j) (*gx)[r * c + j] += yr[j] * (gr[j] - dot);
                  }
                });
}

Tensor glu_lastdim(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() % 2 != 0) {
    throw DimensionError("glu_lastdim: last dimension must be even, got shape " +
                         shape_str(x.shape()));
  }
  const std::size_t c2 = x.shape().back();
  const std::size_t c = c2 / 2;
  const std::size_t rows = x.size() / c2;
  Shape shape = x.shape();
  shape.back() = c;
  const auto xd = x.data();
  std::vector<double> out(rows * c);
  std::vector<double> gate(rows * c);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      gate[r * c + j] = sigmoid_scalar(xd[r * c2 + c + j]);
      out[r * c + j] = xd[r * c2 + j] * gate[r * c + j];
    }
  }
  if (!recording({&x})) return Tensor(std::move(shape), std::move(out));
  auto xi = x.impl();
  auto s = std::make_shared<std::vector<double>>(std::move(gate));
  return record("glu", std::move(shape), std::move(out), {&x},
                [xi, s, rows, c](const std::vector<double>& g) {
                  auto* gx = grad_target(xi);
                  if (!gx) return;
                  const std::size_t c2 = 2 * c;
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < c; ++j) {
                      const double sg = (*s)[r * c + j];
                      const double a = xi->data[r * c2 + j];
                      const double gr = g[r * c + j];
                      (*gx)[r * c2 + j] += gr * sg;
                      (*gx)[r * c2 + c + j] += gr * a * sg * (1.0 - sg);
                    }
                  }
                });
}

Tensor activation(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::kRelu: return relu(x);
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kSwish: return swish(x);
    case Activation::kSoftmaxLastDim: return softmax_lastdim(x);
    case Activation::kGluLastDim: return glu_lastdim(x);
  }
  throw ConfigError("unknown activation");
}

Tensor sum(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  if (!recording({&x})) return Tensor::scalar(s);
  auto xi = x.impl();
  return record("sum", {}, {s}, {&x}, [xi](const std::vector<double>& g) {
    if (auto* gx = grad_target(xi)) {
      for (double& v : *gx) v += g[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("mean_axis: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  if (len == 0) throw DimensionError("mean_axis over empty axis");
  Shape shape(s);
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xd = x.data();
  std::vector<double> out(outer * inner, 0.0);
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* row = xd.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  for (double& v : out) v *= inv;
  if (!recording({&x})) return Tensor(std::move(shape), std::move(out));
  auto xi = x.impl();
  return record("mean_axis", std::move(shape), std::move(out), {&x},
                [xi, outer, inner, len, inv](const std::vector<double>& g) {
                  auto* gx = grad_target(xi);
                  if (!gx) return;
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t l = 0; l < len; ++l) {
                      double* dst = gx->data() + (o * len + l) * inner;
                      const double* src = g.data() + o * inner;
                      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                    }
                  }
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  if (!recording({&x})) return Tensor(std::move(shape), std::move(out));
  auto xi = x.impl();
  return record("reshape", std::move(shape), std::move(out), {&x},
                [xi](const std::vector<double>& g) {
                  if (auto* gx = grad_target(xi)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                  }
                });
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw DimensionError("stack: no tensors");
  const Shape& inner = items.front().shape();
  const std::size_t n = items.front().size();
  std::vector<double> out;
  out.reserve(n * items.size());
  std::vector<const Tensor*> inputs;
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw DimensionError("stack: shape " + shape_str(t.shape()) + " differs from " +
                           shape_str(inner));
    }
    out.insert(out.end(), t.data().begin(), t.data().end());
    inputs.push_back(&t);
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const auto& t : items) impls.push_back(t.impl());
  return record("stack", std::move(shape), std::move(out), inputs,
                [impls, n](const std::vector<double>& g) {
                  for (std::size_t k = 0; k < impls.size(); ++k) {
                    if (auto* gx = grad_target(impls[k])) {
                      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += g[k * n + i];
                    }
                  }
                });
}

Tensor element(const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw DimensionError("element: index " + std::to_string(index) + " out of range for " +
                         shape_str(x.shape()));
  }
  const double v = x.data()[index];
  if (!recording({&x})) return Tensor::scalar(v);
  auto xi = x.impl();
  return record("element", {}, {v}, {&x}, [xi, index](const std::vector<double>& g) {
    if (auto* gx = grad_target(xi)) (*gx)[index] += g[0];
  });
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose2d: need rank 2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto xd = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xd[i * n + j];
  }
  if (!recording({&x})) return Tensor({n, m}, std::move(out));
  auto xi = x.impl();
  return record("transpose", {n, m}, std::move(out), {&x},
                [xi, m, n](const std::vector<double>& g) {
                  if (auto* gx = grad_target(xi)) {
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += g[j * m + i];
                    }
                  }
                });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.dim(0) ||
      (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(1)))) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()) +
                         (b.defined() ? " and bias " + shape_str(b.shape()) : std::string()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1);
  const std::size_t rows = x.size() / k;
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<double> out(rows * n);
  {
    auto X = cmap(x.data().data(), rows, k);
    auto W = cmap(w.data().data(), k, n);
    auto Y = map(out.data(), rows, n);
    Y.noalias() = X * W;
    if (b.defined()) Y.rowwise() += crow(b.data().data(), n);
  }
  if (!recording({&x, &w, &b})) return Tensor(std::move(shape), std::move(out));
  auto xi = x.impl(), wi = w.impl();
  auto bi = b.defined() ? b.impl() : nullptr;
  return record("linear", std::move(shape), std::move(out), {&x, &w, &b},
                [xi, wi, bi, rows, k, n](const std::vector<double>& g) {
                  auto G = cmap(g.data(), rows, n);
                  if (auto* gx = grad_target(xi)) {
                    map(gx->data(), rows, k).noalias() += G * cmap(wi->data.data(), k, n).transpose();
                  }
                  if (auto* gw = grad_target(wi)) {
                    map(gw->data(), k, n).noalias() += cmap(xi->data.data(), rows, k).transpose() * G;
                  }
                  if (bi) {
                    if (auto* gb = grad_target(bi)) row(gb->data(), n) += G.colwise().sum();
                  }
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  return linear(a, b, Tensor());
}

Tensor mean_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractError("mean_abs_diff: shape " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  const auto ad = a.data(), bd = b.data();
  const std::size_t n = ad.size();
  if (n == 0) throw DimensionError("mean_abs_diff of empty tensors");
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(ad[i] - bd[i]);
  s /= static_cast<double>(n);
  if (!recording({&a, &b})) return Tensor::scalar(s);
  auto ai = a.impl(), bi = b.impl();
  return record("mean_abs_diff", {}, {s}, {&a, &b}, [ai, bi, n](const std::vector<double>& g) {
    const double c = g[0] / static_cast<double>(n);
    auto* ga = grad_target(ai);
    auto* gb = grad_target(bi);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = ai->data[i] - bi->data[i];
      const double sg = d > 0 ? c : d < 0 ? -c : 0.0;
      if (ga) (*ga)[i] += sg;
      if (gb) (*gb)[i] -= sg;
    }
  });
}

Tensor mean_squared_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractError("mean_squared_diff: shape " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  Tensor d = sub(a, b);
  return mean(mul(d, d));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const auto ld = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double total = 0;
  std::size_t used = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = ld.data() + r * c;
    double* p = probs->data() + r * c;
    const double m = *std::max_element(row, row + c);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (p[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) p[j] /= z;
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) + " >= " +
                          std::to_string(c) + " classes");
    }
    total += -(row[labels[r]] - m - std::log(z));
    ++used;
  }
  if (used == 0) throw ContractError("cross_entropy: every label ignored");
  total /= static_cast<double>(used);
  if (!recording({&logits})) return Tensor::scalar(total);
  auto li = logits.impl();
  return record("cross_entropy", {}, {total}, {&logits},
                [li, probs, labels, n, c, used](const std::vector<double>& g) {
                  auto* gl = grad_target(li);
                  if (!gl) return;
                  const double s = g[0] / static_cast<double>(used);
                  for (std::size_t r = 0; r < n; ++r) {
                    if (labels[r] < 0) continue;
                    for (std::size_t j = 0; j < c; ++j) {
                      const double target = static_cast<int>(j) == labels[r] ? 1.0 : 0.0;
                      (*gl)[r * c + j] += s * ((*probs)[r * c + j] - target);
                    }
                  }
                });
}

}  // namespace denoise::ad
