// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/autodiff/nn.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "denoise/autodiff/ops.h"
#include "denoise/autodiff/tape.h"
#include "denoise/errors.h"
#include "eigen_maps.h"

namespace denoise::ad {

using detail::grad_target;
using detail::record;
using detail::recording;

namespace {

void require_vector(const Tensor& t, std::size_t n, const char* op, const char* what) {
  if (!t.defined() || t.rank() != 1 || t.dim(0) != n) {
    throw DimensionError(std::string(op) + ": " + what + " must have shape [" + std::to_string(n) +
                         "], got " + (t.defined() ? shape_str(t.shape()) : "<undefined>"));
  }
}

void require_shape(const Tensor& t, const Shape& shape, const char* op, const char* what) {
  if (!t.defined() || t.shape() != shape) {
    throw DimensionError(std::string(op) + ": " + what + " must have shape " + shape_str(shape) +
                         ", got " + (t.defined() ? shape_str(t.shape()) : "<undefined>"));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Layer norm

Tensor layer_norm(const Tensor& x, const LayerNormParams& p, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  require_vector(p.gamma, c, "layer_norm", "gamma");
  require_vector(p.beta, c, "layer_norm", "beta");
  const auto xd = x.data();
  const auto gd = p.gamma.data();
  const auto bd = p.beta.data();
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * c;
    double m = 0;
    for (std::size_t j = 0; j < c; ++j) m += in[j];
    m /= static_cast<double>(c);
    double v = 0;
    for (std::size_t j = 0; j < c; ++j) v += (in[j] - m) * (in[j] - m);
    v /= static_cast<double>(c);
    const double iv = 1.0 / std::sqrt(v + eps);
    (*inv)[r] = iv;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (in[j] - m) * iv;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = gd[j] * h + bd[j];
    }
  }
  if (!recording({&x, &p.gamma, &p.beta})) return Tensor(x.shape(), std::move(out));
  auto xi = x.impl(), gi = p.gamma.impl(), bi = p.beta.impl();
  return record("layer_norm", x.shape(), std::move(out), {&x, &p.gamma, &p.beta},
                [xi, gi, bi, xhat, inv, rows, c](const std::vector<double>& g) {
                  auto* gg = grad_target(gi);
                  auto* gb = grad_target(bi);
                  auto* gx = grad_target(xi);
                  const double invc = 1.0 / static_cast<double>(c);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * c;
                    const double* hr = xhat->data() + r * c;
                    double s1 = 0, s2 = 0;
                    for (std::size_t j = 0; j < c; ++j) {
                      if (gg) (*gg)[j] += gr[j] * hr[j];
                      if (gb) (*gb)[j] += gr[j];
                      const double dh = gr[j] * gi->data[j];
                      s1 += dh;
                      s2 += dh * hr[j];
                    }
                    if (!gx) continue;
                    for (std::size_t j = 0; j < c; ++j) {
                      const double dh = gr[j] * gi->data[j];
                      (*gx)[r * c + j] += (*inv)[r] * (dh - s1 * invc - hr[j] * s2 * invc);
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Batch norm

Tensor batch_norm(const Tensor& x, BatchNormParams& p, bool training, double eps) {
  if (x.rank() == 0) throw DimensionError("batch_norm: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  require_vector(p.gamma, c, "batch_norm", "gamma");
  require_vector(p.beta, c, "batch_norm", "beta");
  require_vector(p.running_mean, c, "batch_norm", "running_mean");
  require_vector(p.running_var, c, "batch_norm", "running_var");
  if (training && rows < 2) {
    throw ContractError("batch_norm: degenerate batch of " + std::to_string(rows) +
                        " row(s) in training mode; need at least 2");
  }
  const auto xd = x.data();
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (training) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) mu[j] += xd[r * c + j];
    }
    for (double& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const double d = xd[r * c + j] - mu[j];
        var[j] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(rows);
    auto rm = p.running_mean.mutable_data();
    auto rv = p.running_var.mutable_data();
    const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
    for (std::size_t j = 0; j < c; ++j) {
      rm[j] = (1.0 - p.momentum) * rm[j] + p.momentum * mu[j];
      rv[j] = (1.0 - p.momentum) * rv[j] + p.momentum * var[j] * unbias;
    }
  } else {
    std::copy(p.running_mean.data().begin(), p.running_mean.data().end(), mu.begin());
    std::copy(p.running_var.data().begin(), p.running_var.data().end(), var.begin());
  }
  auto inv = std::make_shared<std::vector<double>>(c);
  for (std::size_t j = 0; j < c; ++j) (*inv)[j] = 1.0 / std::sqrt(var[j] + eps);
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  const auto gd = p.gamma.data();
  const auto bd = p.beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xd[r * c + j] - mu[j]) * (*inv)[j];
      (*xhat)[r * c + j] = h;
      out[r * c + j] = gd[j] * h + bd[j];
    }
  }
  if (!recording({&x, &p.gamma, &p.beta})) return Tensor(x.shape(), std::move(out));
  auto xi = x.impl(), gi = p.gamma.impl(), bi = p.beta.impl();
  return record(
      "batch_norm", x.shape(), std::move(out), {&x, &p.gamma, &p.beta},
      [xi, gi, bi, xhat, inv, rows, c, training](const std::vector<double>& g) {
        auto* gg = grad_target(gi);
        auto* gb = grad_target(bi);
        auto* gx = grad_target(xi);
        std::vector<double> s1(c, 0.0), s2(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            const double gr = g[r * c + j];
            const double h = (*xhat)[r * c + j];
            if (gg) (*gg)[j] += gr * h;
            if (gb) (*gb)[j] += gr;
            const double dh = gr * gi->data[j];
            s1[j] += dh;
            s2[j] += dh * h;
          }
        }
        if (!gx) return;
        const double invn = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = g[r * c + j] * gi->data[j];
            if (training) {
              (*gx)[r * c + j] +=
                  (*inv)[j] * (dh - s1[j] * invn - (*xhat)[r * c + j] * s2[j] * invn);
            } else {
              (*gx)[r * c + j] += (*inv)[j] * dh;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv1d

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvMode mode,
              std::size_t stride) {
  if (x.rank() != 3) throw DimensionError("conv1d: input must be [B,T,C], got " + shape_str(x.shape()));
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t batch = x.dim(0), frames = x.dim(1), cin = x.dim(2);
  std::size_t kernel = 1, cout = cin;
  switch (mode) {
    case ConvMode::kDepthwise:
      if (weight.rank() != 2 || weight.dim(1) != cin) {
        throw DimensionError("conv1d depthwise: weight " + shape_str(weight.shape()) +
                             " does not match input " + shape_str(x.shape()));
      }
      kernel = weight.dim(0);
      break;
    case ConvMode::kPointwise:
      if (weight.rank() != 2 || weight.dim(0) != cin) {
        throw DimensionError("conv1d pointwise: weight " + shape_str(weight.shape()) +
                             " does not match input " + shape_str(x.shape()));
      }
      cout = weight.dim(1);
      break;
    case ConvMode::kFull:
      if (weight.rank() != 3 || weight.dim(1) != cin) {
        throw DimensionError("conv1d full: weight " + shape_str(weight.shape()) +
                             " does not match input " + shape_str(x.shape()));
      }
      kernel = weight.dim(0);
      cout = weight.dim(2);
      break;
  }
  if (kernel % 2 == 0) {
    throw ConfigError("conv1d: kernel width " + std::to_string(kernel) +
                      " must be odd for symmetric same padding");
  }
  if (bias.defined()) require_vector(bias, cout, "conv1d", "bias");
  const std::size_t pad = (kernel - 1) / 2;
  const std::size_t tout = (frames + stride - 1) / stride;
  const auto xd = x.data();
  const auto wd = weight.data();
  std::vector<double> out(batch * tout * cout, 0.0);
  Shape shape{batch, tout, cout};
  auto input_index = [&](std::size_t t, std::size_t j) -> std::ptrdiff_t {
    return static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(pad);
  };

  if (mode == ConvMode::kDepthwise) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < tout; ++t) {
        double* o = out.data() + (b * tout + t) * cout;
        if (bias.defined()) std::copy(bias.data().begin(), bias.data().end(), o);
        for (std::size_t j = 0; j < kernel; ++j) {
          const std::ptrdiff_t s = input_index(t, j);
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(frames)) continue;
          const double* in = xd.data() + (b * frames + static_cast<std::size_t>(s)) * cin;
          const double* w = wd.data() + j * cin;
          for (std::size_t c = 0; c < cin; ++c) o[c] += in[c] * w[c];
        }
      }
    }
    if (!recording({&x, &weight, &bias})) return Tensor(std::move(shape), std::move(out));
    auto xi = x.impl(), wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    return record("conv1d_depthwise", std::move(shape), std::move(out), {&x, &weight, &bias},
                  [=](const std::vector<double>& g) {
                    auto* gx = grad_target(xi);
                    auto* gw = grad_target(wi);
                    auto* gb = bi ? grad_target(bi) : nullptr;
                    for (std::size_t b = 0; b < batch; ++b) {
                      for (std::size_t t = 0; t < tout; ++t) {
                        const double* gr = g.data() + (b * tout + t) * cin;
                        if (gb) {
                          for (std::size_t c = 0; c < cin; ++c) (*gb)[c] += gr[c];
                        }
                        for (std::size_t j = 0; j < kernel; ++j) {
                          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * stride + j) -
                                                   static_cast<std::ptrdiff_t>(pad);
                          if (s < 0 || s >= static_cast<std::ptrdiff_t>(frames)) continue;
                          const std::size_t base = (b * frames + static_cast<std::size_t>(s)) * cin;
                          for (std::size_t c = 0; c < cin; ++c) {
                            if (gw) (*gw)[j * cin + c] += gr[c] * xi->data[base + c];
                            if (gx) (*gx)[base + c] += gr[c] * wi->data[j * cin + c];
                          }
                        }
                      }
                    }
                  });
  }

  // Pointwise and full: im2col followed by one matrix product.
  const std::size_t width = kernel * cin;
  auto cols = std::make_shared<std::vector<double>>(batch * tout * width, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      double* col = cols->data() + (b * tout + t) * width;
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::ptrdiff_t s = input_index(t, j);
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(frames)) continue;
        const double* in = xd.data() + (b * frames + static_cast<std::size_t>(s)) * cin;
        std::copy(in, in + cin, col + j * cin);
      }
    }
  }
  const std::size_t rows = batch * tout;
  {
    auto Y = map(out.data(), rows, cout);
    Y.noalias() = cmap(cols->data(), rows, width) * cmap(wd.data(), width, cout);
    if (bias.defined()) Y.rowwise() += crow(bias.data().data(), cout);
  }
  if (!recording({&x, &weight, &bias})) return Tensor(std::move(shape), std::move(out));
  auto xi = x.impl(), wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return record("conv1d", std::move(shape), std::move(out), {&x, &weight, &bias},
                [=](const std::vector<double>& g) {
                  auto G = cmap(g.data(), rows, cout);
                  if (auto* gw = grad_target(wi)) {
                    map(gw->data(), width, cout).noalias() +=
                        cmap(cols->data(), rows, width).transpose() * G;
                  }
                  if (bi) {
                    if (auto* gb = grad_target(bi)) row(gb->data(), cout) += G.colwise().sum();
                  }
                  auto* gx = grad_target(xi);
                  if (!gx) return;
                  RowMatrix dcols = G * cmap(wi->data.data(), width, cout).transpose();
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t t = 0; t < tout; ++t) {
                      const double* dc = dcols.data() + (b * tout + t) * width;
                      for (std::size_t j = 0; j < kernel; ++j) {
                        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * stride + j) -
                                                 static_cast<std::ptrdiff_t>(pad);
                        if (s < 0 || s >= static_cast<std::ptrdiff_t>(frames)) continue;
                        double* dst = gx->data() + (b * frames + static_cast<std::size_t>(s)) * cin;
                        for (std::size_t c = 0; c < cin; ++c) dst[c] += dc[j * cin + c];
                      }
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Attention

Tensor sinusoidal_positions(std::size_t frames, std::size_t dim) {
  std::vector<double> pe(frames * dim);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double a = static_cast<double>(t) * rate;
      pe[t * dim + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return Tensor({frames, dim}, std::move(pe));
}

namespace {

struct AttentionState {
  std::size_t batch = 0, frames = 0, dim = 0, heads = 0, head_dim = 0;
  RowMatrix xin, q, k, v, o;
  std::vector<double> probs;  // [B, H, T, T]
};

void validate_attention(const Tensor& x, const AttentionParams& p, const AttentionOptions& opt) {
  if (x.rank() != 3) throw DimensionError("attention: input must be [B,T,D], got " + shape_str(x.shape()));
  const std::size_t d = x.dim(2);
  if (opt.heads == 0 || d % opt.heads != 0) {
    throw ConfigError("attention: dimension " + std::to_string(d) + " not divisible by " +
                      std::to_string(opt.heads) + " heads");
  }
  for (const Tensor* w : {&p.wq, &p.wk, &p.wv, &p.wo}) require_shape(*w, {d, d}, "attention", "projection");
  for (const Tensor* b : {&p.bq, &p.bk, &p.bv, &p.bo}) require_vector(*b, d, "attention", "bias");
  if (opt.relative_pe) {
    require_shape(p.rel_bias, {opt.heads, 2 * opt.max_distance + 1}, "attention", "rel_bias");
  }
}

void attention_forward(const Tensor& x, const AttentionParams& p, const AttentionOptions& opt,
                       AttentionState& st) {
  st.batch = x.dim(0);
  st.frames = x.dim(1);
  st.dim = x.dim(2);
  st.heads = opt.heads;
  st.head_dim = st.dim / st.heads;
  const std::size_t bt = st.batch * st.frames, T = st.frames, D = st.dim;
  st.xin = cmap(x.data().data(), bt, D);
  if (!opt.relative_pe) {
    Tensor pe = sinusoidal_positions(T, D);
    auto P = cmap(pe.data().data(), T, D);
    for (std::size_t b = 0; b < st.batch; ++b) st.xin.middleRows(static_cast<Eigen::Index>(b * T), static_cast<Eigen::Index>(T)) += P;
  }
  auto proj = [&](const Tensor& w, const Tensor& bias) {
    RowMatrix r = st.xin * cmap(w.data().data(), D, D);
    r.rowwise() += crow(bias.data().data(), D);
    return r;
  };
  st.q = proj(p.wq, p.bq);
  st.k = proj(p.wk, p.bk);
  st.v = proj(p.wv, p.bv);
  st.o = RowMatrix::Zero(static_cast<Eigen::Index>(bt), static_cast<Eigen::Index>(D));
  st.probs.assign(st.batch * st.heads * T * T, 0.0);
  const double sc = 1.0 / std::sqrt(static_cast<double>(st.head_dim));
  const auto iT = static_cast<Eigen::Index>(T);
  const auto idk = static_cast<Eigen::Index>(st.head_dim);
  const std::size_t span = 2 * opt.max_distance + 1;
  const auto md = static_cast<std::ptrdiff_t>(opt.max_distance);
  for (std::size_t b = 0; b < st.batch; ++b) {
    const auto r0 = static_cast<Eigen::Index>(b * T);
    for (std::size_t h = 0; h < st.heads; ++h) {
      const auto c0 = static_cast<Eigen::Index>(h * st.head_dim);
      auto S = map(st.probs.data() + (b * st.heads + h) * T * T, T, T);
      S.noalias() = sc * st.q.block(r0, c0, iT, idk) * st.k.block(r0, c0, iT, idk).transpose();
      if (opt.relative_pe) {
        const double* rb = p.rel_bias.data().data() + h * span;
        for (std::size_t i = 0; i < T; ++i) {
          for (std::size_t j = 0; j < T; ++j) {
            const std::ptrdiff_t off = std::clamp(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j), -md, md);
            S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += rb[off + md];
          }
        }
      }
      for (Eigen::Index i = 0; i < iT; ++i) {
        auto r = S.row(i);
        const double m = r.maxCoeff();
        r = (r.array() - m).exp();
        r /= r.sum();
      }
      st.o.block(r0, c0, iT, idk).noalias() = S * st.v.block(r0, c0, iT, idk);
    }
  }
}

}  // namespace

Tensor attention_probabilities(const Tensor& x, const AttentionParams& p,
                               const AttentionOptions& opt) {
  validate_attention(x, p, opt);
  AttentionState st;
  attention_forward(x, p, opt, st);
  return Tensor({st.batch, st.heads, st.frames, st.frames}, std::move(st.probs));
}

Tensor attention(const Tensor& x, const AttentionParams& p, const AttentionOptions& opt) {
  validate_attention(x, p, opt);
  auto st = std::make_shared<AttentionState>();
  attention_forward(x, p, opt, *st);
  const std::size_t bt = st->batch * st->frames, D = st->dim;
  std::vector<double> out(bt * D);
  {
    auto Y = map(out.data(), bt, D);
    Y.noalias() = st->o * cmap(p.wo.data().data(), D, D);
    Y.rowwise() += crow(p.bo.data().data(), D);
  }
  std::vector<const Tensor*> inputs{&x, &p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo};
  if (opt.relative_pe) inputs.push_back(&p.rel_bias);
  bool any = false;
  for (const Tensor* t : inputs) any = any || recording({t});
  if (!any) return Tensor(x.shape(), std::move(out));
  auto xi = x.impl();
  auto wq = p.wq.impl(), bq = p.bq.impl(), wk = p.wk.impl(), bk = p.bk.impl();
  auto wv = p.wv.impl(), bv = p.bv.impl(), wo = p.wo.impl(), bo = p.bo.impl();
  auto rb = opt.relative_pe ? p.rel_bias.impl() : nullptr;
  const std::size_t md = opt.max_distance;
  return record(
      "attention", x.shape(), std::move(out), inputs,
      [=](const std::vector<double>& g) {
        const std::size_t T = st->frames, H = st->heads, dk = st->head_dim;
        const auto iT = static_cast<Eigen::Index>(T);
        const auto idk = static_cast<Eigen::Index>(dk);
        auto G = cmap(g.data(), bt, D);
        if (auto* gw = grad_target(wo)) map(gw->data(), D, D).noalias() += st->o.transpose() * G;
        if (auto* gb = grad_target(bo)) row(gb->data(), D) += G.colwise().sum();
        RowMatrix dO = G * cmap(wo->data.data(), D, D).transpose();
        RowMatrix dQ = RowMatrix::Zero(static_cast<Eigen::Index>(bt), static_cast<Eigen::Index>(D));
        RowMatrix dK = dQ, dV = dQ;
        auto* grb = rb ? grad_target(rb) : nullptr;
        const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
        const std::size_t span = 2 * md + 1;
        const auto smd = static_cast<std::ptrdiff_t>(md);
        RowMatrix dP;
        for (std::size_t b = 0; b < st->batch; ++b) {
          const auto r0 = static_cast<Eigen::Index>(b * T);
          for (std::size_t h = 0; h < H; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * dk);
            auto P = cmap(st->probs.data() + (b * H + h) * T * T, T, T);
            auto dOh = dO.block(r0, c0, iT, idk);
            dV.block(r0, c0, iT, idk).noalias() += P.transpose() * dOh;
            dP.noalias() = dOh * st->v.block(r0, c0, iT, idk).transpose();
            // softmax backward: dS = P * (dP - rowsum(dP * P))
            Eigen::VectorXd dots = (dP.array() * P.array()).rowwise().sum();
            dP = (P.array() * (dP.colwise() - dots).array()).matrix();
            if (grb) {
              double* gr = grb->data() + h * span;
              for (std::size_t i = 0; i < T; ++i) {
                for (std::size_t j = 0; j < T; ++j) {
                  const std::ptrdiff_t off = std::clamp(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j), -smd, smd);
                  gr[off + smd] += dP(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                }
              }
            }
            dQ.block(r0, c0, iT, idk).noalias() += sc * dP * st->k.block(r0, c0, iT, idk);
            dK.block(r0, c0, iT, idk).noalias() += sc * dP.transpose() * st->q.block(r0, c0, iT, idk);
          }
        }
        auto grads_for = [&](const RowMatrix& d, const std::shared_ptr<detail::TensorImpl>& w,
                             const std::shared_ptr<detail::TensorImpl>& bias) {
          if (auto* gw = grad_target(w)) map(gw->data(), D, D).noalias() += st->xin.transpose() * d;
          if (auto* gb = grad_target(bias)) row(gb->data(), D) += d.colwise().sum();
        };
        grads_for(dQ, wq, bq);
        grads_for(dK, wk, bk);
        grads_for(dV, wv, bv);
        if (auto* gx = grad_target(xi)) {
          auto GX = map(gx->data(), bt, D);
          GX.noalias() += dQ * cmap(wq->data.data(), D, D).transpose();
          GX.noalias() += dK * cmap(wk->data.data(), D, D).transpose();
          GX.noalias() += dV * cmap(wv->data.data(), D, D).transpose();
        }
      });
}

// ---------------------------------------------------------------------------
// Squeeze-and-excitation

Tensor squeeze_excite_gates(const Tensor& x, const SqueezeExciteParams& p,
                            std::size_t squeeze_factor) {
  if (x.rank() != 3) throw DimensionError("squeeze_excite: input must be [B,T,C], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(2);
  if (squeeze_factor == 0 || c < squeeze_factor) {
    throw ConfigError("squeeze_excite: " + std::to_string(c) + " channels cannot be squeezed by " +
                      std::to_string(squeeze_factor));
  }
  const std::size_t hidden = c / squeeze_factor;
  require_shape(p.w1, {c, hidden}, "squeeze_excite", "w1");
  require_shape(p.w2, {hidden, c}, "squeeze_excite", "w2");
  Tensor pooled = mean_axis(x, 1);
  return sigmoid(linear(relu(linear(pooled, p.w1, p.b1)), p.w2, p.b2));
}

Tensor squeeze_excite(const Tensor& x, const SqueezeExciteParams& p, std::size_t squeeze_factor) {
  Tensor gates = squeeze_excite_gates(x, p, squeeze_factor);
  return mul(x, reshape(gates, {x.dim(0), 1, x.dim(2)}));
}

// ---------------------------------------------------------------------------
// Elman RNN

Tensor rnn_tanh(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b) {
  if (x.rank() != 3) throw DimensionError("rnn_tanh: input must be [B,T,C], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), frames = x.dim(1), cin = x.dim(2);
  if (wx.rank() != 2 || wx.dim(0) != cin) {
    throw DimensionError("rnn_tanh: input weight " + shape_str(wx.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  const std::size_t hid = wx.dim(1);
  require_shape(wh, {hid, hid}, "rnn_tanh", "recurrent weight");
  require_vector(b, hid, "rnn_tanh", "bias");
  const std::size_t bt = batch * frames;
  RowMatrix pre = cmap(x.data().data(), bt, cin) * cmap(wx.data().data(), cin, hid);
  pre.rowwise() += crow(b.data().data(), hid);
  auto hs = std::make_shared<std::vector<double>>(bt * hid);
  auto Wh = cmap(wh.data().data(), hid, hid);
  RowVector h(static_cast<Eigen::Index>(hid));
  for (std::size_t bb = 0; bb < batch; ++bb) {
    h.setZero();
    for (std::size_t t = 0; t < frames; ++t) {
      const auto r = static_cast<Eigen::Index>(bb * frames + t);
      RowVector a = pre.row(r) + h * Wh;
      h = a.array().tanh().matrix();
      row(hs->data() + static_cast<std::size_t>(r) * hid, hid) = h;
    }
  }
  std::vector<double> out(*hs);
  if (!recording({&x, &wx, &wh, &b})) return Tensor({batch, frames, hid}, std::move(out));
  auto xi = x.impl(), wxi = wx.impl(), whi = wh.impl(), bi = b.impl();
  return record("rnn_tanh", {batch, frames, hid}, std::move(out), {&x, &wx, &wh, &b},
                [=](const std::vector<double>& g) {
                  auto Wh = cmap(whi->data.data(), hid, hid);
                  RowMatrix dpre(static_cast<Eigen::Index>(bt), static_cast<Eigen::Index>(hid));
                  auto* gwh = grad_target(whi);
                  RowVector carry(static_cast<Eigen::Index>(hid));
                  for (std::size_t bb = 0; bb < batch; ++bb) {
                    carry.setZero();
                    for (std::size_t t = frames; t-- > 0;) {
                      const std::size_t r = bb * frames + t;
                      auto ht = crow(hs->data() + r * hid, hid);
                      RowVector dh = crow(g.data() + r * hid, hid) + carry;
                      RowVector da = (dh.array() * (1.0 - ht.array().square())).matrix();
                      dpre.row(static_cast<Eigen::Index>(r)) = da;
                      if (t > 0) {
                        auto hprev = crow(hs->data() + (r - 1) * hid, hid);
                        if (gwh) map(gwh->data(), hid, hid).noalias() += hprev.transpose() * da;
                      }
                      carry.noalias() = da * Wh.transpose();
                    }
                  }
                  if (auto* gw = grad_target(wxi)) {
                    map(gw->data(), cin, hid).noalias() += cmap(xi->data.data(), bt, cin).transpose() * dpre;
                  }
                  if (auto* gb = grad_target(bi)) row(gb->data(), hid) += dpre.colwise().sum();
                  if (auto* gx = grad_target(xi)) {
                    map(gx->data(), bt, cin).noalias() += dpre * cmap(wxi->data.data(), cin, hid).transpose();
                  }
                });
}

}  // namespace denoise::ad
