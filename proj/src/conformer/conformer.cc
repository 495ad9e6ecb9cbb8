// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/conformer/conformer.h"

#include <string>

#include "denoise/autodiff/checkpoint.h"
#include "denoise/autodiff/init.h"
#include "denoise/autodiff/ops.h"
#include "denoise/errors.h"

namespace denoise::conformer {

using ad::Tensor;

namespace {

ad::LayerNormParams make_layer_norm(ad::Initializer& init, std::size_t c) {
  return {init.ones({c}), init.zeros({c})};
}

ad::BatchNormParams make_batch_norm(ad::Initializer& init, std::size_t c) {
  return {init.ones({c}), init.zeros({c}), Tensor::zeros({c}), Tensor::full({c}, 1.0)};
}

// Inference with utterance statistics normalizes like training does but
// leaves the running statistics alone. A single frame has no statistics and
// falls back to the running ones.
Tensor norm(const Tensor& x, ad::BatchNormParams& p, const ConformerConfig& cfg, bool training) {
  const bool one_row = x.size() < 2 * x.dim(x.rank() - 1);
  if (training || !cfg.utterance_norm || one_row) return ad::batch_norm(x, p, training);
  ad::BatchNormParams local = p;
  local.running_mean = p.running_mean.clone();
  local.running_var = p.running_var.clone();
  return ad::batch_norm(x, local, true);
}

FeedForward make_ffn(ad::Initializer& init, std::size_t d, std::size_t e) {
  FeedForward f;
  f.norm = make_layer_norm(init, d);
  f.w1 = init.glorot({d, e * d}, d, e * d);
  f.b1 = init.zeros({e * d});
  f.w2 = init.glorot({e * d, d}, e * d, d);
  f.b2 = init.zeros({d});
  return f;
}

ad::AttentionParams make_attention(ad::Initializer& init, const ConformerConfig& cfg) {
  const std::size_t d = cfg.attention_dim;
  ad::AttentionParams a;
  a.wq = init.glorot({d, d}, d, d);
  a.bq = init.zeros({d});
  a.wk = init.glorot({d, d}, d, d);
  a.bk = init.zeros({d});
  a.wv = init.glorot({d, d}, d, d);
  a.bv = init.zeros({d});
  a.wo = init.glorot({d, d}, d, d);
  a.bo = init.zeros({d});
  if (cfg.use_relative_pe) a.rel_bias = init.zeros({cfg.heads, 2 * cfg.max_rel_distance + 1});
  return a;
}

ConvModule make_conv(ad::Initializer& init, const ConformerConfig& cfg) {
  const std::size_t d = cfg.attention_dim, k = cfg.conv_kernel, h = d / cfg.se_factor;
  ConvModule m;
  m.norm = make_layer_norm(init, d);
  m.pw1_w = init.glorot({d, 2 * d}, d, 2 * d);
  m.pw1_b = init.zeros({2 * d});
  m.dw_w = init.glorot({k, d}, k, k);
  m.bn = make_batch_norm(init, d);
  m.se = {init.glorot({d, h}, d, h), init.zeros({h}), init.glorot({h, d}, h, d), init.zeros({d})};
  m.pw2_w = init.glorot({d, d}, d, d);
  m.pw2_b = init.zeros({d});
  return m;
}

ad::Activation act(const ConformerConfig& cfg) {
  return cfg.use_swish ? ad::Activation::kSwish : ad::Activation::kRelu;
}

Tensor ffn_forward(const Tensor& x, const FeedForward& f, const ConformerConfig& cfg) {
  Tensor h = ad::layer_norm(x, f.norm);
  h = ad::activation(ad::linear(h, f.w1, f.b1), act(cfg));
  return ad::linear(h, f.w2, f.b2);
}

Tensor conv_forward(const Tensor& x, ConvModule& m, const ConformerConfig& cfg, bool training) {
  Tensor h = ad::layer_norm(x, m.norm);
  h = ad::glu_lastdim(ad::conv1d(h, m.pw1_w, m.pw1_b, ad::ConvMode::kPointwise));
  h = ad::conv1d(h, m.dw_w, Tensor(), ad::ConvMode::kDepthwise);
  h = norm(h, m.bn, cfg, training);
  h = ad::activation(h, act(cfg));
  h = ad::squeeze_excite(h, m.se, cfg.se_factor);
  return ad::conv1d(h, m.pw2_w, m.pw2_b, ad::ConvMode::kPointwise);
}

void add_ln(ad::NamedTensors& out, const std::string& p, const ad::LayerNormParams& n) {
  out.emplace_back(p + ".gamma", n.gamma);
  out.emplace_back(p + ".beta", n.beta);
}

void add_ffn(ad::NamedTensors& out, const std::string& p, const FeedForward& f) {
  add_ln(out, p + ".norm", f.norm);
  out.emplace_back(p + ".w1", f.w1);
  out.emplace_back(p + ".b1", f.b1);
  out.emplace_back(p + ".w2", f.w2);
  out.emplace_back(p + ".b2", f.b2);
}

void check_dim(const Tensor& x, std::size_t axis, std::size_t want, const char* what) {
  if (x.rank() != 3 || x.dim(axis) != want) {
    throw ContractError(std::string(what) + ": expected last dim " + std::to_string(want) +
                        " on a [B,T,.] input, got " + ad::shape_str(x.shape()));
  }
}

}  // namespace

void ConformerConfig::validate() const {
  if (attention_dim == 0 || num_blocks == 0 || heads == 0 || ffn_expansion == 0) {
    throw ConfigError("conformer: attention_dim, num_blocks, heads and ffn_expansion must be positive");
  }
  if (attention_dim % heads != 0) {
    throw ConfigError("conformer: attention_dim " + std::to_string(attention_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (conv_kernel % 2 == 0) {
    throw ConfigError("conformer: conv_kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (se_factor == 0 || attention_dim % se_factor != 0) {
    throw ConfigError("conformer: se_factor " + std::to_string(se_factor) +
                      " does not divide conv-module channels " + std::to_string(attention_dim));
  }
}

void to_json(nlohmann::json& j, const ConformerConfig& c) {
  j = {{"attention_dim", c.attention_dim}, {"num_blocks", c.num_blocks},
       {"heads", c.heads},                 {"conv_kernel", c.conv_kernel},
       {"se_factor", c.se_factor},         {"ffn_expansion", c.ffn_expansion},
       {"max_rel_distance", c.max_rel_distance}, {"use_swish", c.use_swish},
       {"use_conv_module", c.use_conv_module},   {"use_macaron", c.use_macaron},
       {"use_relative_pe", c.use_relative_pe},   {"utterance_norm", c.utterance_norm}};
}

void from_json(const nlohmann::json& j, ConformerConfig& c) {
  ConformerConfig d;
  c.attention_dim = j.value("attention_dim", d.attention_dim);
  c.num_blocks = j.value("num_blocks", d.num_blocks);
  c.heads = j.value("heads", d.heads);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
  c.se_factor = j.value("se_factor", d.se_factor);
  c.ffn_expansion = j.value("ffn_expansion", d.ffn_expansion);
  c.max_rel_distance = j.value("max_rel_distance", d.max_rel_distance);
  c.use_swish = j.value("use_swish", d.use_swish);
  c.use_conv_module = j.value("use_conv_module", d.use_conv_module);
  c.use_macaron = j.value("use_macaron", d.use_macaron);
  c.use_relative_pe = j.value("use_relative_pe", d.use_relative_pe);
  c.utterance_norm = j.value("utterance_norm", d.utterance_norm);
}

ad::NamedTensors MaskNet::parameters() const {
  ad::NamedTensors out;
  out.emplace_back("front.bn.gamma", front_bn.gamma);
  out.emplace_back("front.bn.beta", front_bn.beta);
  out.emplace_back("front.w", front_w);
  out.emplace_back("front.b", front_b);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "block" + std::to_string(i);
    add_ffn(out, p + ".ffn1", b.ffn1);
    add_ln(out, p + ".attn.norm", b.attn_norm);
    const auto& a = b.attn;
    for (const auto& [n, t] : {std::pair{"wq", a.wq}, {"bq", a.bq}, {"wk", a.wk}, {"bk", a.bk},
                               {"wv", a.wv}, {"bv", a.bv}, {"wo", a.wo}, {"bo", a.bo}}) {
      out.emplace_back(p + ".attn." + n, t);
    }
    if (a.rel_bias.defined()) out.emplace_back(p + ".attn.rel_bias", a.rel_bias);
    if (b.conv) {
      const auto& c = *b.conv;
      add_ln(out, p + ".conv.norm", c.norm);
      out.emplace_back(p + ".conv.pw1_w", c.pw1_w);
      out.emplace_back(p + ".conv.pw1_b", c.pw1_b);
      out.emplace_back(p + ".conv.dw_w", c.dw_w);
      out.emplace_back(p + ".conv.bn.gamma", c.bn.gamma);
      out.emplace_back(p + ".conv.bn.beta", c.bn.beta);
      out.emplace_back(p + ".conv.se.w1", c.se.w1);
      out.emplace_back(p + ".conv.se.b1", c.se.b1);
      out.emplace_back(p + ".conv.se.w2", c.se.w2);
      out.emplace_back(p + ".conv.se.b2", c.se.b2);
      out.emplace_back(p + ".conv.pw2_w", c.pw2_w);
      out.emplace_back(p + ".conv.pw2_b", c.pw2_b);
    }
    if (b.ffn2) add_ffn(out, p + ".ffn2", *b.ffn2);
    add_ln(out, p + ".final_norm", b.final_norm);
  }
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

ad::NamedTensors MaskNet::buffers() const {
  ad::NamedTensors out;
  out.emplace_back("front.bn.running_mean", front_bn.running_mean);
  out.emplace_back("front.bn.running_var", front_bn.running_var);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!blocks[i].conv) continue;
    const std::string p = "block" + std::to_string(i) + ".conv.bn";
    out.emplace_back(p + ".running_mean", blocks[i].conv->bn.running_mean);
    out.emplace_back(p + ".running_var", blocks[i].conv->bn.running_var);
  }
  return out;
}

std::size_t MaskNet::parameter_count() const { return ad::parameter_count(parameters()); }

MaskNet build(const ConformerConfig& cfg, std::size_t f_bins, std::uint64_t seed) {
  cfg.validate();
  if (f_bins == 0) throw ConfigError("conformer: f_bins must be positive");
  ad::Initializer init(seed);
  const std::size_t d = cfg.attention_dim;
  MaskNet net;
  net.config = cfg;
  net.f_bins = f_bins;
  net.front_bn = make_batch_norm(init, f_bins);
  net.front_w = init.glorot({f_bins, d}, f_bins, d);
  net.front_b = init.zeros({d});
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    ConformerBlock b;
    b.ffn1 = make_ffn(init, d, cfg.ffn_expansion);
    b.attn_norm = make_layer_norm(init, d);
    b.attn = make_attention(init, cfg);
    if (cfg.use_conv_module) b.conv = make_conv(init, cfg);
    if (cfg.use_macaron) b.ffn2 = make_ffn(init, d, cfg.ffn_expansion);
    b.final_norm = make_layer_norm(init, d);
    net.blocks.push_back(std::move(b));
  }
  net.head_w = init.glorot({d, f_bins}, d, f_bins);
  net.head_b = init.zeros({f_bins});
  return net;
}

Tensor conformer_block_forward(const Tensor& x, ConformerBlock& block, const ConformerConfig& cfg,
                               bool training) {
  check_dim(x, 2, cfg.attention_dim, "conformer_block_forward");
  Tensor h = x;
  // Without macaron the single feed-forward takes a full step after the
  // convolution module.
  if (cfg.use_macaron) h = ad::add(h, ad::scale(ffn_forward(h, block.ffn1, cfg), 0.5));
  ad::AttentionOptions opt{cfg.heads, cfg.use_relative_pe, cfg.max_rel_distance};
  h = ad::add(h, ad::attention(ad::layer_norm(h, block.attn_norm), block.attn, opt));
  if (block.conv) h = ad::add(h, conv_forward(h, *block.conv, cfg, training));
  if (cfg.use_macaron) {
    h = ad::add(h, ad::scale(ffn_forward(h, *block.ffn2, cfg), 0.5));
  } else {
    h = ad::add(h, ffn_forward(h, block.ffn1, cfg));
  }
  return ad::layer_norm(h, block.final_norm);
}

Tensor predict_mask(MaskNet& net, const Tensor& noisy_mag, bool training) {
  check_dim(noisy_mag, 2, net.f_bins, "predict_mask");
  Tensor h = norm(noisy_mag, net.front_bn, net.config, training);
  h = ad::linear(h, net.front_w, net.front_b);
  for (auto& b : net.blocks) h = conformer_block_forward(h, b, net.config, training);
  return ad::sigmoid(ad::linear(h, net.head_w, net.head_b));
}

Enhanced apply_mask(const Tensor& mask, const dsp::Spectrogram& noisy) {
  const ad::Shape tf{noisy.frames(), noisy.bins()};
  Tensor m = mask.rank() == 3 && mask.dim(0) == 1 ? ad::reshape(mask, tf) : mask;
  if (m.shape() != tf) {
    throw ContractError("apply_mask: mask " + ad::shape_str(mask.shape()) + " vs spectrogram " +
                        ad::shape_str(tf));
  }
  Tensor mag = ad::mul(m, noisy.magnitude);
  Tensor wav = dsp::reconstruct_with_noisy_phase(mag, noisy);
  return {mag, wav};
}

Enhanced enhance(MaskNet& net, const dsp::Spectrogram& noisy, bool training) {
  Tensor x = ad::reshape(noisy.magnitude, {1, noisy.frames(), noisy.bins()});
  return apply_mask(predict_mask(net, x, training), noisy);
}

void save_masknet(const std::filesystem::path& path, const MaskNet& net) {
  ad::Checkpoint c;
  c.meta = {{"kind", "masknet"}, {"config", net.config}, {"f_bins", net.f_bins}};
  c.tensors = net.parameters();
  for (auto& b : net.buffers()) c.tensors.push_back(b);
  ad::save_checkpoint(path, c);
}

MaskNet load_masknet(const std::filesystem::path& path) {
  auto c = ad::load_checkpoint(path);
  if (c.meta.value("kind", "") != "masknet") {
    throw IoError("checkpoint is not a mask network: " + path.string());
  }
  MaskNet net = build(c.meta.at("config").get<ConformerConfig>(), c.meta.at("f_bins").get<std::size_t>(), 0);
  auto params = net.parameters();
  auto bufs = net.buffers();
  ad::restore_tensors(c, params);
  ad::restore_tensors(c, bufs);
  return net;
}

}  // namespace denoise::conformer
