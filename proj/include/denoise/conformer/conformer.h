// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_CONFORMER_CONFORMER_H_
#define DENOISE_CONFORMER_CONFORMER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "denoise/autodiff/nn.h"
#include "denoise/autodiff/tensor.h"
#include "denoise/dsp/stft.h"

namespace denoise::conformer {

struct ConformerConfig {
  std::size_t attention_dim = 240;
  std::size_t num_blocks = 4;
  std::size_t heads = 4;
  std::size_t conv_kernel = 15;
  std::size_t se_factor = 8;
  std::size_t ffn_expansion = 4;
  std::size_t max_rel_distance = 64;
  bool use_swish = true;
  bool use_conv_module = true;
  bool use_macaron = true;
  bool use_relative_pe = true;
  // Batch norm at inference uses the statistics of the utterance itself, as
  // in training; false switches to the running statistics.
  bool utterance_norm = true;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const ConformerConfig& c);
void from_json(const nlohmann::json& j, ConformerConfig& c);

struct FeedForward {
  ad::LayerNormParams norm;
  ad::Tensor w1, b1;  // [D, eD], [eD]
  ad::Tensor w2, b2;  // [eD, D], [D]
};

struct ConvModule {
  ad::LayerNormParams norm;
  ad::Tensor pw1_w, pw1_b;  // [D, 2D] ahead of GLU
  ad::Tensor dw_w;          // [K, D], no bias (batch norm follows)
  ad::BatchNormParams bn;
  ad::SqueezeExciteParams se;
  ad::Tensor pw2_w, pw2_b;  // [D, D]
};

struct ConformerBlock {
  FeedForward ffn1;
  std::optional<FeedForward> ffn2;  // present with macaron
  ad::LayerNormParams attn_norm;
  ad::AttentionParams attn;
  std::optional<ConvModule> conv;
  ad::LayerNormParams final_norm;
};

struct MaskNet {
  ConformerConfig config;
  std::size_t f_bins = 0;
  ad::BatchNormParams front_bn;
  ad::Tensor front_w, front_b;  // [F, D]
  std::vector<ConformerBlock> blocks;
  ad::Tensor head_w, head_b;  // [D, F]

  // Trainable parameters in a fixed order with stable names.
  ad::NamedTensors parameters() const;
  // Batch-norm running statistics.
  ad::NamedTensors buffers() const;
  std::size_t parameter_count() const;
};

MaskNet build(const ConformerConfig& cfg, std::size_t f_bins, std::uint64_t seed);

// x[B, T, D]. `training` records batch statistics into the running estimates.
ad::Tensor conformer_block_forward(const ad::Tensor& x, ConformerBlock& block,
                                   const ConformerConfig& cfg, bool training);

// noisy_mag[B, T, F] -> mask in (0, 1) of the same shape.
ad::Tensor predict_mask(MaskNet& net, const ad::Tensor& noisy_mag, bool training = false);

struct Enhanced {
  ad::Tensor magnitude;  // [T, F]
  ad::Tensor waveform;   // [samples]
};

// mask[T, F] (or [1, T, F]) applied to the noisy magnitude, then noisy-phase
// synthesis.
Enhanced apply_mask(const ad::Tensor& mask, const dsp::Spectrogram& noisy);
Enhanced enhance(MaskNet& net, const dsp::Spectrogram& noisy, bool training = false);

void save_masknet(const std::filesystem::path& path, const MaskNet& net);
MaskNet load_masknet(const std::filesystem::path& path);

}  // namespace denoise::conformer

#endif  // DENOISE_CONFORMER_CONFORMER_H_
