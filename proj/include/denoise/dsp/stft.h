// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_DSP_STFT_H_
#define DENOISE_DSP_STFT_H_

#include <cstddef>
#include <span>
#include <vector>

#include "denoise/autodiff/tensor.h"

namespace denoise::dsp {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

// Periodic Hann analysis and synthesis window.
struct StftConfig {
  std::size_t frame_len = 512;
  std::size_t hop = 128;

  std::size_t bins() const { return frame_len / 2 + 1; }
  // Number of full frames; no padding at either end.
  std::size_t frames_for(std::size_t samples) const;
  // Length of the overlap-add output for `frames` frames.
  std::size_t samples_for(std::size_t frames) const { return (frames - 1) * hop + frame_len; }
};

struct Spectrogram {
  ad::Tensor magnitude;        // [frames, bins], constant
  std::vector<double> phase;   // row-major [frames, bins], radians
  StftConfig config;

  std::size_t frames() const { return magnitude.dim(0); }
  std::size_t bins() const { return magnitude.dim(1); }
};

std::vector<double> hann_window(std::size_t n);

Spectrogram stft(std::span<const double> x, const StftConfig& cfg = {});
inline Spectrogram stft(const Waveform& w, const StftConfig& cfg = {}) {
  return stft(std::span<const double>(w.samples), cfg);
}

// Weighted overlap-add with squared-window normalization. Samples covered by
// frame_len/hop frames are exact; the first and last frame_len - hop samples
// are attenuated.
Waveform istft(const Spectrogram& s);

// istft of (enhanced_mag, noisy.phase), differentiable in enhanced_mag.
// Returns a [samples] tensor.
ad::Tensor reconstruct_with_noisy_phase(const ad::Tensor& enhanced_mag, const Spectrogram& noisy);

Waveform to_waveform(const ad::Tensor& samples);

// Throws ConfigError when the squared window does not overlap-add to a
// constant at this hop.
void check_cola(const StftConfig& cfg);

// Half-open [begin, end) range of output samples reconstructed exactly.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
SampleRange interior(const StftConfig& cfg, std::size_t frames);

// Sum over frames and bins of |X|^2 weighted for the one-sided spectrum,
// divided by frame_len and by the overlap-added squared window. Tracks the
// time-domain energy of the analysed samples.
double spectral_energy(const Spectrogram& s);

}  // namespace denoise::dsp

#endif  // DENOISE_DSP_STFT_H_
