// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_DSP_WAV_H_
#define DENOISE_DSP_WAV_H_

#include <filesystem>

#include "denoise/dsp/stft.h"

namespace denoise::dsp {

// RIFF/WAVE, PCM, 16-bit signed little-endian, mono, 16 kHz. Anything else
// is rejected with an InputError naming the file and the offending field.
Waveform read_wav(const std::filesystem::path& path);

// Samples are clipped to [-1, 1] and rounded to the nearest 16-bit code.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace denoise::dsp

#endif  // DENOISE_DSP_WAV_H_
