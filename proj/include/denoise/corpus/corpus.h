// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_CORPUS_CORPUS_H_
#define DENOISE_CORPUS_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/dsp/stft.h"

namespace denoise::corpus {

inline constexpr int kNumSpeakers = 10;
inline constexpr int kNumTrainSpeakers = 8;  // 0..7 train, 8..9 validation
inline constexpr int kNumUnits = 8;          // 0 is silence, 7 is a fricative
inline constexpr int kNumProsody = 4;
inline constexpr int kNumNoiseClasses = 4;
inline constexpr double kSnrGridDb[] = {0.0, 5.0, 10.0, 15.0};
// Mixing at this SNR leaves the clean signal untouched.
inline constexpr double kNoiseFree = std::numeric_limits<double>::infinity();

enum class NoiseClass { kWhite = 0, kPink = 1, kTonalEvent = 2, kModulatedBurst = 3 };

std::string_view noise_class_name(NoiseClass c);
NoiseClass parse_noise_class(std::string_view name);

struct UnitSegment {
  int unit = 0;
  std::size_t begin = 0;  // samples, half-open
  std::size_t end = 0;
};

struct CleanSpec {
  int speaker_id = 0;
  int prosody_class = 0;
  std::size_t samples = 32000;  // 1 to 4 s at 16 kHz
  std::uint64_t seed = 0;
  std::vector<UnitSegment> content;
};

// Draws prosody and unit sequence from (speaker_id, seed, samples).
CleanSpec make_clean_spec(int speaker_id, std::uint64_t seed, std::size_t samples);
std::size_t samples_for_duration(double duration_s);

struct CleanSignal {
  dsp::Waveform wave;
  std::vector<int> frame_units;  // one per STFT frame of the default config
};

CleanSignal synth_clean(const CleanSpec& spec);

// Unit label at each analysis frame's centre sample.
std::vector<int> frame_labels(const CleanSpec& spec, std::size_t samples,
                              const dsp::StftConfig& cfg = {});

std::vector<double> synth_noise(NoiseClass c, std::size_t samples, std::uint64_t seed);

struct MixSpec {
  CleanSpec clean;
  NoiseClass noise_class = NoiseClass::kWhite;
  double snr_db = 5.0;  // kNoiseFree for no noise
  std::uint64_t seed = 0;
};

struct Mixture {
  dsp::Waveform noisy;
  dsp::Waveform clean;
  std::vector<double> noise;  // as added: noisy - clean
  double noise_gain = 0.0;
  double rescale = 1.0;  // < 1 when the sum would have clipped
  std::vector<int> frame_units;
};

Mixture mix(const MixSpec& spec);

struct ManifestRow {
  std::filesystem::path noisy_path;
  std::filesystem::path clean_path;
  int speaker_id = 0;
  NoiseClass noise_class = NoiseClass::kWhite;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestRow> rows;
};

// Tab-separated rows without a header. Relative paths are resolved against
// the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

struct CorpusOptions {
  std::size_t train_size = 500;
  std::size_t val_size = 50;
  std::uint64_t seed = 1;
  double duration_s = 2.0;
};

struct CorpusPaths {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
};

CorpusPaths build_corpus(const CorpusOptions& opt, const std::filesystem::path& out_dir);

// Per-row labels, regenerated from the row's seed and speaker.
struct UtteranceLabels {
  int speaker_id = 0;
  int prosody_class = 0;
  NoiseClass noise_class = NoiseClass::kWhite;
  std::vector<int> frame_units;
};

struct Utterance {
  dsp::Waveform noisy;
  dsp::Waveform clean;
  UtteranceLabels labels;
};

Utterance load_utterance(const Manifest& m, std::size_t row);

// FNV-1a over the manifest file bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace denoise::corpus

#endif  // DENOISE_CORPUS_CORPUS_H_
