// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_METRICS_METRICS_H_
#define DENOISE_METRICS_METRICS_H_

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "denoise/conformer/conformer.h"
#include "denoise/corpus/corpus.h"

namespace denoise::metrics {

inline constexpr double kSiSdrCapDb = 100.0;

// Rational 5/8 polyphase resampler, 16 kHz -> 10 kHz. Kaiser-windowed sinc
// with its cutoff at 4.5 kHz.
std::vector<double> resample_16k_to_10k(std::span<const double> x);

// Short-time objective intelligibility on 16 kHz inputs. Raw value in
// [-1, 1]. Throws InputError on length mismatch, inputs under 0.5 s, or
// fewer than one 30-frame segment after silent-frame removal.
double stoi(std::span<const double> clean, std::span<const double> degraded);
// The same measure on signals already at 10 kHz.
double stoi_10k(std::vector<double> clean, std::vector<double> degraded);

// Scale-invariant SDR in dB without mean removal; capped to +/-kSiSdrCapDb.
// Throws InputError for an all-zero reference or unequal lengths.
double si_sdr(std::span<const double> clean, std::span<const double> estimate);

// Mean absolute difference of STFT magnitudes.
double spec_l1(std::span<const double> clean, std::span<const double> estimate);

struct EvalRow {
  std::string utt_id;
  corpus::NoiseClass noise_class = corpus::NoiseClass::kWhite;
  double snr_db = 0.0;
  double stoi = 0.0;  // raw
  double si_sdr_db = 0.0;
  double spec_l1 = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;  // manifest order
  double mean_stoi = 0.0;
  double mean_si_sdr_db = 0.0;
  double mean_spec_l1 = 0.0;

  void finalize();  // recomputes the means
  // Rows matching `keep`, with their own means.
  EvalResult subset(const std::function<bool(const EvalRow&)>& keep) const;
};

EvalRow score(const std::string& utt_id, std::span<const double> clean,
              std::span<const double> estimate);

// Row filter over the manifest; empty accepts every row.
using RowFilter = std::function<bool(const corpus::ManifestRow&)>;

// Enhances each selected row with `net` in inference mode and scores the
// noisy-phase reconstruction against the clean reference.
EvalResult evaluate(conformer::MaskNet& net, const corpus::Manifest& manifest,
                    const RowFilter& filter = {});

// Scores the unmodified noisy signal through the same analysis/synthesis
// path (an all-ones mask).
EvalResult evaluate_noisy(const corpus::Manifest& manifest, const RowFilter& filter = {});

// Header "utt_id,stoi,si_sdr_db,spec_l1"; STOI written as a percentage of
// the value clamped to [0, 1]; last line "MEAN,...".
std::string eval_csv(const EvalResult& r);
void write_eval_csv(const std::filesystem::path& path, const EvalResult& r);

}  // namespace denoise::metrics

#endif  // DENOISE_METRICS_METRICS_H_
