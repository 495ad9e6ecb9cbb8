// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/dsp/stft.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "denoise/autodiff/tape.h"
#include "denoise/errors.h"

namespace denoise::dsp {

namespace {

using Complex = std::complex<double>;

struct RealFft {
  explicit RealFft(std::size_t n) : n(n) { fft.SetFlag(Eigen::FFT<double>::HalfSpectrum); }

  void forward(const std::vector<double>& in, std::vector<Complex>& out) { fft.fwd(out, in); }
  // Scaled by 1/n.
  void inverse(const std::vector<Complex>& in, std::vector<double>& out) {
    fft.inv(out, in, static_cast<Eigen::Index>(n));
  }

  std::size_t n;
  Eigen::FFT<double> fft;
};

void validate(const StftConfig& cfg) {
  if (cfg.frame_len < 4 || cfg.frame_len % 2 != 0) {
    throw ConfigError("stft: frame_len must be even and at least 4, got " +
                      std::to_string(cfg.frame_len));
  }
  if (cfg.hop == 0 || cfg.hop > cfg.frame_len) {
    throw ConfigError("stft: hop " + std::to_string(cfg.hop) + " outside [1, frame_len=" +
                      std::to_string(cfg.frame_len) + "]");
  }
}

// Overlap-added squared window in the steady state.
double ola_gain(const StftConfig& cfg) {
  const auto w = hann_window(cfg.frame_len);
  double s = 0;
  for (double v : w) s += v * v;
  return s / static_cast<double>(cfg.hop);
}

std::vector<double> ola_denominator(const StftConfig& cfg, std::size_t frames) {
  const auto w = hann_window(cfg.frame_len);
  std::vector<double> den(cfg.samples_for(frames), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t n = 0; n < cfg.frame_len; ++n) den[t * cfg.hop + n] += w[n] * w[n];
  }
  const double floor = 0.5 * ola_gain(cfg);
  for (double& d : den) d = std::max(d, floor);
  return den;
}

void check_spectrogram(const Spectrogram& s) {
  if (s.magnitude.rank() != 2 || s.bins() != s.config.bins()) {
    throw ContractError("spectrogram magnitude " + ad::shape_str(s.magnitude.shape()) +
                        " does not match frame_len " + std::to_string(s.config.frame_len));
  }
  if (s.phase.size() != s.magnitude.size()) {
    throw ContractError("spectrogram phase has " + std::to_string(s.phase.size()) +
                        " values, magnitude " + std::to_string(s.magnitude.size()));
  }
  if (s.frames() == 0) throw ContractError("spectrogram has no frames");
}

// Weighted overlap-add of mag * exp(i*phase), divided by the squared window sum.
std::vector<double> synthesize(std::span<const double> mag, const std::vector<double>& phase,
                               const StftConfig& cfg, std::size_t frames,
                               const std::vector<double>& den) {
  const std::size_t F = cfg.bins(), N = cfg.frame_len;
  const auto w = hann_window(N);
  RealFft fft(N);
  std::vector<Complex> spec(F);
  std::vector<double> frame;
  std::vector<double> out(cfg.samples_for(frames), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < F; ++k) spec[k] = std::polar(mag[t * F + k], phase[t * F + k]);
    fft.inverse(spec, frame);
    for (std::size_t n = 0; n < N; ++n) out[t * cfg.hop + n] += w[n] * frame[n];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= den[i];
  return out;
}

}  // namespace

std::size_t StftConfig::frames_for(std::size_t samples) const {
  if (samples < frame_len) return 0;
  return (samples - frame_len) / hop + 1;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

void check_cola(const StftConfig& cfg) {
  validate(cfg);
  const auto w = hann_window(cfg.frame_len);
  std::vector<double> sums(cfg.hop, 0.0);
  for (std::size_t n = 0; n < cfg.frame_len; ++n) sums[n % cfg.hop] += w[n] * w[n];
  const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
  if (*hi - *lo > 1e-10 * *hi) {
    throw ConfigError("istft: squared Hann window of length " + std::to_string(cfg.frame_len) +
                      " does not overlap-add to a constant at hop " + std::to_string(cfg.hop));
  }
}

SampleRange interior(const StftConfig& cfg, std::size_t frames) {
  const std::size_t begin = cfg.frame_len - cfg.hop;
  const std::size_t end = frames * cfg.hop;
  return end > begin ? SampleRange{begin, end} : SampleRange{begin, begin};
}

Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  validate(cfg);
  if (x.size() < cfg.frame_len) {
    throw InputError("stft: signal of " + std::to_string(x.size()) +
                     " samples is shorter than one frame (" + std::to_string(cfg.frame_len) + ")");
  }
  const std::size_t T = cfg.frames_for(x.size()), F = cfg.bins(), N = cfg.frame_len;
  const auto w = hann_window(N);
  RealFft fft(N);
  std::vector<double> frame(N);
  std::vector<Complex> spec;
  std::vector<double> mag(T * F), phase(T * F);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) frame[n] = x[t * cfg.hop + n] * w[n];
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < F; ++k) {
      mag[t * F + k] = std::abs(spec[k]);
      phase[t * F + k] = std::arg(spec[k]);
    }
  }
  return Spectrogram{ad::Tensor({T, F}, std::move(mag)), std::move(phase), cfg};
}

Waveform istft(const Spectrogram& s) {
  check_cola(s.config);
  check_spectrogram(s);
  const auto den = ola_denominator(s.config, s.frames());
  return Waveform{synthesize(s.magnitude.data(), s.phase, s.config, s.frames(), den), kSampleRate};
}

ad::Tensor reconstruct_with_noisy_phase(const ad::Tensor& enhanced_mag, const Spectrogram& noisy) {
  check_cola(noisy.config);
  check_spectrogram(noisy);
  if (enhanced_mag.shape() != noisy.magnitude.shape()) {
    throw ContractError("reconstruct_with_noisy_phase: magnitude " +
                        ad::shape_str(enhanced_mag.shape()) + " vs noisy phase " +
                        ad::shape_str(noisy.magnitude.shape()));
  }
  const StftConfig cfg = noisy.config;
  const std::size_t T = noisy.frames();
  auto den = std::make_shared<std::vector<double>>(ola_denominator(cfg, T));
  auto out = synthesize(enhanced_mag.data(), noisy.phase, cfg, T, *den);
  const ad::Shape shape{out.size()};
  if (!ad::detail::recording({&enhanced_mag})) return ad::Tensor(shape, std::move(out));
  auto mi = enhanced_mag.impl();
  auto phase = std::make_shared<std::vector<double>>(noisy.phase);
  return ad::detail::record(
      "reconstruct_with_noisy_phase", shape, std::move(out), {&enhanced_mag},
      [mi, phase, den, cfg, T](const std::vector<double>& g) {
        auto* gm = ad::detail::grad_target(mi);
        if (!gm) return;
        const std::size_t F = cfg.bins(), N = cfg.frame_len;
        const auto w = hann_window(N);
        const double invn = 1.0 / static_cast<double>(N);
        RealFft fft(N);
        std::vector<double> gt(N);
        std::vector<Complex> G;
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t i = t * cfg.hop + n;
            gt[n] = g[i] * w[n] / (*den)[i];
          }
          fft.forward(gt, G);
          for (std::size_t k = 0; k < F; ++k) {
            const double c = (k == 0 || k == F - 1) ? 1.0 : 2.0;
            const double ph = (*phase)[t * F + k];
            (*gm)[t * F + k] += c * invn * (std::cos(ph) * G[k].real() + std::sin(ph) * G[k].imag());
          }
        }
      });
}

Waveform to_waveform(const ad::Tensor& samples) {
  return Waveform{std::vector<double>(samples.data().begin(), samples.data().end()), kSampleRate};
}

double spectral_energy(const Spectrogram& s) {
  const std::size_t F = s.bins();
  const auto m = s.magnitude.data();
  double e = 0;
  for (std::size_t t = 0; t < s.frames(); ++t) {
    for (std::size_t k = 0; k < F; ++k) {
      const double c = (k == 0 || k == F - 1) ? 1.0 : 2.0;
      e += c * m[t * F + k] * m[t * F + k];
    }
  }
  return e / (static_cast<double>(s.config.frame_len) * ola_gain(s.config));
}

}  // namespace denoise::dsp
