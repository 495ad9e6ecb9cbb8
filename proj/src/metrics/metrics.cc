// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/metrics/metrics.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "denoise/autodiff/tape.h"
#include "denoise/errors.h"

namespace denoise::metrics {

namespace {

constexpr std::size_t kUp = 5, kDown = 8;
constexpr double kCutoffHz = 4500.0;
constexpr std::size_t kHalfTaps = 320;
constexpr double kKaiserBeta = 8.0;

constexpr double kStoiRate = 10000.0;
constexpr std::size_t kFrame = 256;
constexpr std::size_t kFft = 512;
constexpr std::size_t kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr std::size_t kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

const std::vector<double>& resampling_filter() {
  static const std::vector<double> h = [] {
    const std::size_t len = 2 * kHalfTaps + 1;
    const double rate = dsp::kSampleRate * static_cast<double>(kUp);
    const double fc = kCutoffHz / rate;
    std::vector<double> f(len);
    double sum = 0;
    for (std::size_t k = 0; k < len; ++k) {
      const double t = static_cast<double>(k) - static_cast<double>(kHalfTaps);
      const double arg = 2.0 * fc * t;
      const double sinc = t == 0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double r = t / static_cast<double>(kHalfTaps);
      const double win = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
                         std::cyl_bessel_i(0.0, kKaiserBeta);
      f[k] = 2.0 * fc * sinc * win;
      sum += f[k];
    }
    for (double& v : f) v *= static_cast<double>(kUp) / sum;
    return f;
  }();
  return h;
}

// np.hanning(n + 2)[1:-1]
std::vector<double> stoi_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  }
  return w;
}

// Drops frames more than kDynRange dB below the loudest clean frame and
// overlap-adds the survivors.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = stoi_window(kFrame);
  const std::size_t hop = kFrame / 2;
  // frame starts in [0, size - kFrame), as in the reference implementation
  const std::size_t frames = x.size() > kFrame ? (x.size() - kFrame + hop - 1) / hop : 0;
  if (frames == 0) {
    x.clear();
    y.clear();
    return;
  }
  std::vector<double> energy(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double s = 0;
    for (std::size_t n = 0; n < kFrame; ++n) s += std::pow(w[n] * x[t * hop + n], 2);
    energy[t] = 20.0 * std::log10(std::sqrt(s) + kEps);
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < frames; ++t) {
    if (top - kDynRange - energy[t] < 0) keep.push_back(t);
  }
  const std::size_t out_len = (keep.size() - 1) * hop + kFrame;
  std::vector<double> xo(out_len, 0.0), yo(out_len, 0.0);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t n = 0; n < kFrame; ++n) {
      xo[i * hop + n] += w[n] * x[keep[i] * hop + n];
      yo[i * hop + n] += w[n] * y[keep[i] * hop + n];
    }
  }
  x = std::move(xo);
  y = std::move(yo);
}

// One-third octave band envelopes, [bands][frames].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  static const auto obm = [] {
    std::vector<std::pair<std::size_t, std::size_t>> bands(kBands);
    const std::size_t bins = kFft / 2 + 1;
    auto nearest = [&](double f) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < bins; ++b) {
        const double fb = kStoiRate * static_cast<double>(b) / static_cast<double>(kFft);
        if ((fb - f) * (fb - f) < bd) {
          bd = (fb - f) * (fb - f);
          best = b;
        }
      }
      return best;
    };
    for (std::size_t k = 0; k < kBands; ++k) {
      const double kk = static_cast<double>(k);
      bands[k] = {nearest(kMinFreq * std::pow(2.0, (2 * kk - 1) / 6)),
                  nearest(kMinFreq * std::pow(2.0, (2 * kk + 1) / 6))};
    }
    return bands;
  }();
  const auto w = stoi_window(kFrame);
  const std::size_t hop = kFrame / 2;
  std::size_t frames = 0;
  for (std::size_t i = 0; i + kFrame < x.size(); i += hop) ++frames;
  std::vector<std::vector<double>> env(kBands, std::vector<double>(frames));
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(kFft);
  std::vector<std::complex<double>> spec;
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t n = 0; n < kFrame; ++n) buf[n] = w[n] * x[t * hop + n];
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < kBands; ++k) {
      double s = 0;
      for (std::size_t b = obm[k].first; b < obm[k].second; ++b) s += std::norm(spec[b]);
      env[k][t] = std::sqrt(s);
    }
  }
  return env;
}

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw InputError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<double> resample_16k_to_10k(std::span<const double> x) {
  const auto& h = resampling_filter();
  const std::size_t len = h.size();
  const std::size_t out = (x.size() * kUp + kDown - 1) / kDown;
  std::vector<double> y(out, 0.0);
  for (std::size_t m = 0; m < out; ++m) {
    // position on the upsampled grid aligned with the filter centre
    const auto p = static_cast<std::ptrdiff_t>(m * kDown + kHalfTaps);
    std::ptrdiff_t j_lo = (p - static_cast<std::ptrdiff_t>(len) + 1 + static_cast<std::ptrdiff_t>(kUp) - 1) /
                          static_cast<std::ptrdiff_t>(kUp);
    j_lo = std::max<std::ptrdiff_t>(j_lo, 0);
    const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(p / static_cast<std::ptrdiff_t>(kUp),
                                                         static_cast<std::ptrdiff_t>(x.size()) - 1);
    double acc = 0;
    for (std::ptrdiff_t j = j_lo; j <= j_hi; ++j) {
      acc += x[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(p - j * static_cast<std::ptrdiff_t>(kUp))];
    }
    y[m] = acc;
  }
  return y;
}

double stoi(std::span<const double> clean, std::span<const double> degraded) {
  check_pair(clean, degraded, "stoi");
  if (clean.size() < static_cast<std::size_t>(dsp::kSampleRate / 2)) {
    throw InputError("stoi: need at least 0.5 s of audio, got " + std::to_string(clean.size()) + " samples");
  }
  return stoi_10k(resample_16k_to_10k(clean), resample_16k_to_10k(degraded));
}

double stoi_10k(std::vector<double> x, std::vector<double> y) {
  if (x.size() != y.size()) throw InputError("stoi: length mismatch");
  remove_silent_frames(x, y);
  const auto xe = band_envelopes(x);
  const auto ye = band_envelopes(y);
  const std::size_t frames = xe[0].size();
  if (frames < kSegment) {
    throw InputError("stoi: only " + std::to_string(frames) + " non-silent frames, need " +
                     std::to_string(kSegment));
  }
  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0;
  std::size_t count = 0;
  std::vector<double> xs(kSegment), ys(kSegment);
  for (std::size_t m = kSegment; m <= frames; ++m) {
    for (std::size_t k = 0; k < kBands; ++k) {
      double nx = 0, ny = 0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        xs[i] = xe[k][m - kSegment + i];
        ys[i] = ye[k][m - kSegment + i];
        nx += xs[i] * xs[i];
        ny += ys[i] * ys[i];
      }
      const double norm = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        ys[i] = std::min(ys[i] * norm, xs[i] * (1.0 + clip));
        mx += xs[i];
        my += ys[i];
      }
      mx /= kSegment;
      my /= kSegment;
      double sx = 0, sy = 0, dot = 0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        xs[i] -= mx;
        ys[i] -= my;
        sx += xs[i] * xs[i];
        sy += ys[i] * ys[i];
      }
      sx = std::sqrt(sx) + kEps;
      sy = std::sqrt(sy) + kEps;
      for (std::size_t i = 0; i < kSegment; ++i) dot += (xs[i] / sx) * (ys[i] / sy);
      total += dot;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double si_sdr(std::span<const double> clean, std::span<const double> estimate) {
  check_pair(clean, estimate, "si_sdr");
  double dot = 0, ref = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    dot += estimate[i] * clean[i];
    ref += clean[i] * clean[i];
  }
  if (ref == 0.0) throw InputError("si_sdr: reference signal is all zeros");
  const double a = dot / ref;
  double target = 0, resid = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double t = a * clean[i];
    target += t * t;
    resid += (estimate[i] - t) * (estimate[i] - t);
  }
  if (target == 0.0) return -kSiSdrCapDb;
  if (resid == 0.0) return kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / resid), -kSiSdrCapDb, kSiSdrCapDb);
}

double spec_l1(std::span<const double> clean, std::span<const double> estimate) {
  check_pair(clean, estimate, "spec_l1");
  const auto a = dsp::stft(clean);
  const auto b = dsp::stft(estimate);
  double s = 0;
  for (std::size_t i = 0; i < a.magnitude.size(); ++i) s += std::abs(a.magnitude.data()[i] - b.magnitude.data()[i]);
  return s / static_cast<double>(a.magnitude.size());
}

void EvalResult::finalize() {
  mean_stoi = mean_si_sdr_db = mean_spec_l1 = 0.0;
  if (rows.empty()) return;
  for (const auto& r : rows) {
    mean_stoi += r.stoi;
    mean_si_sdr_db += r.si_sdr_db;
    mean_spec_l1 += r.spec_l1;
  }
  const auto n = static_cast<double>(rows.size());
  mean_stoi /= n;
  mean_si_sdr_db /= n;
  mean_spec_l1 /= n;
}

EvalResult EvalResult::subset(const std::function<bool(const EvalRow&)>& keep) const {
  EvalResult out;
  for (const auto& r : rows) {
    if (keep(r)) out.rows.push_back(r);
  }
  out.finalize();
  return out;
}

EvalRow score(const std::string& utt_id, std::span<const double> clean, std::span<const double> estimate) {
  EvalRow r;
  r.utt_id = utt_id;
  r.stoi = stoi(clean, estimate);
  r.si_sdr_db = si_sdr(clean, estimate);
  r.spec_l1 = spec_l1(clean, estimate);
  return r;
}

namespace {

EvalResult run(const corpus::Manifest& manifest, const RowFilter& filter,
               const std::function<ad::Tensor(const dsp::Spectrogram&)>& estimate) {
  ad::NoGradScope no_grad;
  EvalResult out;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    if (filter && !filter(row)) continue;
    auto u = corpus::load_utterance(manifest, i);
    auto spec = dsp::stft(u.noisy);
    ad::Tensor est = estimate(spec);
    std::span<const double> clean(u.clean.samples.data(), est.size());
    auto r = score(row.noisy_path.stem().string(), clean, est.data());
    r.noise_class = row.noise_class;
    r.snr_db = row.snr_db;
    out.rows.push_back(std::move(r));
  }
  out.finalize();
  return out;
}

}  // namespace

EvalResult evaluate(conformer::MaskNet& net, const corpus::Manifest& manifest, const RowFilter& filter) {
  return run(manifest, filter, [&](const dsp::Spectrogram& s) {
    return conformer::enhance(net, s, false).waveform;
  });
}

EvalResult evaluate_noisy(const corpus::Manifest& manifest, const RowFilter& filter) {
  return run(manifest, filter, [](const dsp::Spectrogram& s) {
    return conformer::apply_mask(ad::Tensor::full(s.magnitude.shape(), 1.0), s).waveform;
  });
}

std::string eval_csv(const EvalResult& r) {
  auto pct = [](double s) { return 100.0 * std::clamp(s, 0.0, 1.0); };
  std::string out = "utt_id,stoi,si_sdr_db,spec_l1\n";
  for (const auto& row : r.rows) {
    out += row.utt_id + "," + fixed(pct(row.stoi), 4) + "," + fixed(row.si_sdr_db, 4) + "," +
           fixed(row.spec_l1, 6) + "\n";
  }
  out += "MEAN," + fixed(pct(r.mean_stoi), 4) + "," + fixed(r.mean_si_sdr_db, 4) + "," +
         fixed(r.mean_spec_l1, 6) + "\n";
  return out;
}

void write_eval_csv(const std::filesystem::path& path, const EvalResult& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << eval_csv(r);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace denoise::metrics
