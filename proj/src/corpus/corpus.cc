// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/corpus/corpus.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "denoise/dsp/wav.h"
#include "denoise/errors.h"
#include "denoise/random.h"

namespace denoise::corpus {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRate = dsp::kSampleRate;
constexpr std::size_t kBlock = 32;

struct Speaker {
  double f0 = 120.0;
  double tract = 1.0;      // formant frequency scale
  double bandwidth = 1.0;  // formant bandwidth scale
  double tilt = 1.0;       // harmonic roll-off exponent
  double f4 = 3500.0;
};

Speaker speaker_profile(int id) {
  Rng r(derive_seed(0x5eedULL, static_cast<std::uint64_t>(id)));
  Speaker s;
  s.f0 = id % 2 == 0 ? r.uniform(95.0, 140.0) : r.uniform(170.0, 240.0);
  s.tract = r.uniform(0.85, 1.2);
  s.bandwidth = r.uniform(0.8, 1.3);
  s.tilt = r.uniform(0.8, 1.4);
  s.f4 = r.uniform(3300.0, 4000.0);
  return s;
}

struct Prosody {
  double pitch = 1.0;
  double depth = 0.03;  // relative pitch excursion
  double rate = 2.0;    // Hz
  double energy = 0.7;  // peak level relative to 0.5
  double accent = 0.0;  // amplitude modulation depth at 4 Hz
};

constexpr std::array<Prosody, kNumProsody> kProsody = {{
    {1.0, 0.03, 2.0, 0.7, 0.0},    // neutral
    {1.25, 0.12, 3.5, 0.9, 0.1},   // excited
    {0.85, 0.02, 1.0, 0.45, 0.0},  // subdued
    {1.1, 0.06, 6.0, 1.0, 0.35},   // tense
}};

// F1..F3 for the voiced units 1..6.
constexpr std::array<std::array<double, 3>, 6> kFormants = {{
    {730, 1090, 2440},
    {270, 2290, 3010},
    {300, 870, 2240},
    {530, 1840, 2480},
    {570, 840, 2410},
    {660, 1720, 2410},
}};
constexpr std::array<double, 3> kBandwidth = {60, 90, 120};
constexpr std::array<double, 3> kFormantGain = {1.0, 0.6, 0.3};
constexpr int kFricative = kNumUnits - 1;

double envelope(double f, const std::array<double, 3>& formants, const Speaker& sp) {
  double e = 0.01;
  for (std::size_t j = 0; j < 3; ++j) {
    const double d = (f - formants[j]) / (kBandwidth[j] * sp.bandwidth);
    e += kFormantGain[j] / (1.0 + d * d);
  }
  const double d4 = (f - sp.f4) / (200.0 * sp.bandwidth);
  return e + 0.15 / (1.0 + d4 * d4);
}

int unit_at(const CleanSpec& spec, std::size_t sample) {
  for (const auto& seg : spec.content) {
    if (sample >= seg.begin && sample < seg.end) return seg.unit;
  }
  return 0;
}

std::vector<double> white(std::size_t n, Rng& r) {
  std::vector<double> x(n);
  for (double& v : x) v = r.normal();
  return x;
}

// Two-pole resonator at `freq` with pole radius `radius`.
void resonate(std::vector<double>& x, double freq, double radius) {
  const double c = 2.0 * radius * std::cos(kTwoPi * freq / kRate), r2 = radius * radius;
  double y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = (1 - radius) * v + c * y1 - r2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void add_raised_cosine_event(std::vector<double>& out, std::size_t start, std::size_t len,
                             const std::vector<double>& src) {
  const std::size_t ramp = std::min<std::size_t>(160, len / 2);
  for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
    double g = 1.0;
    if (i < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(ramp));
    if (len - i <= ramp) g = std::min(g, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - i) / static_cast<double>(ramp)));
    out[start + i] += g * src[i];
  }
}

double power(const std::vector<double>& x) {
  double p = 0;
  for (double v : x) p += v * v;
  return p / static_cast<double>(x.size());
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string wav_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.wav", i);
  return buf;
}

}  // namespace

std::string_view noise_class_name(NoiseClass c) {
  switch (c) {
    case NoiseClass::kWhite: return "white";
    case NoiseClass::kPink: return "pink";
    case NoiseClass::kTonalEvent: return "tonal_event";
    case NoiseClass::kModulatedBurst: return "modulated_burst";
  }
  return "unknown";
}

NoiseClass parse_noise_class(std::string_view name) {
  for (int i = 0; i < kNumNoiseClasses; ++i) {
    if (noise_class_name(static_cast<NoiseClass>(i)) == name) return static_cast<NoiseClass>(i);
  }
  throw InputError("unknown noise class '" + std::string(name) + "'");
}

std::size_t samples_for_duration(double duration_s) {
  if (!(duration_s >= 1.0 && duration_s <= 4.0)) {
    throw ConfigError("utterance duration must be within [1, 4] s, got " + format_double(duration_s));
  }
  return static_cast<std::size_t>(std::llround(duration_s * kRate));
}

CleanSpec make_clean_spec(int speaker_id, std::uint64_t seed, std::size_t samples) {
  if (speaker_id < 0 || speaker_id >= kNumSpeakers) {
    throw ConfigError("speaker id " + std::to_string(speaker_id) + " outside [0, " +
                      std::to_string(kNumSpeakers) + ")");
  }
  Rng r(derive_seed(seed, 0xc1ea));
  CleanSpec spec;
  spec.speaker_id = speaker_id;
  spec.seed = seed;
  spec.samples = samples;
  spec.prosody_class = static_cast<int>(r.index(kNumProsody));
  std::size_t pos = 0;
  bool voiced = false;
  while (pos < samples) {
    const auto len = static_cast<std::size_t>(r.uniform(0.08, 0.22) * kRate);
    int unit = r.uniform() < 0.15 ? 0 : 1 + static_cast<int>(r.index(kNumUnits - 1));
    voiced = voiced || (unit != 0 && unit != kFricative);
    const std::size_t end = std::min(samples, pos + len);
    // Guarantee at least one voiced unit per utterance.
    if (end == samples && !voiced) unit = 1;
    spec.content.push_back({unit, pos, end});
    pos = end;
  }
  return spec;
}

std::vector<int> frame_labels(const CleanSpec& spec, std::size_t samples, const dsp::StftConfig& cfg) {
  const std::size_t frames = cfg.frames_for(samples);
  std::vector<int> out(frames);
  for (std::size_t t = 0; t < frames; ++t) out[t] = unit_at(spec, t * cfg.hop + cfg.frame_len / 2);
  return out;
}

CleanSignal synth_clean(const CleanSpec& spec) {
  const Speaker sp = speaker_profile(spec.speaker_id);
  const Prosody& pr = kProsody[static_cast<std::size_t>(spec.prosody_class)];
  Rng r(derive_seed(spec.seed, 0xf41c));
  const std::size_t n = spec.samples;
  const double dur = static_cast<double>(n) / kRate;
  const double contour_phase = r.uniform(0.0, kTwoPi);
  auto fric = white(n, r);
  for (std::size_t i = n; i-- > 1;) fric[i] -= 0.95 * fric[i - 1];

  std::vector<double> x(n, 0.0);
  std::array<double, 3> formants = kFormants[0];
  double voice_gate = 0.0, noise_gate = 0.0, phase = 0.0;
  // One-pole smoothing per block, about 15 ms time constant.
  const double alpha = 1.0 - std::exp(-static_cast<double>(kBlock) / (0.015 * kRate));
  std::vector<double> amps;
  for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
    const std::size_t b1 = std::min(n, b0 + kBlock);
    const double t = (static_cast<double>(b0 + b1) / 2.0) / kRate;
    const int unit = unit_at(spec, (b0 + b1) / 2);
    const bool is_voiced = unit != 0 && unit != kFricative;
    if (is_voiced) {
      const auto& target = kFormants[static_cast<std::size_t>(unit - 1)];
      for (std::size_t j = 0; j < 3; ++j) formants[j] += alpha * (target[j] * sp.tract - formants[j]);
    }
    voice_gate += alpha * ((is_voiced ? 1.0 : 0.0) - voice_gate);
    noise_gate += alpha * ((unit == kFricative ? 1.0 : 0.0) - noise_gate);
    const double f0 = sp.f0 * pr.pitch * (1.0 - 0.1 * t / dur) *
                      (1.0 + pr.depth * std::sin(kTwoPi * pr.rate * t + contour_phase));
    const auto harmonics = static_cast<std::size_t>(7000.0 / f0);
    amps.assign(harmonics, 0.0);
    for (std::size_t h = 1; h <= harmonics; ++h) {
      amps[h - 1] = envelope(static_cast<double>(h) * f0, formants, sp) /
                    std::pow(static_cast<double>(h), sp.tilt);
    }
    const double accent = 1.0 + pr.accent * std::sin(kTwoPi * 4.0 * t);
    for (std::size_t i = b0; i < b1; ++i) {
      phase += kTwoPi * f0 / kRate;
      if (phase > kTwoPi) phase -= kTwoPi;
      double v = 0;
      if (voice_gate > 1e-4) {
        for (std::size_t h = 0; h < harmonics; ++h) v += amps[h] * std::sin(static_cast<double>(h + 1) * phase);
      }
      x[i] = accent * (voice_gate * v + 0.3 * noise_gate * fric[i]);
    }
  }
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double g = peak > 0 ? 0.5 * pr.energy / peak : 0.0;
  for (double& v : x) v *= g;
  CleanSignal out;
  out.wave.samples = std::move(x);
  out.frame_units = frame_labels(spec, n);
  return out;
}

std::vector<double> synth_noise(NoiseClass c, std::size_t n, std::uint64_t seed) {
  Rng r(derive_seed(seed, 0x0015e + static_cast<std::uint64_t>(c)));
  switch (c) {
    case NoiseClass::kWhite:
      return white(n, r);
    case NoiseClass::kPink: {
      // Paul Kellet's refined pink filter.
      auto w = white(n, r);
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (double& v : w) {
        const double in = v;
        b0 = 0.99886 * b0 + in * 0.0555179;
        b1 = 0.99332 * b1 + in * 0.0750759;
        b2 = 0.96900 * b2 + in * 0.1538520;
        b3 = 0.86650 * b3 + in * 0.3104856;
        b4 = 0.55000 * b4 + in * 0.5329522;
        b5 = -0.7616 * b5 - in * 0.0168980;
        v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + in * 0.5362;
        b6 = in * 0.115926;
      }
      return w;
    }
    case NoiseClass::kTonalEvent: {
      auto out = white(n, r);
      for (double& v : out) v *= 0.02;
      std::size_t pos = static_cast<std::size_t>(r.uniform(0.0, 0.1) * kRate);
      while (pos < n) {
        const auto len = static_cast<std::size_t>(r.uniform(0.06, 0.3) * kRate);
        const double f = r.uniform(400.0, 3500.0), p = r.uniform(0.0, kTwoPi);
        std::vector<double> tone(len);
        for (std::size_t i = 0; i < len; ++i) {
          const double ph = kTwoPi * f * static_cast<double>(i) / kRate + p;
          tone[i] = std::sin(ph) + 0.5 * std::sin(2 * ph) + 0.25 * std::sin(3 * ph);
        }
        add_raised_cosine_event(out, pos, len, tone);
        pos += len + static_cast<std::size_t>(r.uniform(0.02, 0.25) * kRate);
      }
      return out;
    }
    case NoiseClass::kModulatedBurst: {
      auto out = white(n, r);
      for (double& v : out) v *= 0.02;
      std::size_t pos = static_cast<std::size_t>(r.uniform(0.0, 0.2) * kRate);
      while (pos < n) {
        const auto len = static_cast<std::size_t>(r.uniform(0.1, 0.4) * kRate);
        auto burst = white(len, r);
        resonate(burst, r.uniform(800.0, 3000.0), 0.97);
        const double am = r.uniform(6.0, 12.0);
        for (std::size_t i = 0; i < len; ++i) {
          burst[i] *= 8.0 * (0.5 + 0.5 * std::sin(kTwoPi * am * static_cast<double>(i) / kRate));
        }
        add_raised_cosine_event(out, pos, len, burst);
        pos += len + static_cast<std::size_t>(r.uniform(0.1, 0.4) * kRate);
      }
      return out;
    }
  }
  throw ContractError("unhandled noise class");
}

Mixture mix(const MixSpec& spec) {
  if (!(spec.snr_db == kNoiseFree || (spec.snr_db >= 0.0 && spec.snr_db <= 20.0))) {
    throw ConfigError("mixing SNR " + format_double(spec.snr_db) + " dB outside [0, 20]");
  }
  auto clean = synth_clean(spec.clean);
  const std::size_t n = clean.wave.size();
  auto noise = synth_noise(spec.noise_class, n, spec.seed);
  Mixture m;
  m.frame_units = std::move(clean.frame_units);
  const double pc = power(clean.wave.samples), pn = power(noise);
  m.noise_gain = spec.snr_db == kNoiseFree ? 0.0 : std::sqrt(pc / (pn * std::pow(10.0, spec.snr_db / 10.0)));
  m.clean = std::move(clean.wave);
  m.noise.resize(n);
  m.noisy.samples.resize(n);
  double peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m.noise[i] = m.noise_gain * noise[i];
    m.noisy.samples[i] = m.clean.samples[i] + m.noise[i];
    peak = std::max(peak, std::abs(m.noisy.samples[i]));
  }
  if (peak > 1.0) {
    m.rescale = 0.99 / peak;
    for (std::size_t i = 0; i < n; ++i) {
      m.clean.samples[i] *= m.rescale;
      m.noise[i] *= m.rescale;
      m.noisy.samples[i] = m.clean.samples[i] + m.noise[i];
    }
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  m.path = path;
  const auto base = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 6) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 6 tab-separated fields, got " +
                       std::to_string(f.size()));
    }
    ManifestRow row;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path q(p);
      return q.is_absolute() ? q : base / q;
    };
    try {
      row.noisy_path = resolve(f[0]);
      row.clean_path = resolve(f[1]);
      row.speaker_id = std::stoi(f[2]);
      row.noise_class = parse_noise_class(f[3]);
      row.snr_db = f[4] == "inf" ? kNoiseFree : std::stod(f[4]);
      row.seed = std::stoull(f[5]);
    } catch (const std::logic_error& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  const auto base = path.parent_path();
  for (const auto& r : m.rows) {
    out << r.noisy_path.lexically_relative(base).generic_string() << '\t'
        << r.clean_path.lexically_relative(base).generic_string() << '\t' << r.speaker_id << '\t'
        << noise_class_name(r.noise_class) << '\t' << format_double(r.snr_db) << '\t' << r.seed << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

CorpusPaths build_corpus(const CorpusOptions& opt, const std::filesystem::path& out_dir) {
  const std::size_t samples = samples_for_duration(opt.duration_s);
  if (opt.train_size == 0 || opt.val_size == 0) throw ConfigError("corpus splits must be non-empty");
  CorpusPaths paths{out_dir / "train.tsv", out_dir / "val.tsv"};
  for (int split = 0; split < 2; ++split) {
    const bool train = split == 0;
    const std::size_t size = train ? opt.train_size : opt.val_size;
    const std::string name = train ? "train" : "val";
    Rng r(derive_seed(opt.seed, train ? 0x7a1 : 0x7a2));
    Manifest m;
    m.path = train ? paths.train_manifest : paths.val_manifest;
    for (std::size_t i = 0; i < size; ++i) {
      ManifestRow row;
      row.seed = derive_seed(opt.seed, (static_cast<std::uint64_t>(split) << 32) | i);
      row.noise_class = static_cast<NoiseClass>(i % kNumNoiseClasses);
      if (train) {
        row.speaker_id = static_cast<int>((i / kNumNoiseClasses) % kNumTrainSpeakers);
        row.snr_db = kSnrGridDb[r.index(4)];
      } else {
        row.speaker_id = kNumTrainSpeakers + static_cast<int>(i % (kNumSpeakers - kNumTrainSpeakers));
        row.noise_class = static_cast<NoiseClass>((i / 2) % kNumNoiseClasses);
        row.snr_db = kSnrGridDb[(i / 8) % 4];
      }
      MixSpec spec{make_clean_spec(row.speaker_id, row.seed, samples), row.noise_class, row.snr_db, row.seed};
      auto mx = mix(spec);
      row.noisy_path = out_dir / name / "noisy" / wav_name(i);
      row.clean_path = out_dir / name / "clean" / wav_name(i);
      dsp::write_wav(row.noisy_path, mx.noisy);
      dsp::write_wav(row.clean_path, mx.clean);
      m.rows.push_back(std::move(row));
    }
    write_manifest(m.path, m);
  }
  return paths;
}

Utterance load_utterance(const Manifest& m, std::size_t row) {
  if (row >= m.rows.size()) {
    throw ContractError("manifest " + m.path.string() + " has no row " + std::to_string(row));
  }
  const auto& r = m.rows[row];
  Utterance u;
  u.noisy = dsp::read_wav(r.noisy_path);
  u.clean = dsp::read_wav(r.clean_path);
  if (u.noisy.size() != u.clean.size()) {
    throw InputError("length mismatch between " + r.noisy_path.string() + " and " + r.clean_path.string());
  }
  const auto spec = make_clean_spec(r.speaker_id, r.seed, u.clean.size());
  u.labels.speaker_id = r.speaker_id;
  u.labels.prosody_class = spec.prosody_class;
  u.labels.noise_class = r.noise_class;
  u.labels.frame_units = frame_labels(spec, u.clean.size());
  return u;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace denoise::corpus
