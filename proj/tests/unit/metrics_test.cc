// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>

#include "denoise/corpus/corpus.h"
#include "denoise/errors.h"
#include "denoise/metrics/metrics.h"
#include "denoise/random.h"

using namespace denoise;
using namespace denoise::metrics;

namespace {

// 64-bit LCG noise, reproducible outside C++.
std::vector<double> lcg_noise(std::size_t n, std::uint64_t s) {
  std::vector<double> out(n);
  for (auto& v : out) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(s >> 11) * 0x1.0p-53 - 0.5;
  }
  return out;
}

std::vector<double> test_tone(std::size_t n, double fs) {
  constexpr double tp = 2.0 * std::numbers::pi;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    x[i] = (0.5 + 0.5 * std::sin(tp * 3 * t)) *
           (0.3 * std::sin(tp * 220 * t) + 0.2 * std::sin(tp * 660 * t + 1) +
            0.1 * std::sin(tp * 1800 * t + 2) + 0.05 * std::sin(tp * 3100 * t));
  }
  const auto lo = std::min(n, static_cast<std::size_t>(0.5 * fs));
  const auto hi = std::min(n, static_cast<std::size_t>(0.75 * fs));
  for (std::size_t i = lo; i < hi; ++i) x[i] = 0;
  return x;
}

std::vector<double> add(const std::vector<double>& x, const std::vector<double>& n, double a) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + a * n[i];
  return y;
}

std::vector<double> scaled(std::vector<double> x, double a) {
  for (double& v : x) v *= a;
  return x;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("denoise_metrics_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

// Reference values from pystoi 0.4.1 on the same signals.
TEST_CASE("stoi core matches the reference implementation at 10 kHz", "[metrics][stoi][oracle]") {
  const auto x = test_tone(15000, 10000.0);
  const auto nz = lcg_noise(15000, 7);
  CHECK(stoi_10k(x, add(x, nz, 0.05)) == Catch::Approx(0.7835118293227136).margin(1e-9));
  CHECK(stoi_10k(x, add(x, nz, 0.2)) == Catch::Approx(0.7067269443561134).margin(1e-9));
  CHECK(stoi_10k(x, add(x, nz, 0.5)) == Catch::Approx(0.6115277649258009).margin(1e-9));
}

TEST_CASE("stoi at 16 kHz stays close to the reference despite a different resampler",
          "[metrics][stoi][oracle]") {
  const auto x = test_tone(24000, 16000.0);
  const auto nz = lcg_noise(24000, 7);
  CHECK(stoi(x, add(x, nz, 0.05)) == Catch::Approx(0.8039441130153042).margin(0.01));
  CHECK(stoi(x, add(x, nz, 0.2)) == Catch::Approx(0.718778800540862).margin(0.01));
  CHECK(stoi(x, add(x, nz, 0.5)) == Catch::Approx(0.6297567388289494).margin(0.01));
}

TEST_CASE("stoi of a signal with itself, its negation or a rescaling is one", "[metrics][stoi]") {
  const auto x = test_tone(24000, 16000.0);
  CHECK(stoi(x, x) == Catch::Approx(1.0).margin(1e-9));
  CHECK(stoi(x, scaled(x, -1.0)) == Catch::Approx(1.0).margin(1e-9));
  CHECK(stoi(x, scaled(x, 0.37)) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("stoi is invariant to scaling the degraded signal", "[metrics][stoi][property]") {
  Rng r(5);
  const auto x = test_tone(20000, 16000.0);
  const auto y = add(x, lcg_noise(20000, 3), 0.3);
  const double base = stoi(x, y);
  for (int i = 0; i < 10; ++i) {
    const double a = r.uniform(0.05, 20.0);
    CHECK(stoi(x, scaled(y, a)) == Catch::Approx(base).margin(1e-9));
  }
}

TEST_CASE("stoi rejects mismatched and short inputs", "[metrics][stoi]") {
  const auto x = test_tone(16000, 16000.0);
  std::vector<double> shorter(x.begin(), x.end() - 1);
  CHECK_THROWS_AS(stoi(x, shorter), InputError);
  std::vector<double> tiny(4000, 0.1);
  CHECK_THROWS_AS(stoi(tiny, tiny), InputError);
}

TEST_CASE("stoi grows with SNR on synthetic mixtures", "[metrics][stoi][property]") {
  int ordered = 0;
  const int trials = 50;
  for (int i = 0; i < trials; ++i) {
    const auto seed = static_cast<std::uint64_t>(1000 + i);
    const auto cls = static_cast<corpus::NoiseClass>(i % corpus::kNumNoiseClasses);
    auto spec = corpus::make_clean_spec(i % corpus::kNumSpeakers, seed, 16000);
    double s[3];
    const double snrs[3] = {0.0, 5.0, 15.0};
    for (int k = 0; k < 3; ++k) {
      auto m = corpus::mix({spec, cls, snrs[k], seed});
      s[k] = stoi(m.clean.samples, m.noisy.samples);
    }
    if (s[2] > s[1] && s[1] > s[0]) ++ordered;
  }
  CHECK(ordered == trials);
}

TEST_CASE("resampler passes low tones and rejects above the cutoff", "[metrics][resample]") {
  constexpr double tp = 2.0 * std::numbers::pi;
  auto tone = [&](double f) {
    std::vector<double> x(16000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(tp * f * static_cast<double>(i) / 16000.0);
    return x;
  };
  auto mid_rms = [](const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 1000; i < 9000; ++i) s += y[i] * y[i];
    return std::sqrt(s / 8000.0);
  };
  auto y = resample_16k_to_10k(tone(1000));
  REQUIRE(y.size() == 10000);
  CHECK(mid_rms(y) == Catch::Approx(std::sqrt(0.5)).margin(1e-4));
  // phase-aligned with the 10 kHz tone
  for (std::size_t i = 1000; i < 9000; i += 97) {
    CHECK(y[i] == Catch::Approx(std::sin(tp * 1000.0 * static_cast<double>(i) / 10000.0)).margin(1e-3));
  }
  CHECK(mid_rms(resample_16k_to_10k(tone(6000))) < 1e-3);
  std::vector<double> dc(16000, 1.0);
  auto yd = resample_16k_to_10k(dc);
  CHECK(yd[5000] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("si_sdr closed forms", "[metrics][sisdr]") {
  const auto x = test_tone(16000, 16000.0);
  CHECK(si_sdr(x, x) == kSiSdrCapDb);
  CHECK(si_sdr(x, scaled(x, 0.25)) == kSiSdrCapDb);
  CHECK(si_sdr(x, std::vector<double>(x.size(), 0.0)) == -kSiSdrCapDb);
  CHECK_THROWS_AS(si_sdr(std::vector<double>(100, 0.0), x), InputError);
  CHECK_THROWS_AS(si_sdr(x, std::vector<double>(10, 1.0)), InputError);

  // noise made orthogonal to the reference and scaled to 10 dB
  auto n = lcg_noise(x.size(), 11);
  double xn = 0, xx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xn += x[i] * n[i];
    xx += x[i] * x[i];
  }
  double nn = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    n[i] -= xn / xx * x[i];
    nn += n[i] * n[i];
  }
  const double g = std::sqrt(xx / (nn * 10.0));
  CHECK(si_sdr(x, add(x, n, g)) == Catch::Approx(10.0).margin(0.01));
}

TEST_CASE("si_sdr is scale invariant", "[metrics][sisdr][property]") {
  Rng r(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = lcg_noise(2000, static_cast<std::uint64_t>(trial) + 1);
    const auto y = add(x, lcg_noise(2000, static_cast<std::uint64_t>(trial) + 500), r.uniform(0.01, 3.0));
    const double base = si_sdr(x, y);
    const double a = r.uniform(1e-3, 1e3);
    CHECK(std::abs(si_sdr(x, scaled(y, a)) - base) < 1e-12 * std::max(1.0, std::abs(base)) * 100);
    // power-of-two scaling is exact in binary floating point
    CHECK(si_sdr(x, scaled(y, 8.0)) == base);
  }
}

TEST_CASE("spec_l1 is zero for identical signals and matches a scalar loop", "[metrics][specl1]") {
  const auto x = test_tone(8000, 16000.0);
  const auto y = add(x, lcg_noise(8000, 2), 0.1);
  CHECK(spec_l1(x, x) == 0.0);
  const auto a = dsp::stft(x), b = dsp::stft(y);
  double s = 0;
  for (std::size_t i = 0; i < a.magnitude.size(); ++i) s += std::abs(a.magnitude[i] - b.magnitude[i]);
  CHECK(spec_l1(x, y) == Catch::Approx(s / static_cast<double>(a.magnitude.size())).epsilon(1e-12));
  CHECK(spec_l1(x, y) > 0.0);
}

TEST_CASE("evaluation of the identity mask matches the noisy baseline", "[metrics][eval]") {
  auto d = scratch("eval");
  auto paths = corpus::build_corpus({8, 8, 3, 1.0}, d);
  auto val = corpus::read_manifest(paths.val_manifest);
  auto base = evaluate_noisy(val);
  REQUIRE(base.rows.size() == 8);
  CHECK(eval_csv(base) == eval_csv(evaluate_noisy(val)));

  conformer::ConformerConfig cfg;
  cfg.attention_dim = 16;
  cfg.num_blocks = 1;
  cfg.heads = 2;
  auto net = conformer::build(cfg, dsp::StftConfig{}.bins(), 1);
  // zero head weights and a large bias saturate the mask at one
  std::ranges::fill(net.head_w.mutable_data(), 0.0);
  std::ranges::fill(net.head_b.mutable_data(), 800.0);
  auto enh = evaluate(net, val);
  CHECK(eval_csv(enh) == eval_csv(base));

  double snr = 0;
  for (const auto& r : base.rows) snr += r.snr_db;
  snr /= static_cast<double>(base.rows.size());
  CHECK(std::abs(base.mean_si_sdr_db - snr) < 1.0);

  auto sub = base.subset([](const EvalRow& r) { return r.snr_db == 0.0; });
  CHECK(sub.rows.size() == 8);  // val rows 0..7 share the first SNR
  const auto csv = eval_csv(base);
  CHECK(csv.rfind("utt_id,stoi,si_sdr_db,spec_l1\n", 0) == 0);
  CHECK(csv.find("\nMEAN,") != std::string::npos);
  std::filesystem::remove_all(d);
}
