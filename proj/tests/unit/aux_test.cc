// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "denoise/autodiff/adam.h"
#include "denoise/autodiff/ops.h"
#include "denoise/autodiff/tape.h"
#include "denoise/aux_ensemble/aux_ensemble.h"
#include "denoise/errors.h"
#include "support/gradcheck.h"

using namespace denoise;
using namespace denoise::aux;
using denoise::testing::grad_check;
using denoise::testing::projection_loss;
using denoise::testing::random_tensor;

namespace {

constexpr std::size_t kBins = 257;

ad::Tensor positive_mag(std::mt19937_64& rng, std::size_t frames, bool grad = false) {
  auto t = random_tensor(rng, {frames, kBins}, 1.0, grad);
  for (double& v : t.mutable_data()) v = std::abs(v) + 0.05;
  return t;
}

AuxInput sample_input(const AuxNet& net, std::mt19937_64& rng, std::size_t size, bool grad = false) {
  if (net.spec.input_kind == InputKind::kMagnitude) return AuxInput::magnitude(positive_mag(rng, size, grad));
  return AuxInput::waveform(random_tensor(rng, {size * 64}, 0.2, grad));
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("denoise_aux_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// mean |a - b| by scalar loop
double scalar_l1(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("tap counts follow the published layer choices", "[aux][taps]") {
  CHECK(default_spec(AuxName::kEvent).n_layers == 4);
  CHECK(default_spec(AuxName::kAcoustic).n_layers == 3);
  CHECK(default_spec(AuxName::kSpeaker).n_layers == 3);
  CHECK(default_spec(AuxName::kEmotion).n_layers == 3);
  CHECK(default_spec(AuxName::kPase).n_layers == 6);
  CHECK(default_spec(AuxName::kWav2vec).n_layers == 5);
  std::mt19937_64 rng(1);
  for (AuxName n : kAllAux) {
    auto net = load_aux(default_spec(n), 3);
    CHECK(net.frozen());
    auto in = sample_input(net, rng, 12);
    auto a = aux_forward_taps(net, in);
    auto b = aux_forward_taps(net, in);
    REQUIRE(a.size() == net.spec.n_layers);
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].shape() == b[k].shape());
      CHECK(std::equal(a[k].data().begin(), a[k].data().end(), b[k].data().begin()));
    }
    CHECK(parse_aux_name(aux_name(n)) == n);
    CHECK(parse_task_name(task_name(n)) == n);
  }
  CHECK_THROWS_AS(parse_aux_name("pann"), ConfigError);
}

TEST_CASE("wrong input kind is a contract error", "[aux][taps]") {
  auto event = load_aux(default_spec(AuxName::kEvent));
  auto speaker = load_aux(default_spec(AuxName::kSpeaker));
  CHECK_THROWS_AS(aux_forward_taps(event, AuxInput::waveform(ad::Tensor::zeros({1024}))), ContractError);
  CHECK_THROWS_AS(aux_forward_taps(speaker, AuxInput::magnitude(ad::Tensor::full({4, kBins}, 1.0))),
                  ContractError);
}

TEST_CASE("tap gradients reach the input and match finite differences", "[aux][taps][gradcheck]") {
  std::mt19937_64 rng(7);
  for (AuxName n : kAllAux) {
    DYNAMIC_SECTION(aux_name(n)) {
      auto net = load_aux(default_spec(n), 11);
      auto in = sample_input(net, rng, n == AuxName::kWav2vec ? 6 : 5, true);
      auto loss = [&] {
        auto taps = aux_forward_taps(net, in);
        ad::Tensor s = projection_loss(taps[0], 1);
        for (std::size_t k = 1; k < taps.size(); ++k) s = ad::add(s, projection_loss(taps[k], 1 + k));
        return s;
      };
      auto r = grad_check(loss, {in.value});
      CHECK(r.max_rel_error < 1e-4);
      for (const auto& [name, p] : net.params) CHECK_FALSE(p.has_grad());
    }
  }
}

TEST_CASE("perceptual loss is zero on identical inputs, non-negative and symmetric", "[aux][loss][property]") {
  std::mt19937_64 rng(21);
  for (AuxName n : kAllAux) {
    auto net = load_aux(default_spec(n), 5);
    for (int trial = 0; trial < 3; ++trial) {
      auto a = sample_input(net, rng, 10);
      auto b = sample_input(net, rng, 10);
      CHECK(perceptual_loss(net, a, a).item() == 0.0);
      const double ab = perceptual_loss(net, a, b).item();
      CHECK(ab >= 0.0);
      CHECK(ab == perceptual_loss(net, b, a).item());
    }
    auto a = sample_input(net, rng, 10);
    auto c = sample_input(net, rng, 11);
    CHECK_THROWS_AS(perceptual_loss(net, a, c), ContractError);
  }
}

TEST_CASE("tap distance of a hand-built two-layer network", "[aux][loss][oracle]") {
  // layer 1: relu(2x - 1), layer 2: 3 * layer1
  auto taps = [](const std::vector<double>& x) {
    std::vector<double> l1(x.size()), l2(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      l1[i] = std::max(0.0, 2 * x[i] - 1);
      l2[i] = 3 * l1[i];
    }
    return std::vector<ad::Tensor>{ad::Tensor({x.size()}, l1), ad::Tensor({x.size()}, l2)};
  };
  const std::vector<double> e = {1.0, 0.0, 2.0, 0.75};
  const std::vector<double> c = {0.5, 1.0, 1.0, 0.25};
  // layer 1: (1, 0, 3, 0.5) vs (0, 1, 1, 0) -> |d| = 1, 1, 2, 0.5 -> 1.125
  // layer 2: three times that -> 3.375
  CHECK(tap_distance(taps(e), taps(c)).item() == Catch::Approx((1.125 + 3.375) / 2).epsilon(1e-15));
  CHECK_THROWS_AS(tap_distance({}, {}), ContractError);
}

TEST_CASE("spectral l1 loss", "[aux][loss]") {
  std::mt19937_64 rng(3);
  auto a = positive_mag(rng, 9);
  auto b = positive_mag(rng, 9);
  CHECK(l1_stft_loss(a, a).item() == 0.0);
  CHECK(l1_stft_loss(ad::Tensor::full({9, kBins}, 0.3), ad::Tensor::zeros({9, kBins})).item() ==
        Catch::Approx(0.3).epsilon(1e-12));
  CHECK(std::abs(l1_stft_loss(a, b).item() - scalar_l1(a.data(), b.data())) < 1e-12);
  CHECK_THROWS_AS(l1_stft_loss(a, positive_mag(rng, 8)), ContractError);
}

TEST_CASE("loss weights", "[aux][weights]") {
  const auto w = LossWeights::hand_tuned();
  CHECK(w[Term::kEvent] == 5e-03);
  CHECK(w[Term::kAcoustic] == 1e-04);
  CHECK(w[Term::kSpeaker] == 1.25e-04);
  CHECK(w[Term::kEmotion] == 4e-05);
  CHECK(w[Term::kPase] == 1.7e-04);
  CHECK(w[Term::kWav2vec] == 3.5e-05);
  CHECK(w[Term::kL1] == 1.1e-01);
  for (double v : LossWeights::equal().lambda) CHECK(v == 1.0 / 7.0);
  auto bad = w;
  bad[Term::kPase] = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad[Term::kPase] = std::nan("");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_term_set({"l1", "event"}) == term_set({Term::kL1, Term::kEvent}));
  CHECK(term_names(term_set({Term::kPase, Term::kL1})) == std::vector<std::string>{"pase", "l1"});
  CHECK_THROWS_AS(parse_term("pesq"), ConfigError);
}

TEST_CASE("objective assembly matches a scalar recomputation", "[aux][perl][oracle]") {
  const auto ensemble = load_ensemble(all_terms(), {}, 9);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t frames = 8, samples = dsp::StftConfig{}.samples_for(frames);
  for (int trial = 0; trial < 50; ++trial) {
    PerlInputs in{positive_mag(rng, frames), random_tensor(rng, {samples}, 0.2, false),
                  positive_mag(rng, frames), random_tensor(rng, {samples}, 0.2, false)};
    LossWeights w;
    for (double& v : w.lambda) v = u(rng) < 0.2 ? 0.0 : std::pow(10.0, -4.0 * u(rng));
    TermSet enabled;
    for (std::size_t i = 0; i < kNumTerms; ++i) enabled[i] = u(rng) < 0.7;
    if (enabled.none()) enabled.set(static_cast<std::size_t>(Term::kL1));
    const auto r = perl_total(w, enabled, ensemble, in);

    double expect = 0;
    for (std::size_t i = 0; i < kNumTerms; ++i) {
      if (!enabled.test(i)) continue;
      double li;
      if (static_cast<Term>(i) == Term::kL1) {
        li = scalar_l1(in.enhanced_mag.data(), in.clean_mag.data());
      } else {
        const auto& net = ensemble.at(static_cast<AuxName>(i));
        const bool wave = net.spec.input_kind == InputKind::kWaveform;
        auto te = aux_forward_taps(net, wave ? AuxInput::waveform(in.enhanced_wave) : AuxInput::magnitude(in.enhanced_mag));
        auto tc = aux_forward_taps(net, wave ? AuxInput::waveform(in.clean_wave) : AuxInput::magnitude(in.clean_mag));
        li = 0;
        for (std::size_t k = 0; k < te.size(); ++k) li += scalar_l1(te[k].data(), tc[k].data());
        li /= static_cast<double>(te.size());
      }
      CHECK(std::abs(r.raw[i] - li) <= 1e-12 * std::max(1.0, li));
      expect += w.lambda[i] * li;
    }
    CHECK(std::abs(r.total - expect) <= 1e-12 * std::max(1.0, expect));
    CHECK(std::abs(r.total_tensor.item() - r.total) <= 1e-12 * std::max(1.0, r.total));
    double sum = 0;
    for (double v : r.weighted) sum += v;
    CHECK(std::abs(r.total - sum) <= 1e-12);
  }
}

TEST_CASE("objective linearity and subset consistency", "[aux][perl][property]") {
  const auto ensemble = load_ensemble(all_terms(), {}, 2);
  std::mt19937_64 rng(4);
  const std::size_t frames = 6, samples = dsp::StftConfig{}.samples_for(frames);
  PerlInputs in{positive_mag(rng, frames), random_tensor(rng, {samples}, 0.2, false),
                positive_mag(rng, frames), random_tensor(rng, {samples}, 0.2, false)};
  const auto w = LossWeights::hand_tuned();

  const auto only_l1 = perl_total(w, term_set({Term::kL1}), ensemble, in);
  CHECK(only_l1.total == w[Term::kL1] * l1_stft_loss(in.enhanced_mag, in.clean_mag).item());

  auto w2 = w;
  for (double& v : w2.lambda) v *= 2;
  const auto full = perl_total(w, all_terms(), ensemble, in);
  CHECK(perl_total(w2, all_terms(), ensemble, in).total == Catch::Approx(2 * full.total).epsilon(1e-14));

  for (std::size_t j = 0; j < kNumTerms; ++j) {
    auto wz = w;
    wz.lambda[j] = 0;
    auto without = all_terms();
    without.reset(j);
    CHECK(std::abs(perl_total(wz, all_terms(), ensemble, in).total -
                   perl_total(w, without, ensemble, in).total) <= 1e-12);
  }
  CHECK_THROWS_AS(perl_total(w, TermSet{}, ensemble, in), ConfigError);
  AuxEnsemble empty;
  CHECK_THROWS_AS(perl_total(w, term_set({Term::kPase}), empty, in), ConfigError);
}

TEST_CASE("training a denoiser through the objective leaves aux networks untouched", "[aux][frozen]") {
  const auto ensemble = load_ensemble(all_terms(), {}, 8);
  const auto before = ensemble.checksum();
  conformer::ConformerConfig cfg;
  cfg.attention_dim = 16;
  cfg.num_blocks = 1;
  cfg.heads = 2;
  auto net = conformer::build(cfg, kBins, 1);
  std::vector<ad::Tensor> params;
  for (auto& [n, p] : net.parameters()) params.push_back(p);
  auto state = ad::AdamState::for_params(params);
  auto clean_spec = dsp::stft(corpus::synth_clean(corpus::make_clean_spec(1, 4, 8000)).wave);
  auto noisy = corpus::mix({corpus::make_clean_spec(1, 4, 8000), corpus::NoiseClass::kPink, 5.0, 4});
  auto noisy_spec = dsp::stft(noisy.noisy);
  for (int step = 0; step < 3; ++step) {
    for (auto& p : params) p.zero_grad();
    ad::Tape tape;
    ad::TapeScope scope(tape);
    auto enh = conformer::enhance(net, noisy_spec, true);
    auto r = perl_total(LossWeights::hand_tuned(), all_terms(), ensemble, perl_inputs(enh, clean_spec));
    tape.backward(r.total_tensor);
    ad::adam_step(params, state, {});
  }
  CHECK(ensemble.checksum() == before);
  for (const auto& n : ensemble.nets) {
    for (const auto& [name, p] : n->params) CHECK_FALSE(p.has_grad());
  }
}

TEST_CASE("aux checkpoints round trip and are validated", "[aux][checkpoint]") {
  auto d = scratch("ckpt");
  auto net = build_aux(AuxName::kEmotion, 4);
  net.val_metric = "accuracy";
  net.val_score = 0.5;
  save_aux(d / "emotion.dnck", net);
  auto spec = default_spec(AuxName::kEmotion);
  spec.checkpoint = (d / "emotion.dnck").string();
  auto back = load_aux(spec, 999);
  CHECK(back.checksum() == net.checksum());
  CHECK(back.frozen());
  CHECK(back.val_score == 0.5);
  auto wrong = default_spec(AuxName::kSpeaker);
  wrong.checkpoint = spec.checkpoint;
  CHECK_THROWS_AS(load_aux(wrong), ConfigError);
  auto bad_taps = spec;
  bad_taps.n_layers = 2;
  CHECK_THROWS_AS(load_aux(bad_taps), ConfigError);
  CHECK_THROWS_AS(load_ensemble(term_set({Term::kPase}), d), ConfigError);
  CHECK(load_ensemble(term_set({Term::kEmotion, Term::kL1}), d).at(AuxName::kEmotion).checksum() == net.checksum());
  std::filesystem::remove_all(d);
}

TEST_CASE("toy pretraining runs, freezes, and reports labels it cannot find", "[aux][pretrain]") {
  auto d = scratch("pretrain");
  auto paths = corpus::build_corpus({10, 2, 5, 1.0}, d);
  auto train = corpus::read_manifest(paths.train_manifest);
  PretrainOptions opt;
  opt.epochs = 1;
  for (AuxName n : kAllAux) {
    auto a = pretrain_toy_aux(n, train, opt);
    CHECK(a.net.frozen());
    CHECK(a.epoch_loss.size() == 1);
    CHECK(std::isfinite(a.epoch_loss[0]));
    CHECK_FALSE(a.net.val_metric.empty());
    if (n == AuxName::kEvent) {
      CHECK(pretrain_toy_aux(n, train, opt).net.checksum() == a.net.checksum());
    }
  }
  // noise-free rows carry no noise label; validation speakers are unknown to the speaker task
  auto quiet = train;
  quiet.rows[0].snr_db = corpus::kNoiseFree;
  CHECK_THROWS_AS(pretrain_toy_aux(AuxName::kEvent, quiet, opt), CorpusError);
  auto val = corpus::read_manifest(paths.val_manifest);
  auto mixed = train;
  mixed.rows[1] = val.rows[0];
  CHECK_THROWS_AS(pretrain_toy_aux(AuxName::kSpeaker, mixed, opt), CorpusError);
  std::filesystem::remove_all(d);
}
