// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUX_ENSEMBLE_AUX_ENSEMBLE_H_
#define DENOISE_AUX_ENSEMBLE_AUX_ENSEMBLE_H_

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/autodiff/tensor.h"
#include "denoise/conformer/conformer.h"
#include "denoise/corpus/corpus.h"

namespace denoise::aux {

enum class AuxName { kEvent, kAcoustic, kSpeaker, kEmotion, kPase, kWav2vec };
inline constexpr std::size_t kNumAux = 6;
inline constexpr std::array<AuxName, kNumAux> kAllAux = {AuxName::kEvent,   AuxName::kAcoustic,
                                                        AuxName::kSpeaker, AuxName::kEmotion,
                                                        AuxName::kPase,    AuxName::kWav2vec};

std::string_view aux_name(AuxName n);
AuxName parse_aux_name(std::string_view s);  // ConfigError on unknown names

// Name of the pretraining task for each network ("pase_multitask", ...).
std::string_view task_name(AuxName n);
AuxName parse_task_name(std::string_view s);

enum class InputKind { kWaveform, kMagnitude };

inline constexpr std::string_view kRandomFrozen = "random_frozen";

struct AuxSpec {
  AuxName name = AuxName::kEvent;
  std::size_t n_layers = 0;
  InputKind input_kind = InputKind::kMagnitude;
  std::string checkpoint{kRandomFrozen};
};

// Tap count and input kind for `n`, checkpoint "random_frozen".
AuxSpec default_spec(AuxName n);

// waveform: [samples]; magnitude: [frames, bins].
struct AuxInput {
  InputKind kind = InputKind::kWaveform;
  ad::Tensor value;

  static AuxInput waveform(ad::Tensor t) { return {InputKind::kWaveform, std::move(t)}; }
  static AuxInput magnitude(ad::Tensor t) { return {InputKind::kMagnitude, std::move(t)}; }
};

struct AuxNet {
  AuxSpec spec;
  ad::NamedTensors params;  // trunk ("l<k>.*") then task head ("head.*")
  double val_score = 0.0;   // from pretraining; 0 for random_frozen
  std::string val_metric;

  const ad::Tensor& param(const std::string& name) const;
  std::vector<ad::Tensor> trainable() const;
  void freeze();
  bool frozen() const;
  std::uint64_t checksum() const { return ad::checksum(params); }
};

// Untrained, trainable network with the toy architecture for `n`.
AuxNet build_aux(AuxName n, std::uint64_t seed);

// Frozen network: from spec.checkpoint, or freshly initialized from `seed`
// when the checkpoint is "random_frozen". Throws ConfigError when a
// checkpoint's task or tap count disagrees with the spec.
AuxNet load_aux(const AuxSpec& spec, std::uint64_t seed = 0);
void save_aux(const std::filesystem::path& path, const AuxNet& net);

// Post-activation outputs of the first n_layers blocks. ContractError when
// the input kind differs from the network's.
std::vector<ad::Tensor> aux_forward_taps(const AuxNet& net, const AuxInput& input);

// (1/n) sum_k mean|a_k - b_k| over paired taps.
ad::Tensor tap_distance(const std::vector<ad::Tensor>& a, const std::vector<ad::Tensor>& b);

ad::Tensor perceptual_loss(const AuxNet& net, const AuxInput& enhanced, const AuxInput& clean);

// mean |enhanced - clean| over [frames, bins].
ad::Tensor l1_stft_loss(const ad::Tensor& enhanced_mag, const ad::Tensor& clean_mag);

// ---------------------------------------------------------------------------
// Seven-term objective.

enum class Term { kEvent, kAcoustic, kSpeaker, kEmotion, kPase, kWav2vec, kL1 };
inline constexpr std::size_t kNumTerms = 7;

std::string_view term_name(Term t);  // aux names plus "l1"
Term parse_term(std::string_view s);
inline Term term_of(AuxName n) { return static_cast<Term>(n); }

using TermSet = std::bitset<kNumTerms>;
TermSet all_terms();
TermSet term_set(std::initializer_list<Term> terms);
TermSet parse_term_set(const std::vector<std::string>& names);
std::vector<std::string> term_names(const TermSet& s);

struct LossWeights {
  std::array<double, kNumTerms> lambda{};

  double& operator[](Term t) { return lambda[static_cast<std::size_t>(t)]; }
  double operator[](Term t) const { return lambda[static_cast<std::size_t>(t)]; }
  void validate() const;  // ConfigError unless finite and >= 0

  // Event, acoustic, speaker, emotion, pase, wav2vec, l1.
  static LossWeights hand_tuned();
  static LossWeights equal();  // 1/7 each
};

// The frozen networks an objective needs, indexed by AuxName.
struct AuxEnsemble {
  std::array<std::optional<AuxNet>, kNumAux> nets;

  bool has(AuxName n) const { return nets[static_cast<std::size_t>(n)].has_value(); }
  const AuxNet& at(AuxName n) const;
  std::uint64_t checksum() const;
};

// Loads `aux_dir/<name>.dnck` for every aux term in `enabled`. ConfigError
// when a file is missing. An empty aux_dir yields random_frozen networks.
AuxEnsemble load_ensemble(const TermSet& enabled, const std::filesystem::path& aux_dir,
                          std::uint64_t seed = 0);

// Enhanced and clean signals in both domains. Waveforms are [samples],
// magnitudes [frames, bins]; each pair must agree in shape.
struct PerlInputs {
  ad::Tensor enhanced_mag, enhanced_wave;
  ad::Tensor clean_mag, clean_wave;
};

// Enhanced output plus the clean reference taken through the same
// analysis/synthesis path.
PerlInputs perl_inputs(const conformer::Enhanced& enhanced, const dsp::Spectrogram& clean);

// Unweighted term values; disabled entries stay undefined.
struct TermLosses {
  TermSet enabled;
  std::array<ad::Tensor, kNumTerms> value;
};

TermLosses compute_terms(const TermSet& enabled, const AuxEnsemble& ensemble, const PerlInputs& in);

struct LossReport {
  TermSet enabled;
  std::array<double, kNumTerms> raw{};
  std::array<double, kNumTerms> weights{};
  std::array<double, kNumTerms> weighted{};
  double total = 0.0;
  ad::Tensor total_tensor;
  std::array<ad::Tensor, kNumTerms> terms;
};

LossReport weigh(const TermLosses& losses, const LossWeights& w);

// ConfigError for an empty enabled set or a missing network.
LossReport perl_total(const LossWeights& w, const TermSet& enabled, const AuxEnsemble& ensemble,
                      const PerlInputs& in);

// ---------------------------------------------------------------------------
// Toy pretraining.

struct PretrainOptions {
  std::size_t epochs = 12;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  std::size_t batch = 4;
  std::size_t max_rows = 0;  // 0 uses every manifest row
};

struct PretrainResult {
  AuxNet net;  // frozen
  std::vector<double> epoch_loss;
};

// Trains on 80% of the rows and scores on the remaining 20%. CorpusError
// when a row lacks the label the task needs.
PretrainResult pretrain_toy_aux(AuxName task, const corpus::Manifest& train, const PretrainOptions& opt);

}  // namespace denoise::aux

#endif  // DENOISE_AUX_ENSEMBLE_AUX_ENSEMBLE_H_
