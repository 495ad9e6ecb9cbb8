// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/aux_ensemble/aux_ensemble.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "denoise/autodiff/adam.h"
#include "denoise/autodiff/checkpoint.h"
#include "denoise/autodiff/init.h"
#include "denoise/autodiff/nn.h"
#include "denoise/autodiff/ops.h"
#include "denoise/autodiff/tape.h"
#include "denoise/errors.h"
#include "denoise/random.h"

namespace denoise::aux {

namespace {

using ad::Tensor;

constexpr double kLogFloor = 1e-3;
constexpr std::size_t kPaseHop = 128;  // samples per pase frame: strides 8 * 4 * 4
constexpr std::size_t kW2vDim = 32;
constexpr std::size_t kW2vHeads = 2;
constexpr std::size_t kW2vBlocks = 4;
constexpr std::size_t kW2vFfn = 64;
constexpr std::size_t kW2vMaxDistance = 32;
constexpr double kW2vSpanStart = 0.05;
constexpr std::size_t kW2vSpan = 5;

struct ConvLayer {
  std::size_t kernel, cin, cout, stride;
};

// Convolution layers per network; `bins` sets the magnitude input width.
std::vector<ConvLayer> conv_stack(AuxName n, std::size_t bins) {
  switch (n) {
    case AuxName::kEvent:
      return {{3, bins, 32, 1}, {3, 32, 32, 2}, {3, 32, 32, 2}, {3, 32, 32, 2}};
    case AuxName::kAcoustic:
      return {{5, bins, 32, 1}, {5, 32, 32, 1}};
    case AuxName::kSpeaker:
      return {{31, 1, 16, 8}, {3, 16, 16, 1}, {3, 16, 16, 1}};
    case AuxName::kEmotion:
      return {{31, 1, 16, 8}, {5, 16, 32, 4}, {5, 32, 32, 2}};
    case AuxName::kPase:
      return {{31, 1, 16, 8}, {5, 16, 32, 4}, {5, 32, 32, 4}, {3, 32, 32, 1}, {3, 32, 32, 1}, {3, 32, 32, 1}};
    case AuxName::kWav2vec:
      return {{15, 1, kW2vDim, 8}, {5, kW2vDim, kW2vDim, 8}};
  }
  throw ContractError("unhandled aux network");
}

// Width of the last tap, which feeds the task head.
std::size_t head_input(AuxName n) {
  switch (n) {
    case AuxName::kSpeaker: return 16;
    default: return 32;
  }
}

std::size_t head_output(AuxName n) {
  switch (n) {
    case AuxName::kEvent: return corpus::kNumNoiseClasses;
    case AuxName::kAcoustic: return corpus::kNumUnits;
    case AuxName::kSpeaker: return corpus::kNumTrainSpeakers;
    case AuxName::kEmotion: return corpus::kNumProsody;
    case AuxName::kPase: return 2;  // log-energy, zero-crossing rate
    case AuxName::kWav2vec: return kW2vDim;
  }
  throw ContractError("unhandled aux network");
}

Tensor conv_relu(const AuxNet& net, const std::string& p, const Tensor& x, std::size_t stride) {
  return ad::relu(ad::conv1d(x, net.param(p + ".w"), net.param(p + ".b"), ad::ConvMode::kFull, stride));
}

Tensor layer_norm(const AuxNet& net, const std::string& p, const Tensor& x) {
  return ad::layer_norm(x, {net.param(p + ".gamma"), net.param(p + ".beta")});
}

Tensor attention_block(const AuxNet& net, const std::string& p, const Tensor& x) {
  ad::AttentionParams a{net.param(p + ".wq"), net.param(p + ".bq"), net.param(p + ".wk"),
                        net.param(p + ".bk"), net.param(p + ".wv"), net.param(p + ".bv"),
                        net.param(p + ".wo"), net.param(p + ".bo"), net.param(p + ".rel_bias")};
  const ad::AttentionOptions opt{kW2vHeads, true, kW2vMaxDistance};
  Tensor h = ad::add(x, ad::attention(layer_norm(net, p + ".ln1", x), a, opt));
  Tensor f = ad::relu(ad::linear(layer_norm(net, p + ".ln2", h), net.param(p + ".f1.w"), net.param(p + ".f1.b")));
  return ad::add(h, ad::linear(f, net.param(p + ".f2.w"), net.param(p + ".f2.b")));
}

Tensor prepare(const AuxNet& net, const AuxInput& in) {
  if (in.kind != net.spec.input_kind) {
    throw ContractError(std::string(aux_name(net.spec.name)) + " expects " +
                        (net.spec.input_kind == InputKind::kWaveform ? "a waveform" : "a magnitude") +
                        " input");
  }
  const auto& s = in.value.shape();
  if (in.kind == InputKind::kWaveform) {
    if (s.size() != 1) throw ContractError("waveform input must be 1-d");
    return ad::reshape(in.value, {1, s[0], 1});
  }
  if (s.size() != 2) throw ContractError("magnitude input must be [frames, bins]");
  return ad::reshape(ad::log(ad::add_scalar(in.value, kLogFloor)), {1, s[0], s[1]});
}

// All taps; `mask` ([1, T', 1], 1 keeps a frame) zeroes wav2vec frames
// before the attention blocks.
std::vector<Tensor> forward(const AuxNet& net, const AuxInput& in, const Tensor* mask = nullptr) {
  Tensor x = prepare(net, in);
  const AuxName n = net.spec.name;
  const auto stack = conv_stack(n, 0);
  std::vector<Tensor> taps;
  switch (n) {
    case AuxName::kEvent:
    case AuxName::kEmotion:
    case AuxName::kPase:
      for (std::size_t k = 0; k < stack.size(); ++k) {
        x = conv_relu(net, "l" + std::to_string(k), x, stack[k].stride);
        taps.push_back(x);
      }
      break;
    case AuxName::kAcoustic:
      for (std::size_t k = 0; k < 2; ++k) {
        x = conv_relu(net, "l" + std::to_string(k), x, stack[k].stride);
        taps.push_back(x);
      }
      taps.push_back(ad::rnn_tanh(x, net.param("l2.wx"), net.param("l2.wh"), net.param("l2.b")));
      break;
    case AuxName::kSpeaker:
      x = conv_relu(net, "l0", x, stack[0].stride);
      taps.push_back(x);
      for (std::size_t k = 1; k < 3; ++k) {
        x = ad::add(x, conv_relu(net, "l" + std::to_string(k), x, 1));
        taps.push_back(x);
      }
      break;
    case AuxName::kWav2vec:
      x = conv_relu(net, "l0a", x, stack[0].stride);
      x = conv_relu(net, "l0b", x, stack[1].stride);
      taps.push_back(x);
      if (mask != nullptr) x = ad::mul(x, *mask);
      for (std::size_t k = 1; k <= kW2vBlocks; ++k) {
        x = attention_block(net, "l" + std::to_string(k), x);
        taps.push_back(x);
      }
      break;
  }
  return taps;
}

struct Builder {
  ad::Initializer init;
  ad::NamedTensors& out;

  void conv(const std::string& p, const ConvLayer& c) {
    out.emplace_back(p + ".w", init.glorot({c.kernel, c.cin, c.cout}, c.kernel * c.cin, c.kernel * c.cout));
    out.emplace_back(p + ".b", init.zeros({c.cout}));
  }
  void linear(const std::string& p, std::size_t in, std::size_t o) {
    out.emplace_back(p + ".w", init.glorot({in, o}, in, o));
    out.emplace_back(p + ".b", init.zeros({o}));
  }
  void norm(const std::string& p, std::size_t d) {
    out.emplace_back(p + ".gamma", init.ones({d}));
    out.emplace_back(p + ".beta", init.zeros({d}));
  }
};

}  // namespace

// ---------------------------------------------------------------------------

std::string_view aux_name(AuxName n) {
  switch (n) {
    case AuxName::kEvent: return "event";
    case AuxName::kAcoustic: return "acoustic";
    case AuxName::kSpeaker: return "speaker";
    case AuxName::kEmotion: return "emotion";
    case AuxName::kPase: return "pase";
    case AuxName::kWav2vec: return "wav2vec";
  }
  return "unknown";
}

AuxName parse_aux_name(std::string_view s) {
  for (AuxName n : kAllAux) {
    if (aux_name(n) == s) return n;
  }
  throw ConfigError("unknown auxiliary network '" + std::string(s) + "'");
}

std::string_view task_name(AuxName n) {
  switch (n) {
    case AuxName::kPase: return "pase_multitask";
    case AuxName::kWav2vec: return "wav2vec_contrastive";
    default: return aux_name(n);
  }
}

AuxName parse_task_name(std::string_view s) {
  for (AuxName n : kAllAux) {
    if (task_name(n) == s || aux_name(n) == s) return n;
  }
  throw ConfigError("unknown pretraining task '" + std::string(s) + "'");
}

AuxSpec default_spec(AuxName n) {
  AuxSpec s;
  s.name = n;
  switch (n) {
    case AuxName::kEvent: s.n_layers = 4; s.input_kind = InputKind::kMagnitude; break;
    case AuxName::kAcoustic: s.n_layers = 3; s.input_kind = InputKind::kMagnitude; break;
    case AuxName::kSpeaker: s.n_layers = 3; s.input_kind = InputKind::kWaveform; break;
    case AuxName::kEmotion: s.n_layers = 3; s.input_kind = InputKind::kWaveform; break;
    case AuxName::kPase: s.n_layers = 6; s.input_kind = InputKind::kWaveform; break;
    case AuxName::kWav2vec: s.n_layers = 5; s.input_kind = InputKind::kWaveform; break;
  }
  return s;
}

const Tensor& AuxNet::param(const std::string& name) const {
  for (const auto& [k, t] : params) {
    if (k == name) return t;
  }
  throw ContractError(std::string(aux_name(spec.name)) + " has no parameter " + name);
}

std::vector<Tensor> AuxNet::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [k, t] : params) out.push_back(t);
  return out;
}

void AuxNet::freeze() {
  for (auto& [k, t] : params) {
    t.set_requires_grad(false);
    t.zero_grad();
  }
}

bool AuxNet::frozen() const {
  return std::none_of(params.begin(), params.end(), [](const auto& p) { return p.second.requires_grad(); });
}

AuxNet build_aux(AuxName n, std::uint64_t seed) {
  AuxNet net;
  net.spec = default_spec(n);
  Builder b{ad::Initializer(derive_seed(seed, 0xa0 + static_cast<std::uint64_t>(n))), net.params};
  const std::size_t bins = dsp::StftConfig{}.bins();
  const auto stack = conv_stack(n, bins);
  switch (n) {
    case AuxName::kWav2vec: {
      b.conv("l0a", stack[0]);
      b.conv("l0b", stack[1]);
      const std::size_t d = kW2vDim;
      for (std::size_t k = 1; k <= kW2vBlocks; ++k) {
        const std::string p = "l" + std::to_string(k);
        b.norm(p + ".ln1", d);
        for (const char* m : {"q", "k", "v", "o"}) {
          net.params.emplace_back(p + ".w" + m, b.init.glorot({d, d}, d, d));
          net.params.emplace_back(p + ".b" + m, b.init.zeros({d}));
        }
        net.params.emplace_back(p + ".rel_bias", b.init.zeros({kW2vHeads, 2 * kW2vMaxDistance + 1}));
        b.norm(p + ".ln2", d);
        b.linear(p + ".f1", d, kW2vFfn);
        b.linear(p + ".f2", kW2vFfn, d);
      }
      break;
    }
    case AuxName::kAcoustic:
      b.conv("l0", stack[0]);
      b.conv("l1", stack[1]);
      net.params.emplace_back("l2.wx", b.init.glorot({32, 32}, 32, 32));
      net.params.emplace_back("l2.wh", b.init.glorot({32, 32}, 32, 32));
      net.params.emplace_back("l2.b", b.init.zeros({32}));
      break;
    default:
      for (std::size_t k = 0; k < stack.size(); ++k) b.conv("l" + std::to_string(k), stack[k]);
  }
  b.linear("head", head_input(n), head_output(n));
  return net;
}

void save_aux(const std::filesystem::path& path, const AuxNet& net) {
  ad::Checkpoint c;
  c.meta = {{"kind", "aux"},
            {"task", task_name(net.spec.name)},
            {"name", aux_name(net.spec.name)},
            {"n_layers", net.spec.n_layers},
            {"input_kind", net.spec.input_kind == InputKind::kWaveform ? "waveform" : "magnitude"},
            {"val_metric", net.val_metric},
            {"val_score", net.val_score}};
  c.tensors = net.params;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ad::save_checkpoint(path, c);
}

AuxNet load_aux(const AuxSpec& spec, std::uint64_t seed) {
  const AuxSpec def = default_spec(spec.name);
  if (spec.n_layers != def.n_layers || spec.input_kind != def.input_kind) {
    throw ConfigError(std::string(aux_name(spec.name)) + " has " + std::to_string(def.n_layers) +
                      " taps, spec asks for " + std::to_string(spec.n_layers));
  }
  AuxNet net = build_aux(spec.name, seed);
  net.spec = spec;
  if (spec.checkpoint != kRandomFrozen) {
    const auto c = ad::load_checkpoint(spec.checkpoint);
    if (c.meta.value("kind", "") != "aux" || c.meta.value("name", "") != aux_name(spec.name)) {
      throw ConfigError(spec.checkpoint + " is not a " + std::string(aux_name(spec.name)) + " checkpoint");
    }
    if (c.meta.value("n_layers", std::size_t{0}) != spec.n_layers) {
      throw ConfigError(spec.checkpoint + ": tap count disagrees with the spec");
    }
    ad::restore_tensors(c, net.params);
    net.val_metric = c.meta.value("val_metric", "");
    net.val_score = c.meta.value("val_score", 0.0);
  }
  net.freeze();
  return net;
}

std::vector<Tensor> aux_forward_taps(const AuxNet& net, const AuxInput& input) {
  auto taps = forward(net, input);
  taps.resize(net.spec.n_layers);
  return taps;
}

Tensor tap_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.empty() || a.size() != b.size()) throw ContractError("tap lists must be non-empty and paired");
  Tensor total = ad::mean_abs_diff(a[0], b[0]);
  for (std::size_t k = 1; k < a.size(); ++k) total = ad::add(total, ad::mean_abs_diff(a[k], b[k]));
  return ad::scale(total, 1.0 / static_cast<double>(a.size()));
}

Tensor perceptual_loss(const AuxNet& net, const AuxInput& enhanced, const AuxInput& clean) {
  if (enhanced.value.shape() != clean.value.shape()) {
    throw ContractError(std::string(aux_name(net.spec.name)) + " loss: enhanced and clean inputs differ in shape");
  }
  return tap_distance(aux_forward_taps(net, enhanced), aux_forward_taps(net, clean));
}

Tensor l1_stft_loss(const Tensor& enhanced_mag, const Tensor& clean_mag) {
  if (enhanced_mag.shape() != clean_mag.shape()) throw ContractError("l1 loss: magnitude shapes differ");
  return ad::mean_abs_diff(enhanced_mag, clean_mag);
}

// ---------------------------------------------------------------------------

std::string_view term_name(Term t) {
  return t == Term::kL1 ? "l1" : aux_name(static_cast<AuxName>(t));
}

Term parse_term(std::string_view s) {
  if (s == "l1") return Term::kL1;
  try {
    return term_of(parse_aux_name(s));
  } catch (const ConfigError&) {
    throw ConfigError("unknown loss term '" + std::string(s) + "'");
  }
}

TermSet all_terms() { return TermSet().set(); }

TermSet term_set(std::initializer_list<Term> terms) {
  TermSet s;
  for (Term t : terms) s.set(static_cast<std::size_t>(t));
  return s;
}

TermSet parse_term_set(const std::vector<std::string>& names) {
  TermSet s;
  for (const auto& n : names) s.set(static_cast<std::size_t>(parse_term(n)));
  return s;
}

std::vector<std::string> term_names(const TermSet& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (s.test(i)) out.emplace_back(term_name(static_cast<Term>(i)));
  }
  return out;
}

void LossWeights::validate() const {
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!std::isfinite(lambda[i]) || lambda[i] < 0.0) {
      throw ConfigError("loss weight for " + std::string(term_name(static_cast<Term>(i))) +
                        " must be finite and non-negative");
    }
  }
}

LossWeights LossWeights::hand_tuned() { return {{5e-03, 1e-04, 1.25e-04, 4e-05, 1.7e-04, 3.5e-05, 1.1e-01}}; }

LossWeights LossWeights::equal() {
  LossWeights w;
  w.lambda.fill(1.0 / static_cast<double>(kNumTerms));
  return w;
}

const AuxNet& AuxEnsemble::at(AuxName n) const {
  const auto& net = nets[static_cast<std::size_t>(n)];
  if (!net) throw ConfigError("no " + std::string(aux_name(n)) + " network loaded");
  return *net;
}

std::uint64_t AuxEnsemble::checksum() const {
  ad::NamedTensors all;
  for (const auto& n : nets) {
    if (n) all.insert(all.end(), n->params.begin(), n->params.end());
  }
  return ad::checksum(all);
}

AuxEnsemble load_ensemble(const TermSet& enabled, const std::filesystem::path& aux_dir, std::uint64_t seed) {
  AuxEnsemble e;
  for (AuxName n : kAllAux) {
    if (!enabled.test(static_cast<std::size_t>(term_of(n)))) continue;
    AuxSpec spec = default_spec(n);
    if (!aux_dir.empty()) {
      const auto path = aux_dir / (std::string(aux_name(n)) + ".dnck");
      if (!std::filesystem::exists(path)) {
        throw ConfigError("missing auxiliary checkpoint " + path.string() + " (run 'aux pretrain')");
      }
      spec.checkpoint = path.string();
    }
    e.nets[static_cast<std::size_t>(n)] = load_aux(spec, seed);
  }
  return e;
}

PerlInputs perl_inputs(const conformer::Enhanced& enhanced, const dsp::Spectrogram& clean) {
  PerlInputs in;
  in.enhanced_mag = enhanced.magnitude.rank() == 3
                        ? ad::reshape(enhanced.magnitude, {enhanced.magnitude.dim(1), enhanced.magnitude.dim(2)})
                        : enhanced.magnitude;
  in.enhanced_wave = enhanced.waveform;
  in.clean_mag = clean.magnitude;
  auto w = dsp::istft(clean);
  const std::size_t n = w.samples.size();
  in.clean_wave = Tensor({n}, std::move(w.samples));
  return in;
}

TermLosses compute_terms(const TermSet& enabled, const AuxEnsemble& ensemble, const PerlInputs& in) {
  if (enabled.none()) throw ConfigError("at least one loss term must be enabled");
  TermLosses out;
  out.enabled = enabled;
  for (AuxName n : kAllAux) {
    const auto t = static_cast<std::size_t>(term_of(n));
    if (!enabled.test(t)) continue;
    const AuxNet& net = ensemble.at(n);
    if (net.spec.input_kind == InputKind::kWaveform) {
      out.value[t] = perceptual_loss(net, AuxInput::waveform(in.enhanced_wave), AuxInput::waveform(in.clean_wave));
    } else {
      out.value[t] = perceptual_loss(net, AuxInput::magnitude(in.enhanced_mag), AuxInput::magnitude(in.clean_mag));
    }
  }
  const auto l1 = static_cast<std::size_t>(Term::kL1);
  if (enabled.test(l1)) out.value[l1] = l1_stft_loss(in.enhanced_mag, in.clean_mag);
  return out;
}

LossReport weigh(const TermLosses& losses, const LossWeights& w) {
  w.validate();
  if (losses.enabled.none()) throw ConfigError("at least one loss term must be enabled");
  LossReport r;
  r.enabled = losses.enabled;
  r.terms = losses.value;
  for (std::size_t i = 0; i < kNumTerms; ++i) {
    if (!losses.enabled.test(i)) continue;
    r.raw[i] = losses.value[i].item();
    r.weights[i] = w.lambda[i];
    r.weighted[i] = w.lambda[i] * r.raw[i];
    Tensor term = ad::scale(losses.value[i], w.lambda[i]);
    r.total_tensor = r.total_tensor.defined() ? ad::add(r.total_tensor, term) : term;
    r.total += r.weighted[i];
  }
  return r;
}

LossReport perl_total(const LossWeights& w, const TermSet& enabled, const AuxEnsemble& ensemble,
                      const PerlInputs& in) {
  w.validate();
  return weigh(compute_terms(enabled, ensemble, in), w);
}

// ---------------------------------------------------------------------------
// Pretraining.

namespace {

struct Sample {
  AuxInput input;
  std::vector<int> labels;
  std::vector<double> targets;  // pase: [frames, 2]
};

Tensor wave_tensor(const dsp::Waveform& w) { return Tensor({w.samples.size()}, w.samples); }

// Per 128-sample chunk: log-energy and zero-crossing rate, affinely scaled
// to roughly unit range.
std::vector<double> pase_targets(const std::vector<double>& x) {
  const std::size_t frames = (x.size() + kPaseHop - 1) / kPaseHop;
  std::vector<double> out;
  out.reserve(2 * frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t b = f * kPaseHop, e = std::min(x.size(), b + kPaseHop);
    double energy = 0;
    std::size_t crossings = 0;
    for (std::size_t i = b; i < e; ++i) {
      energy += x[i] * x[i];
      if (i > b && (x[i] >= 0) != (x[i - 1] >= 0)) ++crossings;
    }
    energy /= static_cast<double>(e - b);
    const double zcr = e - b > 1 ? static_cast<double>(crossings) / static_cast<double>(e - b - 1) : 0.0;
    out.push_back((std::log(energy + 1e-8) + 10.0) / 5.0);
    out.push_back((zcr - 0.2) / 0.2);
  }
  return out;
}

Sample make_sample(AuxName task, const corpus::Manifest& m, std::size_t row) {
  const auto& r = m.rows[row];
  const std::string where = m.path.string() + " row " + std::to_string(row);
  auto u = corpus::load_utterance(m, row);
  Sample s;
  switch (task) {
    case AuxName::kEvent:
      if (r.snr_db == corpus::kNoiseFree) throw CorpusError(where + ": noise-free row has no noise-type label");
      s.input = AuxInput::magnitude(dsp::stft(u.noisy).magnitude);
      s.labels = {static_cast<int>(u.labels.noise_class)};
      break;
    case AuxName::kAcoustic: {
      auto spec = dsp::stft(u.clean);
      if (u.labels.frame_units.size() != spec.magnitude.dim(0)) {
        throw CorpusError(where + ": frame content labels do not cover the utterance");
      }
      s.input = AuxInput::magnitude(spec.magnitude);
      s.labels = u.labels.frame_units;
      break;
    }
    case AuxName::kSpeaker:
      if (u.labels.speaker_id < 0 || u.labels.speaker_id >= corpus::kNumTrainSpeakers) {
        throw CorpusError(where + ": speaker " + std::to_string(u.labels.speaker_id) +
                          " is not a training speaker");
      }
      s.input = AuxInput::waveform(wave_tensor(u.clean));
      s.labels = {u.labels.speaker_id};
      break;
    case AuxName::kEmotion:
      if (u.labels.prosody_class < 0 || u.labels.prosody_class >= corpus::kNumProsody) {
        throw CorpusError(where + ": missing prosody label");
      }
      s.input = AuxInput::waveform(wave_tensor(u.clean));
      s.labels = {u.labels.prosody_class};
      break;
    case AuxName::kPase:
      s.input = AuxInput::waveform(wave_tensor(u.clean));
      s.targets = pase_targets(u.clean.samples);
      break;
    case AuxName::kWav2vec:
      s.input = AuxInput::waveform(wave_tensor(u.clean));
      break;
  }
  return s;
}

struct StepOut {
  Tensor loss;
  std::size_t correct = 0, count = 0;
  std::vector<double> pred, target;  // pase only
};

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t rows = logits.dim(0), cls = logits.dim(1);
  std::size_t ok = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0) continue;
    const auto row = logits.data().subspan(r * cls, cls);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    ok += best == labels[r] ? 1 : 0;
  }
  return ok;
}

StepOut task_step(const AuxNet& net, const Sample& s, Rng& rng) {
  const AuxName n = net.spec.name;
  StepOut out;
  const Tensor& hw = net.param("head.w");
  const Tensor& hb = net.param("head.b");
  if (n == AuxName::kWav2vec) {
    const std::size_t samples = s.input.value.size();
    const std::size_t frames = ((samples + 7) / 8 + 7) / 8;
    std::vector<double> keep(frames, 1.0);
    for (std::size_t t = 0; t < frames; ++t) {
      if (rng.uniform() < kW2vSpanStart) {
        for (std::size_t j = t; j < std::min(frames, t + kW2vSpan); ++j) keep[j] = 0.0;
      }
    }
    if (std::count(keep.begin(), keep.end(), 0.0) == 0) keep[rng.index(frames)] = 0.0;
    const Tensor mask({1, frames, 1}, keep);
    const auto taps = forward(net, s.input, &mask);
    const Tensor c = ad::reshape(ad::linear(taps.back(), hw, hb), {frames, kW2vDim});
    const Tensor z = ad::reshape(taps[0], {frames, kW2vDim}).detach();
    const Tensor logits = ad::scale(ad::matmul(c, ad::transpose2d(z)), 1.0 / std::sqrt(static_cast<double>(kW2vDim)));
    std::vector<int> labels(frames, -1);
    for (std::size_t t = 0; t < frames; ++t) {
      if (keep[t] == 0.0) labels[t] = static_cast<int>(t);
    }
    out.loss = ad::cross_entropy(logits, labels);
    out.correct = count_correct(logits, labels);
    out.count = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 0.0));
    return out;
  }
  const Tensor last = forward(net, s.input).back();
  const std::size_t frames = last.dim(1), width = last.dim(2);
  if (n == AuxName::kPase) {
    const Tensor pred = ad::linear(ad::reshape(last, {frames, width}), hw, hb);
    if (pred.size() != s.targets.size()) throw ContractError("pase target length mismatch");
    out.loss = ad::mean_squared_diff(pred, Tensor({frames, 2}, s.targets));
    out.pred.assign(pred.data().begin(), pred.data().end());
    out.target = s.targets;
    return out;
  }
  Tensor logits;
  if (n == AuxName::kAcoustic) {
    logits = ad::linear(ad::reshape(last, {frames, width}), hw, hb);
  } else {
    logits = ad::linear(ad::mean_axis(last, 1), hw, hb);
  }
  out.loss = ad::cross_entropy(logits, s.labels);
  out.correct = count_correct(logits, s.labels);
  out.count = s.labels.size();
  return out;
}

double r_squared(const std::vector<double>& pred, const std::vector<double>& target) {
  double score = 0;
  for (std::size_t d = 0; d < 2; ++d) {
    double mean = 0;
    std::size_t n = 0;
    for (std::size_t i = d; i < target.size(); i += 2, ++n) mean += target[i];
    mean /= static_cast<double>(std::max<std::size_t>(n, 1));
    double sse = 0, sst = 0;
    for (std::size_t i = d; i < target.size(); i += 2) {
      sse += (pred[i] - target[i]) * (pred[i] - target[i]);
      sst += (target[i] - mean) * (target[i] - mean);
    }
    score += sst > 0 ? 1.0 - sse / sst : 0.0;
  }
  return score / 2.0;
}

}  // namespace

PretrainResult pretrain_toy_aux(AuxName task, const corpus::Manifest& train, const PretrainOptions& opt) {
  const std::size_t rows = opt.max_rows == 0 ? train.rows.size() : std::min(opt.max_rows, train.rows.size());
  std::vector<std::size_t> fit, held;
  for (std::size_t i = 0; i < rows; ++i) (i % 5 == 4 ? held : fit).push_back(i);
  if (fit.empty() || held.empty()) throw CorpusError("aux pretraining needs at least 5 manifest rows");
  if (opt.epochs == 0 || opt.batch == 0) throw ConfigError("aux pretraining needs epochs >= 1 and batch >= 1");

  PretrainResult res;
  AuxNet net = build_aux(task, opt.seed);
  auto params = net.trainable();
  auto state = ad::AdamState::for_params(params);
  const ad::AdamOptions adam{opt.lr};
  Rng order(derive_seed(opt.seed, 0x5be));
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    order.shuffle(fit);
    double loss_sum = 0;
    for (std::size_t b = 0; b < fit.size(); b += opt.batch) {
      const std::size_t e = std::min(fit.size(), b + opt.batch);
      for (auto& p : params) p.zero_grad();
      for (std::size_t i = b; i < e; ++i) {
        Sample s = make_sample(task, train, fit[i]);
        Rng mask_rng(derive_seed(opt.seed, (epoch << 32) | fit[i]));
        ad::Tape tape;
        ad::TapeScope scope(tape);
        StepOut out = task_step(net, s, mask_rng);
        const Tensor scaled = ad::scale(out.loss, 1.0 / static_cast<double>(e - b));
        tape.backward(scaled);
        loss_sum += out.loss.item();
      }
      ad::adam_step(params, state, adam);
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(fit.size()));
  }

  ad::NoGradScope no_grad;
  std::size_t correct = 0, count = 0;
  std::vector<double> pred, target;
  for (std::size_t row : held) {
    Sample s = make_sample(task, train, row);
    Rng mask_rng(derive_seed(opt.seed ^ 0xfeed, row));
    StepOut out = task_step(net, s, mask_rng);
    correct += out.correct;
    count += out.count;
    pred.insert(pred.end(), out.pred.begin(), out.pred.end());
    target.insert(target.end(), out.target.begin(), out.target.end());
  }
  if (task == AuxName::kPase) {
    net.val_metric = "r2";
    net.val_score = r_squared(pred, target);
  } else {
    net.val_metric = task == AuxName::kWav2vec ? "masked_accuracy" : "accuracy";
    net.val_score = count > 0 ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
  }
  net.freeze();
  res.net = std::move(net);
  return res;
}

}  // namespace denoise::aux
