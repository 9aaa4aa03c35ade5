#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgnn/dataset.hpp"
#include "cgnn/errors.hpp"
#include "cgnn/graph_spec.hpp"
#include "cgnn/metrics.hpp"
#include "cgnn/model.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tape.hpp"

namespace cgnn {

enum class OptimizerKind : std::uint8_t { Adam, Sgd };
enum class Precision : std::uint8_t { F32, F64 };
enum class SequenceReduction : std::uint8_t { FinalFrame, MajorityVote };
enum class OrdinalDecodeRule : std::uint8_t { CountAboveHalf, FirstBelowHalf };

std::string to_string(OptimizerKind k);
std::string to_string(Precision p);
std::string to_string(SequenceReduction r);
std::string to_string(OrdinalDecodeRule r);
OptimizerKind optimizer_kind_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);
SequenceReduction sequence_reduction_from_string(const std::string& s);
OrdinalDecodeRule ordinal_decode_rule_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 2e-4;
  std::int64_t epochs = 25;
  std::int64_t sequence_chunk_length = 8;
  std::int64_t batch_size = 1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  bool shuffle = true;
  bool deterministic = true;
  SequenceReduction sequence_reduction = SequenceReduction::FinalFrame;
  OrdinalDecodeRule ordinal_decode_rule = OrdinalDecodeRule::CountAboveHalf;
  ModelHyper hyper;

  bool operator==(const TrainConfig&) const = default;
};

// JSON config document; missing keys take the defaults above, unknown keys
// are rejected. A learning_rate of 0 is allowed programmatically (it makes
// training a no-op) but rejected in config files.
TrainConfig parse_train_config(const std::string& text);
std::string serialize_train_config(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

// First `cls` entries one, remainder zero; classes are 1-based.
std::vector<std::int64_t> ordinal_encode(std::int64_t cls, std::int64_t k);

// CountAboveHalf: max(1, #entries > 0.5). FirstBelowHalf: index of the
// first entry < 0.5 (never below 1); K when none is.
std::int64_t ordinal_decode(const std::vector<double>& probs, OrdinalDecodeRule rule);

// Turns one emission probability vector into a class decision: binary
// thresholds at 0.5, categorical takes the argmax, ordinal applies the
// decode rule.
std::int64_t decode_emission(EmissionKind kind, const std::vector<double>& probs,
                             OrdinalDecodeRule rule);

namespace detail {

template <class Real>
typename Tape<Real>::Id bernoulli_vector_loss(Tape<Real>& tape, typename Tape<Real>::Id probs,
                                              const std::vector<std::int64_t>& targets) {
  // Copy the shape: pushing ops below may reallocate the tape's node
  // storage, which would invalidate a reference into it.
  const Shape shape = tape.value(probs).shape();
  if (shape_numel(shape) != static_cast<std::int64_t>(targets.size())) {
    throw ShapeError("cross entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_str(shape));
  }
  Tensor<Real> y(shape);
  Tensor<Real> one_minus_y(shape);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    y[static_cast<std::int64_t>(i)] = static_cast<Real>(targets[i]);
    one_minus_y[static_cast<std::int64_t>(i)] = static_cast<Real>(1 - targets[i]);
  }
  auto p = tape.clamp(probs, 1e-7, 1.0 - 1e-7);
  auto one = tape.constant(Tensor<Real>::full(shape, Real(1)));
  auto q = tape.add(one, tape.scale(p, -1.0));
  auto hit = tape.hadamard(tape.constant(std::move(y)), tape.log(p));
  auto miss = tape.hadamard(tape.constant(std::move(one_minus_y)), tape.log(q));
  return tape.scale(tape.sum(tape.add(hit, miss)), -1.0);
}

}  // namespace detail

// Cross entropy of one emission against an integer label, as a scalar tape
// node. Probabilities are clamped to [1e-7, 1-1e-7] before any log.
template <class Real>
typename Tape<Real>::Id taped_cross_entropy(Tape<Real>& tape, typename Tape<Real>::Id emission,
                                            std::int64_t target, const EmissionSpec& spec) {
  switch (spec.kind) {
    case EmissionKind::Binary: {
      if (target < 0 || target > 1) {
        throw DataError("binary target " + std::to_string(target) + " out of range");
      }
      return detail::bernoulli_vector_loss(tape, emission, {target});
    }
    case EmissionKind::Categorical: {
      if (target < 0 || target >= spec.classes) {
        throw DataError("categorical target " + std::to_string(target) + " out of range [0," +
                        std::to_string(spec.classes - 1) + "]");
      }
      auto p = tape.clamp(emission, 1e-7, 1.0 - 1e-7);
      return tape.scale(tape.log(tape.slice(p, target, target + 1)), -1.0);
    }
    case EmissionKind::Ordinal: {
      if (target < 1 || target > spec.classes) {
        throw DataError("ordinal target " + std::to_string(target) + " out of range [1," +
                        std::to_string(spec.classes) + "]");
      }
      return detail::bernoulli_vector_loss(tape, emission, ordinal_encode(target, spec.classes));
    }
  }
  throw ContractError("unknown emission kind");
}

template <class Real>
Real cross_entropy(const Tensor<Real>& probabilities, std::int64_t target,
                   const EmissionSpec& spec) {
  Tape<Real> tape;
  auto id = taped_cross_entropy(tape, tape.constant(probabilities), target, spec);
  return tape.value(id)[0];
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline OptimizerSettings optimizer_settings(const TrainConfig& cfg) {
  return {cfg.optimizer, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

// First/second moment buffers, lazily created per parameter.
template <class Real>
struct AdamState {
  std::map<std::string, Tensor<Real>> m, v;
  std::int64_t step_count = 0;
};

template <class Real>
void optimizer_step(std::map<std::string, Tensor<Real>>& params, const GradientMap<Real>& grads,
                    const OptimizerSettings& opt, AdamState<Real>& state) {
  state.step_count += 1;
  for (auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter \"" + name + "\"");
    Tensor<Real>& p = it->second;
    if (!p.same_shape(grad)) {
      throw ShapeError("optimizer: parameter \"" + name + "\" " + shape_str(p.shape()) +
                       " vs gradient " + shape_str(grad.shape()));
    }
    if (opt.kind == OptimizerKind::Sgd) {
      const Real lr = static_cast<Real>(opt.learning_rate);
      for (std::int64_t i = 0; i < p.numel(); ++i) p[i] -= lr * grad[i];
      continue;
    }
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor<Real>::zeros(p.shape())).first;
      state.v.emplace(name, Tensor<Real>::zeros(p.shape()));
    }
    Tensor<Real>& m = mit->second;
    Tensor<Real>& v = state.v.at(name);
    const Real b1 = static_cast<Real>(opt.beta1);
    const Real b2 = static_cast<Real>(opt.beta2);
    const Real lr = static_cast<Real>(opt.learning_rate);
    const Real eps = static_cast<Real>(opt.eps);
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(opt.beta1, state.step_count));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(opt.beta2, state.step_count));
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (Real(1) - b1) * grad[i];
      v[i] = b2 * v[i] + (Real(1) - b2) * grad[i] * grad[i];
      const Real m_hat = m[i] / bc1;
      const Real v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

// Shuffled 90/10-style splits: ceil(ratio*n) training indices, the rest
// test, deterministic from the seed, independent across splits.
std::vector<SplitIndices> split_dataset(std::size_t n, double ratio, std::size_t n_splits,
                                        std::uint64_t seed);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

// Optimizer state plus resume cursor. next_epoch is the first epoch a
// subsequent train() call will run.
template <class Real>
struct TrainState {
  AdamState<Real> opt;
  std::int64_t next_epoch = 0;
};

namespace detail {

struct EmittingConcept {
  std::string concept_name;
  EmissionSpec emission;
};

inline std::vector<EmittingConcept> emitting_concepts(const ConceptGraphSpec& spec) {
  std::vector<EmittingConcept> out;
  for (const auto& n : spec.nodes) {
    if (n.has_emission) out.push_back({n.name, n.emission});
  }
  for (const auto& e : spec.hyperedges) {
    if (e.has_emission) out.push_back({e.name, e.emission});
  }
  return out;
}

template <class Real>
std::vector<Real> frame_as(const std::vector<double>& frame) {
  return std::vector<Real>(frame.begin(), frame.end());
}

}  // namespace detail

// Runs one training chunk on a fresh tape: forward over the chunk frames,
// summed cross entropy, one backward pass. Returns the loss value, the
// gradients, and the carried state values for the next chunk.
template <class Real>
struct ChunkResult {
  Real loss = 0;
  GradientMap<Real> grads;
  RecurrentState<Real> carried;
};

template <class Real>
ChunkResult<Real> run_chunk(const Model<Real>& model, const SequenceRecord& rec,
                            std::size_t frame_begin, std::size_t frame_end,
                            const RecurrentState<Real>* carried_in, RngStream* dropout_rng) {
  Tape<Real> tape;
  BoundModel<Real> bound = bind_model(model, tape, true);
  TapedState<Real> ts = carried_in ? taped_state_from_values(bound, *carried_in)
                                   : taped_initial_state(bound);
  const auto concepts = detail::emitting_concepts(model.spec);
  const std::size_t n_nodes = model.spec.nodes.size();
  const std::size_t n_edges = model.spec.hyperedges.size();
  typename Tape<Real>::Id loss = -1;
  for (std::size_t f = frame_begin; f < frame_end; ++f) {
    DropoutPlan plan = dropout_rng
                           ? sample_dropout_plan(n_nodes, n_edges, model.hyper.dropout, *dropout_rng)
                           : identity_dropout_plan(n_nodes, n_edges);
    auto [next, emissions] = taped_graph_update(bound, ts, detail::frame_as<Real>(rec.frames[f]),
                                                plan);
    ts = std::move(next);
    for (const auto& c : concepts) {
      const LabelTrack& track = rec.labels.at(c.emission.label_track);
      auto term = taped_cross_entropy(tape, emissions.at(c.concept_name), track.at_frame(f), c.emission);
      loss = (loss < 0) ? term : tape.add(loss, term);
    }
  }
  ChunkResult<Real> out;
  if (loss < 0) throw ContractError("chunk produced no loss terms");
  out.loss = tape.value(loss)[0];
  out.grads = tape.backward(loss);
  out.carried = taped_state_values(bound, ts);
  return out;
}

// Loss and summed gradients over a whole sequence without optimizer steps.
// chunk_length <= 0 processes the sequence in one tape.
template <class Real>
std::pair<Real, GradientMap<Real>> sequence_loss_gradients(const Model<Real>& model,
                                                           const SequenceRecord& rec,
                                                           std::int64_t chunk_length) {
  const std::size_t total = rec.frames.size();
  const std::size_t step = chunk_length <= 0 ? total : static_cast<std::size_t>(chunk_length);
  Real loss = 0;
  GradientMap<Real> grads;
  RecurrentState<Real> carried;
  bool have_state = false;
  for (std::size_t begin = 0; begin < total; begin += step) {
    const std::size_t end = std::min(total, begin + step);
    auto chunk = run_chunk<Real>(model, rec, begin, end, have_state ? &carried : nullptr, nullptr);
    loss += chunk.loss;
    carried = std::move(chunk.carried);
    have_state = true;
    for (auto& [name, g] : chunk.grads) {
      auto it = grads.find(name);
      if (it == grads.end()) {
        grads.emplace(name, std::move(g));
      } else {
        for (std::int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
      }
    }
  }
  return {loss, std::move(grads)};
}

// Forward-only sequence loss (dropout off), for finite-difference oracles.
template <class Real>
Real sequence_loss(const Model<Real>& model, const SequenceRecord& rec) {
  Tape<Real> tape;
  BoundModel<Real> bound = bind_model(model, tape, false);
  TapedState<Real> ts = taped_initial_state(bound);
  const auto concepts = detail::emitting_concepts(model.spec);
  const auto plan = identity_dropout_plan(model.spec.nodes.size(), model.spec.hyperedges.size());
  Real loss = 0;
  for (std::size_t f = 0; f < rec.frames.size(); ++f) {
    auto [next, emissions] = taped_graph_update(bound, ts, detail::frame_as<Real>(rec.frames[f]),
                                                plan);
    ts = std::move(next);
    for (const auto& c : concepts) {
      const LabelTrack& track = rec.labels.at(c.emission.label_track);
      auto term = taped_cross_entropy(tape, emissions.at(c.concept_name), track.at_frame(f), c.emission);
      loss += tape.value(term)[0];
    }
  }
  return loss;
}

// Chunked training with state carried across chunk boundaries and
// gradients truncated at them; one optimizer step per chunk. Returns the
// mean per-sequence loss of each epoch it ran (from state.next_epoch up to
// cfg.epochs), leaving state ready for resumption.
template <class Real>
std::vector<double> train(Model<Real>& model, const Dataset& ds, const TrainConfig& cfg,
                          TrainState<Real>& state) {
  if (ds.sequences.empty()) throw DataError("training dataset is empty");
  if (cfg.sequence_chunk_length < 1) throw ConfigError("sequence_chunk_length must be >= 1");
  if (cfg.batch_size != 1) throw ConfigError("only batch_size 1 is supported");
  if (cfg.learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
  {
    const auto problems = check_labels(ds, model.spec);
    if (!problems.empty()) {
      std::string msg = "dataset does not match the graph's emissions:";
      for (const auto& p : problems) msg += "\n  - " + p;
      throw DataError(msg);
    }
  }
  const OptimizerSettings opt = optimizer_settings(cfg);
  const bool use_dropout = model.hyper.dropout.node_rate > 0 ||
                           model.hyper.dropout.edge_rate > 0 ||
                           model.hyper.dropout.modality_rate > 0;
  std::vector<double> history;
  for (std::int64_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(ds.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.shuffle) {
      RngStream shuffle_rng(derive_seed(cfg.seed, 0x736875666cull, static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
    }
    double epoch_loss = 0.0;
    for (std::size_t si : order) {
      const SequenceRecord& rec = ds.sequences[si];
      RngStream dropout_rng(derive_seed(cfg.seed, 0x64726f70ull + static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(si)));
      RecurrentState<Real> carried;
      bool have_state = false;
      const std::size_t total = rec.frames.size();
      const auto step = static_cast<std::size_t>(cfg.sequence_chunk_length);
      for (std::size_t begin = 0; begin < total; begin += step) {
        const std::size_t end = std::min(total, begin + step);
        auto chunk = run_chunk<Real>(model, rec, begin, end, have_state ? &carried : nullptr,
                                     use_dropout ? &dropout_rng : nullptr);
        epoch_loss += static_cast<double>(chunk.loss);
        carried = std::move(chunk.carried);
        have_state = true;
        optimizer_step(model.params, chunk.grads, opt, state.opt);
      }
    }
    history.push_back(epoch_loss / static_cast<double>(ds.sequences.size()));
  }
  state.next_epoch = cfg.epochs;
  return history;
}

constexpr const char* kOptStepEntry = "__opt__.step";
constexpr const char* kOptMomentPrefix = "__opt__.m.";
constexpr const char* kOptVariancePrefix = "__opt__.v.";

// Parameters, spec fingerprint, optimizer moments, and the resume cursor
// in one checkpoint file.
template <class Real>
Checkpoint training_checkpoint(const Model<Real>& model, const TrainState<Real>& state) {
  Checkpoint ck = model_to_checkpoint(model);
  ck.put_scalar(kMetaEpoch, static_cast<double>(state.next_epoch));
  ck.put_scalar(kOptStepEntry, static_cast<double>(state.opt.step_count));
  for (const auto& [name, m] : state.opt.m) ck.put(kOptMomentPrefix + name, m);
  for (const auto& [name, v] : state.opt.v) ck.put(kOptVariancePrefix + name, v);
  return ck;
}

template <class Real>
TrainState<Real> restore_training_state(Model<Real>& model, const Checkpoint& ck) {
  load_model_params(model, ck);
  TrainState<Real> state;
  if (ck.has(kMetaEpoch)) state.next_epoch = static_cast<std::int64_t>(ck.get_scalar(kMetaEpoch));
  if (ck.has(kOptStepEntry)) {
    state.opt.step_count = static_cast<std::int64_t>(ck.get_scalar(kOptStepEntry));
  }
  for (const std::string& name : ck.names()) {
    if (name.rfind(kOptMomentPrefix, 0) == 0) {
      state.opt.m.emplace(name.substr(std::string(kOptMomentPrefix).size()), ck.get<Real>(name));
    } else if (name.rfind(kOptVariancePrefix, 0) == 0) {
      state.opt.v.emplace(name.substr(std::string(kOptVariancePrefix).size()), ck.get<Real>(name));
    }
  }
  return state;
}

struct PredictionRecord {
  std::string sequence_id;
  std::int64_t frame = 0;
  std::string concept_name;
  std::vector<double> probabilities;
  std::int64_t label = 0;
  std::int64_t predicted = 0;
};

// Dropout-free forward pass over every sequence, decoded per concept.
template <class Real>
std::vector<PredictionRecord> predict(const Model<Real>& model, const Dataset& ds,
                                      OrdinalDecodeRule rule) {
  const auto concepts = detail::emitting_concepts(model.spec);
  std::vector<PredictionRecord> out;
  for (const auto& rec : ds.sequences) {
    {
      const auto problems = check_labels(Dataset{{rec}}, model.spec);
      if (!problems.empty()) {
        std::string msg = "dataset does not match the graph's emissions:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw DataError(msg);
      }
    }
    std::vector<std::vector<Real>> frames;
    frames.reserve(rec.frames.size());
    for (const auto& f : rec.frames) frames.push_back(detail::frame_as<Real>(f));
    const auto emissions = forward_sequence(model, frames);
    for (std::size_t f = 0; f < emissions.size(); ++f) {
      for (const auto& c : concepts) {
        const Tensor<Real>& probs = emissions[f].at(c.concept_name);
        PredictionRecord pr;
        pr.sequence_id = rec.id;
        pr.frame = static_cast<std::int64_t>(f);
        pr.concept_name = c.concept_name;
        pr.probabilities.assign(probs.data().begin(), probs.data().end());
        pr.label = rec.labels.at(c.emission.label_track).at_frame(f);
        pr.predicted = decode_emission(c.emission.kind, pr.probabilities, rule);
        out.push_back(std::move(pr));
      }
    }
  }
  return out;
}

// One concept's metric block; fields irrelevant to the emission kind stay
// unset (has_* false).
struct ConceptMetrics {
  std::string concept_name;
  EmissionKind kind = EmissionKind::Binary;
  double frame_accuracy = 0.0;
  double sequence_accuracy = 0.0;
  bool has_balanced = false;
  BalancedAccuracy frame_balanced, sequence_balanced;
  bool has_distance = false;
  double frame_distance = 0.0, sequence_distance = 0.0;
  std::int64_t frames = 0, sequences = 0;
};

struct MetricReport {
  std::vector<ConceptMetrics> concepts;
};

MetricReport score_predictions(const std::vector<PredictionRecord>& predictions,
                               const ConceptGraphSpec& spec, SequenceReduction reduction);
std::string render_metrics_text(const MetricReport& report);
std::string render_metrics_json(const MetricReport& report);
std::string serialize_predictions(const std::vector<PredictionRecord>& predictions);
std::vector<PredictionRecord> parse_predictions(const std::string& text);

template <class Real>
MetricReport evaluate(const Model<Real>& model, const Dataset& ds, SequenceReduction reduction,
                      OrdinalDecodeRule rule) {
  return score_predictions(predict(model, ds, rule), model.spec, reduction);
}

}  // namespace cgnn
