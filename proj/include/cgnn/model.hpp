#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cgnn/checkpoint.hpp"
#include "cgnn/errors.hpp"
#include "cgnn/graph_spec.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tape.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

enum class Aggregation : std::uint8_t { Mean, Sum };

inline std::string to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "sum"; }

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  throw ConfigError("unknown aggregation \"" + s + "\" (expected mean or sum)");
}

// Element dropout zeroes a node/edge's outgoing contribution to every
// aggregation for one frame (survivors are rescaled, so evaluation runs
// unscaled). Modality dropout zeroes one of {frame embedding, incoming
// aggregate} per element update.
struct DropoutConfig {
  double node_rate = 0.2;
  double edge_rate = 0.2;
  double modality_rate = 0.3;

  bool operator==(const DropoutConfig&) const = default;
};

struct ModelHyper {
  std::int64_t encoder_hidden_dim = 64;
  std::int64_t frame_embed_dim = 64;
  Aggregation aggregation = Aggregation::Mean;
  DropoutConfig dropout;

  bool operator==(const ModelHyper&) const = default;
};

// Per-frame dropout decisions, sampled up front so the update itself stays
// a pure function. `*_kept[i]` false means element i is dropped this frame;
// `*_inv` is the inverted-dropout rescale applied to surviving outgoing
// contributions. Modality entries are (frame scale, aggregate scale) pairs
// fed to each element's encoder.
struct DropoutPlan {
  std::vector<bool> node_kept;
  std::vector<bool> edge_kept;
  double node_inv = 1.0;
  double edge_inv = 1.0;
  std::vector<std::pair<double, double>> node_modality;
  std::vector<std::pair<double, double>> edge_modality;
};

inline DropoutPlan identity_dropout_plan(std::size_t n_nodes, std::size_t n_edges) {
  DropoutPlan plan;
  plan.node_kept.assign(n_nodes, true);
  plan.edge_kept.assign(n_edges, true);
  plan.node_modality.assign(n_nodes, {1.0, 1.0});
  plan.edge_modality.assign(n_edges, {1.0, 1.0});
  return plan;
}

inline DropoutPlan sample_dropout_plan(std::size_t n_nodes, std::size_t n_edges,
                                       const DropoutConfig& cfg, RngStream& rng) {
  DropoutPlan plan = identity_dropout_plan(n_nodes, n_edges);
  if (cfg.node_rate > 0.0) {
    plan.node_inv = 1.0 / (1.0 - cfg.node_rate);
    for (std::size_t i = 0; i < n_nodes; ++i) plan.node_kept[i] = rng.uniform() >= cfg.node_rate;
  }
  if (cfg.edge_rate > 0.0) {
    plan.edge_inv = 1.0 / (1.0 - cfg.edge_rate);
    for (std::size_t k = 0; k < n_edges; ++k) plan.edge_kept[k] = rng.uniform() >= cfg.edge_rate;
  }
  if (cfg.modality_rate > 0.0) {
    const double inv = 1.0 / (1.0 - cfg.modality_rate / 2.0);
    auto draw = [&]() -> std::pair<double, double> {
      if (rng.uniform() < cfg.modality_rate) {
        return rng.uniform_int(2) == 0 ? std::pair{0.0, inv} : std::pair{inv, 0.0};
      }
      return {inv, inv};
    };
    for (auto& m : plan.node_modality) m = draw();
    for (auto& m : plan.edge_modality) m = draw();
  }
  return plan;
}

// Encoder sharing under the three directionality modes. Nodes collapse to
// one key ("shared"), to their dominant membership role, or to themselves;
// edges to "shared", directed/undirected, or themselves.
inline std::string node_encoder_key(const ConceptGraphSpec& spec, std::size_t node_index) {
  const std::string& name = spec.nodes[node_index].name;
  switch (spec.directionality_mode) {
    case DirectionalityMode::UndirectedEncoding:
      return "shared";
    case DirectionalityMode::IndividualEncoders:
      return name;
    case DirectionalityMode::DirectedEncoders: {
      bool is_output = false, is_input = false;
      for (const auto& e : spec.hyperedges) {
        for (const auto& m : e.members) {
          if (m.node != name) continue;
          if (m.role == MemberRole::Output) is_output = true;
          if (m.role == MemberRole::Input) is_input = true;
        }
      }
      return is_output ? "out" : is_input ? "in" : "none";
    }
  }
  return "shared";
}

inline std::string edge_encoder_key(const ConceptGraphSpec& spec, std::size_t edge_index) {
  const HyperedgeSpec& e = spec.hyperedges[edge_index];
  switch (spec.directionality_mode) {
    case DirectionalityMode::UndirectedEncoding: return "shared";
    case DirectionalityMode::IndividualEncoders: return e.name;
    case DirectionalityMode::DirectedEncoders: return e.is_directed() ? "dir" : "undir";
  }
  return "shared";
}

enum class InitKind : std::uint8_t { Uniform, One, Zero };

struct ParamInfo {
  std::string name;
  Shape shape;
  InitKind init = InitKind::Uniform;
  std::int64_t fan_in = 1;
};

// The full parameter inventory for (spec, hyper), in creation order. Both
// initialization and checkpoint verification walk this list, so the
// inventory is one deterministic function of the configuration.
inline std::vector<ParamInfo> build_param_layout(const ConceptGraphSpec& spec,
                                                 const ModelHyper& hyper) {
  std::vector<ParamInfo> layout;
  const std::int64_t H = hyper.encoder_hidden_dim;
  const std::int64_t F = hyper.frame_embed_dim;
  const std::int64_t G = spec.global_dim;
  const std::int64_t dn = spec.nodes.empty() ? 0 : spec.nodes.front().state_dim;
  const std::int64_t de = spec.hyperedges.empty() ? 0 : spec.hyperedges.front().state_dim;

  auto perceptron = [&](const std::string& prefix, std::int64_t in, std::int64_t out) {
    layout.push_back({prefix + ".l1.w", Shape{H, in}, InitKind::Uniform, in});
    layout.push_back({prefix + ".l1.b", Shape{H}, InitKind::Uniform, in});
    layout.push_back({prefix + ".l2.w", Shape{out, H}, InitKind::Uniform, H});
    layout.push_back({prefix + ".l2.b", Shape{out}, InitKind::Uniform, H});
  };
  auto lstm = [&](const std::string& prefix, std::int64_t dim) {
    for (const char* gate : {"i", "f", "o", "g"}) {
      const bool forget = gate[0] == 'f';
      layout.push_back({prefix + ".w" + gate, Shape{dim, dim}, InitKind::Uniform, dim});
      layout.push_back({prefix + ".u" + gate, Shape{dim, dim}, InitKind::Uniform, dim});
      layout.push_back(
          {prefix + ".b" + gate, Shape{dim}, forget ? InitKind::One : InitKind::Uniform, dim});
    }
  };

  perceptron("fe", spec.input_dim, F);
  for (const auto& n : spec.nodes) lstm("node." + n.name + ".lstm", n.state_dim);
  for (const auto& e : spec.hyperedges) lstm("edge." + e.name + ".lstm", e.state_dim);
  lstm("global.lstm", G);
  layout.push_back({"global.init.h", Shape{G}, InitKind::Zero, G});
  layout.push_back({"global.init.c", Shape{G}, InitKind::Zero, G});

  std::vector<std::string> node_keys, edge_keys;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const std::string key = node_encoder_key(spec, i);
    if (std::find(node_keys.begin(), node_keys.end(), key) == node_keys.end()) {
      node_keys.push_back(key);
    }
  }
  for (std::size_t k = 0; k < spec.hyperedges.size(); ++k) {
    const std::string key = edge_encoder_key(spec, k);
    if (std::find(edge_keys.begin(), edge_keys.end(), key) == edge_keys.end()) {
      edge_keys.push_back(key);
    }
  }
  // Encoder context: own hidden, incoming aggregate, previous global
  // hidden, frame embedding. A graph without edges has no incoming
  // aggregate for nodes.
  const std::int64_t node_enc_in = dn + (spec.hyperedges.empty() ? 0 : de) + G + F;
  const std::int64_t edge_enc_in = de + dn + G + F;
  for (const auto& key : node_keys) perceptron("enc.node." + key, node_enc_in, dn);
  for (const auto& key : edge_keys) perceptron("enc.edge." + key, edge_enc_in, de);
  perceptron("global.enc", dn + F, G);

  for (const auto& n : spec.nodes) {
    if (!n.has_emission) continue;
    const std::int64_t out = n.emission.output_dim();
    layout.push_back({"emit." + n.name + ".w", Shape{out, n.state_dim}, InitKind::Uniform,
                      n.state_dim});
    layout.push_back({"emit." + n.name + ".b", Shape{out}, InitKind::Uniform, n.state_dim});
  }
  for (const auto& e : spec.hyperedges) {
    if (!e.has_emission) continue;
    const std::int64_t out = e.emission.output_dim();
    layout.push_back({"emit." + e.name + ".w", Shape{out, e.state_dim}, InitKind::Uniform,
                      e.state_dim});
    layout.push_back({"emit." + e.name + ".b", Shape{out}, InitKind::Uniform, e.state_dim});
  }
  return layout;
}

template <class Real>
struct Model {
  ConceptGraphSpec spec;
  ModelHyper hyper;
  std::map<std::string, Tensor<Real>> params;

  const Tensor<Real>& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("model has no parameter \"" + name + "\"");
    return it->second;
  }
};

template <class Real>
Model<Real> init_model(const ConceptGraphSpec& spec, const ModelHyper& hyper, std::uint64_t seed) {
  const auto report = validate_spec(spec);
  if (!report.empty()) {
    std::string msg = "cannot build model from invalid spec:";
    for (const auto& line : report) msg += "\n  - " + line;
    throw ConfigError(msg);
  }
  Model<Real> model;
  model.spec = spec;
  model.hyper = hyper;
  RngStream rng(derive_seed(seed, 0x6d6f64656c));
  for (const ParamInfo& info : build_param_layout(spec, hyper)) {
    Tensor<Real> t(info.shape);
    switch (info.init) {
      case InitKind::Uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(info.fan_in));
        for (std::int64_t i = 0; i < t.numel(); ++i) {
          t[i] = static_cast<Real>(rng.uniform(-bound, bound));
        }
        break;
      }
      case InitKind::One:
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = Real(1);
        break;
      case InitKind::Zero:
        break;
    }
    model.params.emplace(info.name, std::move(t));
  }
  return model;
}

// Hidden and cell vectors for every temporal module plus the frame index.
template <class Real>
struct RecurrentState {
  std::vector<Tensor<Real>> node_h, node_c;
  std::vector<Tensor<Real>> edge_h, edge_c;
  Tensor<Real> global_h, global_c;
  std::int64_t t = 0;
};

template <class Real>
RecurrentState<Real> initial_state(const Model<Real>& model) {
  RecurrentState<Real> st;
  for (const auto& n : model.spec.nodes) {
    st.node_h.push_back(Tensor<Real>::zeros(Shape{n.state_dim}));
    st.node_c.push_back(Tensor<Real>::zeros(Shape{n.state_dim}));
  }
  for (const auto& e : model.spec.hyperedges) {
    st.edge_h.push_back(Tensor<Real>::zeros(Shape{e.state_dim}));
    st.edge_c.push_back(Tensor<Real>::zeros(Shape{e.state_dim}));
  }
  st.global_h = model.param("global.init.h");
  st.global_c = model.param("global.init.c");
  st.t = 0;
  return st;
}

// Model bound onto a tape: every parameter becomes a leaf (trainable
// leaves carry requires_grad so backward() reports them by name).
template <class Real>
struct BoundModel {
  const Model<Real>* model = nullptr;
  Tape<Real>* tape = nullptr;
  bool trainable = false;
  std::map<std::string, typename Tape<Real>::Id> param_ids;

  typename Tape<Real>::Id pid(const std::string& name) const {
    auto it = param_ids.find(name);
    if (it == param_ids.end()) throw ContractError("unbound parameter \"" + name + "\"");
    return it->second;
  }
};

template <class Real>
BoundModel<Real> bind_model(const Model<Real>& model, Tape<Real>& tape, bool trainable) {
  BoundModel<Real> bound;
  bound.model = &model;
  bound.tape = &tape;
  bound.trainable = trainable;
  for (const auto& [name, tensor] : model.params) {
    Tensor<Real> leaf = tensor;
    leaf.requires_grad = trainable;
    bound.param_ids.emplace(name, tape.leaf(std::move(leaf), name));
  }
  return bound;
}

// RecurrentState as tape ids, so chunked training can thread state across
// frames while gradients stay within one tape.
template <class Real>
struct TapedState {
  std::vector<typename Tape<Real>::Id> node_h, node_c, edge_h, edge_c;
  typename Tape<Real>::Id global_h = -1, global_c = -1;
  std::int64_t t = 0;
};

// Fresh start-of-sequence state: zero node/edge states, learned global
// initial state (trainable when the binding is).
template <class Real>
TapedState<Real> taped_initial_state(BoundModel<Real>& bound) {
  TapedState<Real> st;
  for (const auto& n : bound.model->spec.nodes) {
    st.node_h.push_back(bound.tape->zeros(Shape{n.state_dim}));
    st.node_c.push_back(bound.tape->zeros(Shape{n.state_dim}));
  }
  for (const auto& e : bound.model->spec.hyperedges) {
    st.edge_h.push_back(bound.tape->zeros(Shape{e.state_dim}));
    st.edge_c.push_back(bound.tape->zeros(Shape{e.state_dim}));
  }
  st.global_h = bound.pid("global.init.h");
  st.global_c = bound.pid("global.init.c");
  st.t = 0;
  return st;
}

// Rebinds carried state values as constants: gradients do not flow past
// this point, which is exactly the truncation boundary between chunks.
template <class Real>
TapedState<Real> taped_state_from_values(BoundModel<Real>& bound, const RecurrentState<Real>& st) {
  TapedState<Real> ts;
  for (const auto& h : st.node_h) ts.node_h.push_back(bound.tape->constant(h));
  for (const auto& c : st.node_c) ts.node_c.push_back(bound.tape->constant(c));
  for (const auto& h : st.edge_h) ts.edge_h.push_back(bound.tape->constant(h));
  for (const auto& c : st.edge_c) ts.edge_c.push_back(bound.tape->constant(c));
  ts.global_h = bound.tape->constant(st.global_h);
  ts.global_c = bound.tape->constant(st.global_c);
  ts.t = st.t;
  return ts;
}

template <class Real>
RecurrentState<Real> taped_state_values(const BoundModel<Real>& bound, const TapedState<Real>& ts) {
  RecurrentState<Real> st;
  for (auto id : ts.node_h) st.node_h.push_back(bound.tape->value(id));
  for (auto id : ts.node_c) st.node_c.push_back(bound.tape->value(id));
  for (auto id : ts.edge_h) st.edge_h.push_back(bound.tape->value(id));
  for (auto id : ts.edge_c) st.edge_c.push_back(bound.tape->value(id));
  st.global_h = bound.tape->value(ts.global_h);
  st.global_c = bound.tape->value(ts.global_c);
  st.t = ts.t;
  return st;
}

namespace detail {

template <class Real>
typename Tape<Real>::Id apply_perceptron(BoundModel<Real>& bound, const std::string& prefix,
                                         typename Tape<Real>::Id x) {
  Tape<Real>& tape = *bound.tape;
  auto hidden = tape.tanh(tape.add(tape.matmul(bound.pid(prefix + ".l1.w"), x),
                                   bound.pid(prefix + ".l1.b")));
  return tape.add(tape.matmul(bound.pid(prefix + ".l2.w"), hidden), bound.pid(prefix + ".l2.b"));
}

template <class Real>
std::pair<typename Tape<Real>::Id, typename Tape<Real>::Id> apply_lstm(
    BoundModel<Real>& bound, const std::string& prefix, typename Tape<Real>::Id h,
    typename Tape<Real>::Id c, typename Tape<Real>::Id x) {
  Tape<Real>& tape = *bound.tape;
  auto gate = [&](const char* g) {
    return tape.add(tape.add(tape.matmul(bound.pid(prefix + ".w" + g), x),
                             tape.matmul(bound.pid(prefix + ".u" + g), h)),
                    bound.pid(prefix + ".b" + g));
  };
  auto i = tape.sigmoid(gate("i"));
  auto f = tape.sigmoid(gate("f"));
  auto o = tape.sigmoid(gate("o"));
  auto g = tape.tanh(gate("g"));
  auto c_next = tape.add(tape.hadamard(f, c), tape.hadamard(i, g));
  auto h_next = tape.hadamard(o, tape.tanh(c_next));
  return {h_next, c_next};
}

// Scaled mean/sum of contributions; factors fold dropout masks and
// inverted-dropout rescaling. A factor-1 contribution skips the scale op.
template <class Real>
typename Tape<Real>::Id aggregate_ids(Tape<Real>& tape,
                                      const std::vector<typename Tape<Real>::Id>& ids,
                                      const std::vector<double>& factors, Aggregation agg) {
  typename Tape<Real>::Id acc = -1;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto term = factors[i] == 1.0 ? ids[i] : tape.scale(ids[i], factors[i]);
    acc = (i == 0) ? term : tape.add(acc, term);
  }
  if (agg == Aggregation::Mean && ids.size() > 1) {
    acc = tape.scale(acc, 1.0 / static_cast<double>(ids.size()));
  }
  return acc;
}

template <class Real>
typename Tape<Real>::Id apply_emission(BoundModel<Real>& bound, const std::string& concept_name,
                                       EmissionKind kind, typename Tape<Real>::Id hidden) {
  Tape<Real>& tape = *bound.tape;
  auto logits = tape.add(tape.matmul(bound.pid("emit." + concept_name + ".w"), hidden),
                         bound.pid("emit." + concept_name + ".b"));
  switch (kind) {
    case EmissionKind::Binary:
    case EmissionKind::Ordinal:
      return tape.sigmoid(logits);
    case EmissionKind::Categorical:
      return tape.softmax(logits);
  }
  throw ContractError("unknown emission kind");
}

}  // namespace detail

// One frame of message passing, on the tape: node-to-edge aggregation,
// edge updates, edge-to-node aggregation, node updates, global update,
// then emissions from the updated hidden states.
template <class Real>
std::pair<TapedState<Real>, std::map<std::string, typename Tape<Real>::Id>> taped_graph_update(
    BoundModel<Real>& bound, const TapedState<Real>& st, const std::vector<Real>& frame,
    const DropoutPlan& plan) {
  using Id = typename Tape<Real>::Id;
  const ConceptGraphSpec& spec = bound.model->spec;
  Tape<Real>& tape = *bound.tape;

  if (static_cast<std::int64_t>(frame.size()) != spec.input_dim) {
    throw ShapeError("frame has " + std::to_string(frame.size()) + " features, spec expects " +
                     std::to_string(spec.input_dim));
  }
  const Aggregation agg = bound.model->hyper.aggregation;

  std::map<std::string, std::size_t> node_index;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) node_index[spec.nodes[i].name] = i;

  Id frame_leaf = tape.constant(Tensor<Real>(Shape{spec.input_dim},
                                             std::vector<Real>(frame.begin(), frame.end())));
  Id frame_embed = detail::apply_perceptron(bound, "fe", frame_leaf);
  Id u_prev = st.global_h;

  auto modality_scaled = [&](Id id, double factor) {
    return factor == 1.0 ? id : tape.scale(id, factor);
  };

  // Node-to-edge aggregation: input-role member states for directed edges,
  // all member states otherwise. Dropped nodes contribute zero, survivors
  // are rescaled.
  std::vector<Id> edge_incoming(spec.hyperedges.size(), Id{-1});
  for (std::size_t k = 0; k < spec.hyperedges.size(); ++k) {
    const HyperedgeSpec& e = spec.hyperedges[k];
    const bool directed = e.is_directed();
    std::vector<Id> ids;
    std::vector<double> factors;
    for (const auto& m : e.members) {
      if (directed && m.role != MemberRole::Input) continue;
      const std::size_t i = node_index.at(m.node);
      ids.push_back(st.node_h[i]);
      factors.push_back(plan.node_kept[i] ? plan.node_inv : 0.0);
    }
    edge_incoming[k] = detail::aggregate_ids(tape, ids, factors, agg);
  }

  // Edge updates. A dropped edge still advances, with its incoming
  // aggregate zeroed.
  TapedState<Real> next = st;
  next.t = st.t + 1;
  for (std::size_t k = 0; k < spec.hyperedges.size(); ++k) {
    const HyperedgeSpec& e = spec.hyperedges[k];
    const auto [frame_scale, agg_scale] = plan.edge_modality[k];
    Id incoming = modality_scaled(edge_incoming[k], plan.edge_kept[k] ? agg_scale : 0.0);
    Id x = detail::apply_perceptron(
        bound, "enc.edge." + edge_encoder_key(spec, k),
        tape.concat({st.edge_h[k], incoming, u_prev, modality_scaled(frame_embed, frame_scale)}));
    std::tie(next.edge_h[k], next.edge_c[k]) =
        detail::apply_lstm(bound, "edge." + e.name + ".lstm", st.edge_h[k], st.edge_c[k], x);
  }

  // Edge-to-node aggregation over updated edge states, then node updates.
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const ConceptNodeSpec& n = spec.nodes[i];
    std::vector<Id> ids;
    std::vector<double> factors;
    for (std::size_t k = 0; k < spec.hyperedges.size(); ++k) {
      for (const auto& m : spec.hyperedges[k].members) {
        if (m.node != n.name) continue;
        ids.push_back(next.edge_h[k]);
        factors.push_back(plan.edge_kept[k] ? plan.edge_inv : 0.0);
        break;
      }
    }
    const auto [frame_scale, agg_scale] = plan.node_modality[i];
    std::vector<Id> enc_parts;
    enc_parts.push_back(st.node_h[i]);
    if (!spec.hyperedges.empty()) {
      Id incoming = ids.empty() ? tape.zeros(Shape{spec.hyperedges.front().state_dim})
                                : detail::aggregate_ids(tape, ids, factors, agg);
      enc_parts.push_back(modality_scaled(incoming, plan.node_kept[i] ? agg_scale : 0.0));
    }
    enc_parts.push_back(u_prev);
    enc_parts.push_back(modality_scaled(frame_embed, frame_scale));
    Id x = detail::apply_perceptron(bound, "enc.node." + node_encoder_key(spec, i),
                                    tape.concat(enc_parts));
    std::tie(next.node_h[i], next.node_c[i]) =
        detail::apply_lstm(bound, "node." + n.name + ".lstm", st.node_h[i], st.node_c[i], x);
  }

  // Global update from the mean of updated node states plus the frame
  // embedding; dropped nodes contribute zero here as well.
  {
    std::vector<Id> ids;
    std::vector<double> factors;
    for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
      ids.push_back(next.node_h[i]);
      factors.push_back(plan.node_kept[i] ? plan.node_inv : 0.0);
    }
    Id node_mean = detail::aggregate_ids(tape, ids, factors, Aggregation::Mean);
    Id gx = detail::apply_perceptron(bound, "global.enc", tape.concat({node_mean, frame_embed}));
    std::tie(next.global_h, next.global_c) =
        detail::apply_lstm(bound, "global.lstm", st.global_h, st.global_c, gx);
  }

  std::map<std::string, Id> emissions;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const ConceptNodeSpec& n = spec.nodes[i];
    if (!n.has_emission) continue;
    emissions[n.name] = detail::apply_emission(bound, n.name, n.emission.kind, next.node_h[i]);
  }
  for (std::size_t k = 0; k < spec.hyperedges.size(); ++k) {
    const HyperedgeSpec& e = spec.hyperedges[k];
    if (!e.has_emission) continue;
    emissions[e.name] = detail::apply_emission(bound, e.name, e.emission.kind, next.edge_h[k]);
  }
  return {std::move(next), std::move(emissions)};
}

template <class Real>
using EmissionMap = std::map<std::string, Tensor<Real>>;

// Eager one-frame update: builds a throwaway tape so inference runs the
// same kernels as training.
template <class Real>
std::pair<RecurrentState<Real>, EmissionMap<Real>> graph_update(
    const Model<Real>& model, const RecurrentState<Real>& state, const std::vector<Real>& frame,
    const DropoutPlan* plan = nullptr) {
  Tape<Real> tape;
  BoundModel<Real> bound = bind_model(model, tape, false);
  TapedState<Real> ts = taped_state_from_values(bound, state);
  const DropoutPlan identity =
      plan ? DropoutPlan{} : identity_dropout_plan(model.spec.nodes.size(),
                                                   model.spec.hyperedges.size());
  auto [next, emission_ids] = taped_graph_update(bound, ts, frame, plan ? *plan : identity);
  EmissionMap<Real> emissions;
  for (const auto& [concept_name, id] : emission_ids) emissions[concept_name] = tape.value(id);
  return {taped_state_values(bound, next), std::move(emissions)};
}

template <class Real>
std::vector<EmissionMap<Real>> forward_sequence(const Model<Real>& model,
                                                const std::vector<std::vector<Real>>& frames) {
  if (frames.empty()) throw ContractError("forward_sequence requires a nonempty sequence");
  RecurrentState<Real> state = initial_state(model);
  std::vector<EmissionMap<Real>> out;
  out.reserve(frames.size());
  for (const auto& frame : frames) {
    auto [next, emissions] = graph_update(model, state, frame);
    state = std::move(next);
    out.push_back(std::move(emissions));
  }
  return out;
}

// Standalone LSTM cell view over named tensors, for direct unit-level use.
template <class Real>
struct LSTMCell {
  Tensor<Real> wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg;

  static LSTMCell zero(std::int64_t dim) {
    LSTMCell cell;
    for (auto* m : {&cell.wi, &cell.wf, &cell.wo, &cell.wg}) *m = Tensor<Real>::zeros(Shape{dim, dim});
    for (auto* m : {&cell.ui, &cell.uf, &cell.uo, &cell.ug}) *m = Tensor<Real>::zeros(Shape{dim, dim});
    for (auto* b : {&cell.bi, &cell.bf, &cell.bo, &cell.bg}) *b = Tensor<Real>::zeros(Shape{dim});
    return cell;
  }
};

// Runs one gated update through the same taped kernels used everywhere
// else. Gradient checks can bind the same cell parameters on their own
// tape instead.
template <class Real>
std::pair<Tensor<Real>, Tensor<Real>> lstm_step(const LSTMCell<Real>& cell, const Tensor<Real>& h,
                                                const Tensor<Real>& c, const Tensor<Real>& x) {
  Tape<Real> tape;
  auto leaf = [&](const Tensor<Real>& t) { return tape.constant(t); };
  auto gate = [&](const Tensor<Real>& w, const Tensor<Real>& u, const Tensor<Real>& b) {
    return tape.add(tape.add(tape.matmul(leaf(w), leaf(x)), tape.matmul(leaf(u), leaf(h))),
                    leaf(b));
  };
  auto i = tape.sigmoid(gate(cell.wi, cell.ui, cell.bi));
  auto f = tape.sigmoid(gate(cell.wf, cell.uf, cell.bf));
  auto o = tape.sigmoid(gate(cell.wo, cell.uo, cell.bo));
  auto g = tape.tanh(gate(cell.wg, cell.ug, cell.bg));
  auto c_next = tape.add(tape.hadamard(f, leaf(c)), tape.hadamard(i, g));
  auto h_next = tape.hadamard(o, tape.tanh(c_next));
  return {tape.value(h_next), tape.value(c_next)};
}

// Plain aggregation entry points matching the message-passing semantics.
template <class Real>
Tensor<Real> aggregate_states(const std::vector<Tensor<Real>>& states, Aggregation agg) {
  if (states.empty()) throw ContractError("aggregate_states requires at least one input");
  Tensor<Real> acc = states.front();
  for (std::size_t i = 1; i < states.size(); ++i) {
    if (!acc.same_shape(states[i])) {
      throw ShapeError("aggregate: mixed shapes " + shape_str(acc.shape()) + " and " +
                       shape_str(states[i].shape()));
    }
    for (std::int64_t j = 0; j < acc.numel(); ++j) acc[j] += states[i][j];
  }
  if (agg == Aggregation::Mean) {
    for (std::int64_t j = 0; j < acc.numel(); ++j) acc[j] /= static_cast<Real>(states.size());
  }
  return acc;
}

// Aggregates member node states feeding a hyperedge update: input-role
// members only when the edge is directed.
template <class Real>
Tensor<Real> aggregate_nodes_for_edge(const ConceptGraphSpec& spec, std::size_t edge_index,
                                      const std::vector<Tensor<Real>>& node_states,
                                      Aggregation agg) {
  const HyperedgeSpec& e = spec.hyperedges.at(edge_index);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) index[spec.nodes[i].name] = i;
  std::vector<Tensor<Real>> picked;
  for (const auto& m : e.members) {
    if (e.is_directed() && m.role != MemberRole::Input) continue;
    picked.push_back(node_states.at(index.at(m.node)));
  }
  return aggregate_states(picked, agg);
}

// Aggregates updated incident edge states for a node; an isolated node
// receives a zero vector.
template <class Real>
Tensor<Real> aggregate_edges_for_node(const ConceptGraphSpec& spec, std::size_t node_index,
                                      const std::vector<Tensor<Real>>& edge_states,
                                      Aggregation agg) {
  const std::string& name = spec.nodes.at(node_index).name;
  std::vector<Tensor<Real>> picked;
  for (std::size_t k = 0; k < spec.hyperedges.size(); ++k) {
    for (const auto& m : spec.hyperedges[k].members) {
      if (m.node == name) {
        picked.push_back(edge_states.at(k));
        break;
      }
    }
  }
  if (picked.empty()) {
    const std::int64_t de = spec.hyperedges.empty() ? spec.nodes.at(node_index).state_dim
                                                    : spec.hyperedges.front().state_dim;
    return Tensor<Real>::zeros(Shape{de});
  }
  return aggregate_states(picked, agg);
}

// Single fully connected readout from a hidden state.
template <class Real>
Tensor<Real> emit(const Tensor<Real>& w, const Tensor<Real>& b, const Tensor<Real>& hidden,
                  EmissionKind kind) {
  Tape<Real> tape;
  auto logits = tape.add(tape.matmul(tape.constant(w), tape.constant(hidden)), tape.constant(b));
  switch (kind) {
    case EmissionKind::Binary:
    case EmissionKind::Ordinal:
      return tape.value(tape.sigmoid(logits));
    case EmissionKind::Categorical:
      return tape.value(tape.softmax(logits));
  }
  throw ContractError("unknown emission kind");
}

template <class Real>
Tensor<Real> encode_frame(const Model<Real>& model, const std::vector<Real>& features) {
  Tape<Real> tape;
  BoundModel<Real> bound = bind_model(model, tape, false);
  if (static_cast<std::int64_t>(features.size()) != model.spec.input_dim) {
    throw ShapeError("frame has " + std::to_string(features.size()) + " features, spec expects " +
                     std::to_string(model.spec.input_dim));
  }
  auto x = tape.constant(
      Tensor<Real>(Shape{model.spec.input_dim}, std::vector<Real>(features.begin(), features.end())));
  return tape.value(detail::apply_perceptron(bound, "fe", x));
}

constexpr const char* kMetaSpecHashHi = "__meta__.spec_hash_hi";
constexpr const char* kMetaSpecHashLo = "__meta__.spec_hash_lo";
constexpr const char* kMetaEpoch = "__meta__.epoch";

// Parameters plus the spec fingerprint. Training adds optimizer state and
// progress under the reserved "__opt__."/"__meta__." prefixes.
template <class Real>
Checkpoint model_to_checkpoint(const Model<Real>& model) {
  Checkpoint ck;
  for (const auto& [name, tensor] : model.params) ck.put(name, tensor);
  const std::uint64_t hash = spec_hash(model.spec);
  ck.put_scalar(kMetaSpecHashHi, static_cast<double>(hash >> 32));
  ck.put_scalar(kMetaSpecHashLo, static_cast<double>(hash & 0xffffffffull));
  return ck;
}

inline bool checkpoint_matches_spec(const Checkpoint& ck, const ConceptGraphSpec& spec) {
  if (!ck.has(kMetaSpecHashHi) || !ck.has(kMetaSpecHashLo)) return false;
  const std::uint64_t hi = static_cast<std::uint64_t>(ck.get_scalar(kMetaSpecHashHi));
  const std::uint64_t lo = static_cast<std::uint64_t>(ck.get_scalar(kMetaSpecHashLo));
  return ((hi << 32) | lo) == spec_hash(spec);
}

// Loads parameters strictly: every expected tensor present with the exact
// shape and dtype, no unknown non-reserved entries.
template <class Real>
void load_model_params(Model<Real>& model, const Checkpoint& ck) {
  constexpr DtypeCode expected = std::is_same_v<Real, float> ? DtypeCode::F32 : DtypeCode::F64;
  const auto layout = build_param_layout(model.spec, model.hyper);
  for (const ParamInfo& info : layout) {
    if (!ck.has(info.name)) throw DataError("checkpoint is missing parameter \"" + info.name + "\"");
    const CheckpointEntry& e = ck.entry(info.name);
    if (e.dtype != expected) {
      throw DataError("parameter \"" + info.name + "\" has dtype " +
                      (e.dtype == DtypeCode::F32 ? std::string("f32") : std::string("f64")) +
                      ", model expects " + (expected == DtypeCode::F32 ? "f32" : "f64"));
    }
    if (e.shape != info.shape) {
      throw DataError("parameter \"" + info.name + "\" has shape " + shape_str(e.shape) +
                      ", model expects " + shape_str(info.shape));
    }
    model.params[info.name] = ck.get<Real>(info.name);
  }
  for (const std::string& name : ck.names()) {
    if (name.rfind("__meta__.", 0) == 0 || name.rfind("__opt__.", 0) == 0) continue;
    bool known = false;
    for (const ParamInfo& info : layout) {
      if (info.name == name) {
        known = true;
        break;
      }
    }
    if (!known) throw DataError("checkpoint has unexpected entry \"" + name + "\"");
  }
}

}  // namespace cgnn
