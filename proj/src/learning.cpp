#include "cgnn/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cgnn {

using nlohmann::json;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }
std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }
std::string to_string(SequenceReduction r) {
  return r == SequenceReduction::FinalFrame ? "final-frame" : "majority";
}
std::string to_string(OrdinalDecodeRule r) {
  return r == OrdinalDecodeRule::CountAboveHalf ? "count" : "first-below";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer \"" + s + "\" (expected adam or sgd)");
}

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("unknown precision \"" + s + "\" (expected f32 or f64)");
}

SequenceReduction sequence_reduction_from_string(const std::string& s) {
  if (s == "final-frame") return SequenceReduction::FinalFrame;
  if (s == "majority") return SequenceReduction::MajorityVote;
  throw ConfigError("unknown sequence_reduction \"" + s + "\" (expected final-frame or majority)");
}

OrdinalDecodeRule ordinal_decode_rule_from_string(const std::string& s) {
  if (s == "count") return OrdinalDecodeRule::CountAboveHalf;
  if (s == "first-below") return OrdinalDecodeRule::FirstBelowHalf;
  throw ConfigError("unknown ordinal_decode_rule \"" + s + "\" (expected count or first-below)");
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("train config is not valid JSON: ") + err.what());
  }
  if (!doc.is_object()) throw ConfigError("train config must be a JSON object");

  TrainConfig cfg;
  try {
    reject_unknown_keys(doc,
                        {"learning_rate", "epochs", "sequence_chunk_length", "batch_size",
                         "optimizer", "adam_beta1", "adam_beta2", "adam_eps", "seed", "precision",
                         "shuffle", "deterministic", "sequence_reduction", "ordinal_decode_rule",
                         "model"},
                        "train config");
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    cfg.sequence_chunk_length = doc.value("sequence_chunk_length", cfg.sequence_chunk_length);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    if (doc.contains("optimizer")) {
      cfg.optimizer = optimizer_kind_from_string(doc.at("optimizer").get<std::string>());
    }
    cfg.adam_beta1 = doc.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = doc.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = doc.value("adam_eps", cfg.adam_eps);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("precision")) {
      cfg.precision = precision_from_string(doc.at("precision").get<std::string>());
    }
    cfg.shuffle = doc.value("shuffle", cfg.shuffle);
    cfg.deterministic = doc.value("deterministic", cfg.deterministic);
    if (doc.contains("sequence_reduction")) {
      cfg.sequence_reduction =
          sequence_reduction_from_string(doc.at("sequence_reduction").get<std::string>());
    }
    if (doc.contains("ordinal_decode_rule")) {
      cfg.ordinal_decode_rule =
          ordinal_decode_rule_from_string(doc.at("ordinal_decode_rule").get<std::string>());
    }
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      reject_unknown_keys(m, {"encoder_hidden_dim", "frame_embed_dim", "aggregation", "dropout"},
                          "train config model");
      cfg.hyper.encoder_hidden_dim = m.value("encoder_hidden_dim", cfg.hyper.encoder_hidden_dim);
      cfg.hyper.frame_embed_dim = m.value("frame_embed_dim", cfg.hyper.frame_embed_dim);
      if (m.contains("aggregation")) {
        cfg.hyper.aggregation = aggregation_from_string(m.at("aggregation").get<std::string>());
      }
      if (m.contains("dropout")) {
        const json& d = m.at("dropout");
        reject_unknown_keys(d, {"node_rate", "edge_rate", "modality_rate"}, "train config dropout");
        cfg.hyper.dropout.node_rate = d.value("node_rate", cfg.hyper.dropout.node_rate);
        cfg.hyper.dropout.edge_rate = d.value("edge_rate", cfg.hyper.dropout.edge_rate);
        cfg.hyper.dropout.modality_rate = d.value("modality_rate", cfg.hyper.dropout.modality_rate);
      }
    }
  } catch (const json::exception& err) {
    throw ConfigError(std::string("train config: ") + err.what());
  }

  if (!(cfg.learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.sequence_chunk_length < 1) throw ConfigError("sequence_chunk_length must be >= 1");
  if (cfg.batch_size != 1) throw ConfigError("only batch_size 1 is supported");
  for (double rate : {cfg.hyper.dropout.node_rate, cfg.hyper.dropout.edge_rate,
                      cfg.hyper.dropout.modality_rate}) {
    if (rate < 0 || rate >= 1) throw ConfigError("dropout rates must lie in [0, 1)");
  }
  if (cfg.hyper.encoder_hidden_dim < 1 || cfg.hyper.frame_embed_dim < 1) {
    throw ConfigError("model dims must be positive");
  }
  return cfg;
}

std::string serialize_train_config(const TrainConfig& cfg) {
  json doc;
  doc["learning_rate"] = cfg.learning_rate;
  doc["epochs"] = cfg.epochs;
  doc["sequence_chunk_length"] = cfg.sequence_chunk_length;
  doc["batch_size"] = cfg.batch_size;
  doc["optimizer"] = to_string(cfg.optimizer);
  doc["adam_beta1"] = cfg.adam_beta1;
  doc["adam_beta2"] = cfg.adam_beta2;
  doc["adam_eps"] = cfg.adam_eps;
  doc["seed"] = cfg.seed;
  doc["precision"] = to_string(cfg.precision);
  doc["shuffle"] = cfg.shuffle;
  doc["deterministic"] = cfg.deterministic;
  doc["sequence_reduction"] = to_string(cfg.sequence_reduction);
  doc["ordinal_decode_rule"] = to_string(cfg.ordinal_decode_rule);
  doc["model"] = {
      {"encoder_hidden_dim", cfg.hyper.encoder_hidden_dim},
      {"frame_embed_dim", cfg.hyper.frame_embed_dim},
      {"aggregation", to_string(cfg.hyper.aggregation)},
      {"dropout",
       {{"node_rate", cfg.hyper.dropout.node_rate},
        {"edge_rate", cfg.hyper.dropout.edge_rate},
        {"modality_rate", cfg.hyper.dropout.modality_rate}}},
  };
  return doc.dump(2) + "\n";
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open train config \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

std::vector<std::int64_t> ordinal_encode(std::int64_t cls, std::int64_t k) {
  if (cls < 1 || cls > k) {
    throw DataError("ordinal class " + std::to_string(cls) + " out of range [1," +
                    std::to_string(k) + "]");
  }
  std::vector<std::int64_t> out(static_cast<std::size_t>(k), 0);
  for (std::int64_t i = 0; i < cls; ++i) out[static_cast<std::size_t>(i)] = 1;
  return out;
}

std::int64_t ordinal_decode(const std::vector<double>& probs, OrdinalDecodeRule rule) {
  const auto k = static_cast<std::int64_t>(probs.size());
  if (rule == OrdinalDecodeRule::CountAboveHalf) {
    std::int64_t count = 0;
    for (double p : probs) count += p > 0.5 ? 1 : 0;
    return std::max<std::int64_t>(1, count);
  }
  for (std::int64_t i = 0; i < k; ++i) {
    if (probs[static_cast<std::size_t>(i)] < 0.5) return std::max<std::int64_t>(1, i);
  }
  return k;
}

std::int64_t decode_emission(EmissionKind kind, const std::vector<double>& probs,
                             OrdinalDecodeRule rule) {
  switch (kind) {
    case EmissionKind::Binary:
      return probs.at(0) > 0.5 ? 1 : 0;
    case EmissionKind::Categorical: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
      }
      return static_cast<std::int64_t>(best);
    }
    case EmissionKind::Ordinal:
      return ordinal_decode(probs, rule);
  }
  throw ContractError("unknown emission kind");
}

std::vector<SplitIndices> split_dataset(std::size_t n, double ratio, std::size_t n_splits,
                                        std::uint64_t seed) {
  if (n < 2) throw DataError("splitting needs at least 2 sequences, got " + std::to_string(n));
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("split ratio must lie in (0, 1)");
  if (n_splits < 1) throw ConfigError("n_splits must be >= 1");
  const auto n_train = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(n)));
  std::vector<SplitIndices> out;
  for (std::size_t s = 0; s < n_splits; ++s) {
    RngStream rng(derive_seed(seed, 0x73706c6974ull, s));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    SplitIndices split;
    split.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    out.push_back(std::move(split));
  }
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.sequences.reserve(indices.size());
  for (std::size_t i : indices) out.sequences.push_back(ds.sequences.at(i));
  return out;
}

namespace {

const EmissionSpec* emission_for(const ConceptGraphSpec& spec, const std::string& concept_name) {
  if (const auto* n = spec.find_node(concept_name)) return n->has_emission ? &n->emission : nullptr;
  if (const auto* e = spec.find_edge(concept_name)) return e->has_emission ? &e->emission : nullptr;
  return nullptr;
}

std::int64_t majority(const std::vector<std::int64_t>& values) {
  std::map<std::int64_t, std::size_t> counts;
  for (std::int64_t v : values) ++counts[v];
  std::int64_t best = values.front();
  std::size_t best_count = 0;
  for (const auto& [value, count] : counts) {
    if (count > best_count) {
      best = value;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

MetricReport score_predictions(const std::vector<PredictionRecord>& predictions,
                               const ConceptGraphSpec& spec, SequenceReduction reduction) {
  // concept -> sequence -> frame-ordered (prediction, label) pairs.
  struct SeqTrack {
    std::vector<std::int64_t> preds, labels, frames;
  };
  std::map<std::string, std::map<std::string, SeqTrack>> grouped;
  for (const auto& pr : predictions) {
    auto& track = grouped[pr.concept_name][pr.sequence_id];
    track.preds.push_back(pr.predicted);
    track.labels.push_back(pr.label);
    track.frames.push_back(pr.frame);
  }

  MetricReport report;
  for (auto& [concept_name, sequences] : grouped) {
    const EmissionSpec* emission = emission_for(spec, concept_name);
    if (!emission) throw ContractError("predictions mention unknown concept \"" + concept_name + "\"");

    ConceptMetrics cm;
    cm.concept_name = concept_name;
    cm.kind = emission->kind;

    std::vector<std::int64_t> frame_preds, frame_labels, seq_preds, seq_labels;
    for (auto& [sequence_id, track] : sequences) {
      // Frames arrive in forward order per sequence, but sort defensively
      // so re-scored dumps do not depend on record order.
      std::vector<std::size_t> idx(track.frames.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::sort(idx.begin(), idx.end(),
                [&](std::size_t a, std::size_t b) { return track.frames[a] < track.frames[b]; });
      std::vector<std::int64_t> preds, labels;
      for (std::size_t i : idx) {
        preds.push_back(track.preds[i]);
        labels.push_back(track.labels[i]);
      }
      frame_preds.insert(frame_preds.end(), preds.begin(), preds.end());
      frame_labels.insert(frame_labels.end(), labels.begin(), labels.end());
      if (reduction == SequenceReduction::FinalFrame) {
        seq_preds.push_back(preds.back());
        seq_labels.push_back(labels.back());
      } else {
        seq_preds.push_back(majority(preds));
        seq_labels.push_back(majority(labels));
      }
    }

    auto fraction_correct = [](const std::vector<std::int64_t>& a,
                               const std::vector<std::int64_t>& b) {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i] ? 1 : 0;
      return static_cast<double>(hit) / static_cast<double>(a.size());
    };
    cm.frames = static_cast<std::int64_t>(frame_preds.size());
    cm.sequences = static_cast<std::int64_t>(seq_preds.size());
    cm.frame_accuracy = fraction_correct(frame_preds, frame_labels);
    cm.sequence_accuracy = fraction_correct(seq_preds, seq_labels);
    if (emission->kind == EmissionKind::Binary) {
      cm.has_balanced = true;
      cm.frame_balanced = balanced_accuracy(confusion_from_predictions(frame_preds, frame_labels));
      cm.sequence_balanced = balanced_accuracy(confusion_from_predictions(seq_preds, seq_labels));
    }
    if (emission->kind == EmissionKind::Ordinal) {
      cm.has_distance = true;
      cm.frame_distance = average_distance(frame_preds, frame_labels);
      cm.sequence_distance = average_distance(seq_preds, seq_labels);
    }
    report.concepts.push_back(std::move(cm));
  }
  return report;
}

std::string render_metrics_text(const MetricReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "concept" << std::setw(13) << "kind" << std::setw(12)
      << "frame_acc" << std::setw(12) << "seq_acc" << std::setw(12) << "frame_ba" << std::setw(12)
      << "seq_ba" << std::setw(12) << "frame_ad" << std::setw(12) << "seq_ad" << "\n";
  out << std::string(103, '-') << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& cm : report.concepts) {
    out << std::left << std::setw(18) << cm.concept_name << std::setw(13) << to_string(cm.kind)
        << std::setw(12) << cm.frame_accuracy << std::setw(12) << cm.sequence_accuracy;
    if (cm.has_balanced) {
      std::ostringstream fb, sb;
      fb << std::fixed << std::setprecision(4) << cm.frame_balanced.value
         << (cm.frame_balanced.partial ? "*" : "");
      sb << std::fixed << std::setprecision(4) << cm.sequence_balanced.value
         << (cm.sequence_balanced.partial ? "*" : "");
      out << std::setw(12) << fb.str() << std::setw(12) << sb.str();
    } else {
      out << std::setw(12) << "-" << std::setw(12) << "-";
    }
    if (cm.has_distance) {
      out << std::setw(12) << cm.frame_distance << std::setw(12) << cm.sequence_distance;
    } else {
      out << std::setw(12) << "-" << std::setw(12) << "-";
    }
    out << "\n";
  }
  out << "(* balanced accuracy computed from a single observed class)\n";
  return out.str();
}

std::string render_metrics_json(const MetricReport& report) {
  json doc = json::array();
  for (const auto& cm : report.concepts) {
    json j;
    j["concept"] = cm.concept_name;
    j["kind"] = to_string(cm.kind);
    j["frames"] = cm.frames;
    j["sequences"] = cm.sequences;
    j["frame_accuracy"] = cm.frame_accuracy;
    j["sequence_accuracy"] = cm.sequence_accuracy;
    if (cm.has_balanced) {
      j["frame_balanced_accuracy"] = cm.frame_balanced.value;
      j["frame_balanced_partial"] = cm.frame_balanced.partial;
      j["sequence_balanced_accuracy"] = cm.sequence_balanced.value;
      j["sequence_balanced_partial"] = cm.sequence_balanced.partial;
    }
    if (cm.has_distance) {
      j["frame_average_distance"] = cm.frame_distance;
      j["sequence_average_distance"] = cm.sequence_distance;
    }
    doc.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string serialize_predictions(const std::vector<PredictionRecord>& predictions) {
  std::ostringstream out;
  for (const auto& pr : predictions) {
    json j;
    j["sequence"] = pr.sequence_id;
    j["frame"] = pr.frame;
    j["concept"] = pr.concept_name;
    j["probabilities"] = pr.probabilities;
    j["label"] = pr.label;
    j["predicted"] = pr.predicted;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<PredictionRecord> parse_predictions(const std::string& text) {
  std::vector<PredictionRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw DataError("prediction line " + std::to_string(line_no) + ": " + err.what());
    }
    try {
      PredictionRecord pr;
      pr.sequence_id = j.at("sequence").get<std::string>();
      pr.frame = j.at("frame").get<std::int64_t>();
      pr.concept_name = j.at("concept").get<std::string>();
      pr.probabilities = j.at("probabilities").get<std::vector<double>>();
      pr.label = j.at("label").get<std::int64_t>();
      pr.predicted = j.at("predicted").get<std::int64_t>();
      out.push_back(std::move(pr));
    } catch (const json::exception& err) {
      throw DataError("prediction line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  return out;
}

}  // namespace cgnn
