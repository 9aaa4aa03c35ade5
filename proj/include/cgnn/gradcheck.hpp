#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgnn/finite_diff.hpp"
#include "cgnn/learning.hpp"
#include "cgnn/model.hpp"
#include "cgnn/synth.hpp"

namespace cgnn {

struct GradcheckReport {
  struct Group {
    std::string parameter;
    double max_rel_err = 0.0;
  };
  std::vector<Group> groups;
  double worst = 0.0;
  std::string worst_parameter;
  double tolerance = 1e-4;
  bool passed = false;
};

// Two emitting nodes joined by one undirected hyperedge; small dims keep
// the finite-difference sweep fast.
inline ConceptGraphSpec gradcheck_toy_spec() {
  ConceptGraphSpec spec;
  spec.directionality_mode = DirectionalityMode::UndirectedEncoding;
  spec.global_dim = 4;
  spec.input_dim = 3;
  for (const char* name : {"left", "right"}) {
    ConceptNodeSpec n;
    n.name = name;
    n.state_dim = 4;
    n.has_emission = true;
    n.emission = EmissionSpec{EmissionKind::Binary, 2, name};
    spec.nodes.push_back(std::move(n));
  }
  HyperedgeSpec e;
  e.name = "pair";
  e.state_dim = 4;
  e.members = {{"left", MemberRole::Undirected}, {"right", MemberRole::Undirected}};
  spec.hyperedges.push_back(std::move(e));
  return spec;
}

// Compares reverse-mode gradients of a summed cross-entropy sequence loss
// against central finite differences, parameter tensor by parameter tensor,
// at 64-bit. Each tensor's error is measured against its own gradient
// scale: individual components at a zero crossing sit below what central
// differencing can resolve at this step size, while a wrong backward rule
// shifts the whole tensor. Dims above 16 or more than 4 frames are refused
// to bound the quadratic cost of differencing every parameter.
inline GradcheckReport run_gradcheck(const ConceptGraphSpec& spec, const ModelHyper& hyper,
                                     std::int64_t frames, std::uint64_t seed, double eps = 1e-5,
                                     double tolerance = 1e-4) {
  constexpr std::int64_t kMaxDim = 16;
  constexpr std::int64_t kMaxFrames = 4;
  for (const auto& n : spec.nodes) {
    if (n.state_dim > kMaxDim) {
      throw ConfigError("gradcheck refuses state_dim > 16 (node \"" + n.name + "\")");
    }
  }
  for (const auto& e : spec.hyperedges) {
    if (e.state_dim > kMaxDim) {
      throw ConfigError("gradcheck refuses state_dim > 16 (hyperedge \"" + e.name + "\")");
    }
  }
  if (spec.global_dim > kMaxDim) throw ConfigError("gradcheck refuses global_dim > 16");
  if (hyper.encoder_hidden_dim > kMaxDim || hyper.frame_embed_dim > kMaxDim) {
    throw ConfigError("gradcheck refuses encoder dims > 16");
  }
  if (frames < 1 || frames > kMaxFrames) {
    throw ConfigError("gradcheck runs on 1..4 frames, got " + std::to_string(frames));
  }

  ModelHyper quiet = hyper;
  quiet.dropout = DropoutConfig{0.0, 0.0, 0.0};
  Model<double> model = init_model<double>(spec, quiet, seed);

  // One random sequence with random in-range labels per emitting concept.
  RngStream rng(derive_seed(seed, 0x67636865636bull));
  SequenceRecord rec;
  rec.id = "gradcheck";
  for (std::int64_t t = 0; t < frames; ++t) {
    std::vector<double> frame(static_cast<std::size_t>(spec.input_dim));
    for (auto& x : frame) x = rng.uniform(-1.0, 1.0);
    rec.frames.push_back(std::move(frame));
  }
  for (const auto& c : detail::emitting_concepts(spec)) {
    LabelTrack track;
    track.sequence_level = false;
    for (std::int64_t t = 0; t < frames; ++t) {
      std::int64_t lo = 0, hi = 1;
      if (c.emission.kind == EmissionKind::Categorical) hi = c.emission.classes - 1;
      if (c.emission.kind == EmissionKind::Ordinal) {
        lo = 1;
        hi = c.emission.classes;
      }
      track.values.push_back(lo + static_cast<std::int64_t>(rng.uniform_int(
                                      static_cast<std::uint64_t>(hi - lo + 1))));
    }
    rec.labels[c.emission.label_track] = std::move(track);
  }

  auto [loss, analytic] = sequence_loss_gradients(model, rec, 0);
  (void)loss;

  std::map<std::string, Tensor<double>> point = model.params;
  auto objective = [&](const std::map<std::string, Tensor<double>>& p) {
    Model<double> probe = model;
    probe.params = p;
    return sequence_loss(probe, rec);
  };
  const auto numeric = finite_difference_gradient<double>(objective, point, eps);

  GradcheckReport report;
  report.tolerance = tolerance;
  for (const auto& [name, fd_grad] : numeric) {
    const Tensor<double>& an_grad = analytic.at(name);
    GradcheckReport::Group group;
    group.parameter = name;
    group.max_rel_err = normwise_relative_error(an_grad, fd_grad);
    if (group.max_rel_err > report.worst) {
      report.worst = group.max_rel_err;
      report.worst_parameter = name;
    }
    report.groups.push_back(std::move(group));
  }
  report.passed = report.worst <= tolerance;
  return report;
}

}  // namespace cgnn
