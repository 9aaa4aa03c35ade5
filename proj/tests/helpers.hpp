#pragma once

// Shared test scaffolding: deterministic random graph specs, models, and
// frame data for property tests.

#include <cstdint>
#include <string>
#include <vector>

#include "cgnn/graph_spec.hpp"
#include "cgnn/model.hpp"
#include "cgnn/rng.hpp"

namespace testing {

inline cgnn::EmissionSpec random_emission(cgnn::RngStream& rng, const std::string& track) {
  using cgnn::EmissionKind;
  cgnn::EmissionSpec e;
  e.label_track = track;
  switch (rng.uniform_int(3)) {
    case 0:
      e.kind = EmissionKind::Binary;
      e.classes = 2;
      break;
    case 1:
      e.kind = EmissionKind::Categorical;
      e.classes = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
      break;
    default:
      e.kind = EmissionKind::Ordinal;
      e.classes = 2 + static_cast<std::int64_t>(rng.uniform_int(4));
      break;
  }
  return e;
}

// Small random valid spec: 2..5 emitting nodes, 1..3 hyperedges over
// distinct members, uniform dims. Directed edges get a nonempty
// input/output partition.
inline cgnn::ConceptGraphSpec make_random_spec(cgnn::RngStream& rng,
                                               cgnn::DirectionalityMode mode,
                                               bool allow_directed = true) {
  using namespace cgnn;
  ConceptGraphSpec spec;
  spec.directionality_mode = mode;
  const std::int64_t dn = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
  const std::int64_t de = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
  spec.global_dim = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
  spec.input_dim = 2 + static_cast<std::int64_t>(rng.uniform_int(4));

  const std::size_t n_nodes = 2 + rng.uniform_int(4);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    ConceptNodeSpec n;
    n.name = "n" + std::to_string(i);
    n.state_dim = dn;
    n.has_emission = true;
    n.emission = random_emission(rng, n.name);
    spec.nodes.push_back(std::move(n));
  }

  const std::size_t n_edges = 1 + rng.uniform_int(3);
  for (std::size_t k = 0; k < n_edges; ++k) {
    HyperedgeSpec e;
    e.name = "e" + std::to_string(k);
    e.state_dim = de;
    std::vector<std::size_t> pool(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) pool[i] = i;
    rng.shuffle(pool);
    const std::size_t m = 2 + rng.uniform_int(n_nodes - 1);
    const bool directed = allow_directed && rng.uniform_int(2) == 0;
    for (std::size_t j = 0; j < m; ++j) {
      MemberRole role = MemberRole::Undirected;
      if (directed) {
        // First member input, last output, the rest random: both role sets
        // stay nonempty.
        if (j == 0) {
          role = MemberRole::Input;
        } else if (j + 1 == m) {
          role = MemberRole::Output;
        } else {
          role = rng.uniform_int(2) == 0 ? MemberRole::Input : MemberRole::Output;
        }
      }
      e.members.push_back({spec.nodes[pool[j]].name, role});
    }
    spec.hyperedges.push_back(std::move(e));
  }
  return spec;
}

inline std::vector<std::vector<double>> random_frames(cgnn::RngStream& rng, std::int64_t count,
                                                      std::int64_t dim) {
  std::vector<std::vector<double>> frames;
  for (std::int64_t t = 0; t < count; ++t) {
    std::vector<double> f(static_cast<std::size_t>(dim));
    for (auto& x : f) x = rng.uniform(-1.0, 1.0);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace testing
