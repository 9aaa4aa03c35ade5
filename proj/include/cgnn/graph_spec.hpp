#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cgnn {

enum class EmissionKind : std::uint8_t { Binary, Categorical, Ordinal };

// Readout attached to a node or hyperedge. `classes` is the class count K
// (fixed at 2 for binary); `label_track` names the label stream in a
// dataset that supervises this emission (defaults to the owner's name).
struct EmissionSpec {
  EmissionKind kind = EmissionKind::Binary;
  std::int64_t classes = 2;
  std::string label_track;

  // Width of the raw emission vector: 1 for binary, K otherwise.
  std::int64_t output_dim() const {
    return kind == EmissionKind::Binary ? 1 : classes;
  }

  bool operator==(const EmissionSpec&) const = default;
};

struct ConceptNodeSpec {
  std::string name;
  std::int64_t state_dim = 64;
  bool has_emission = false;
  EmissionSpec emission;

  bool operator==(const ConceptNodeSpec&) const = default;
};

enum class MemberRole : std::uint8_t { Input, Output, Undirected };

struct HyperedgeMember {
  std::string node;
  MemberRole role = MemberRole::Undirected;

  bool operator==(const HyperedgeMember&) const = default;
};

struct HyperedgeSpec {
  std::string name;
  std::vector<HyperedgeMember> members;
  std::int64_t state_dim = 64;
  bool has_emission = false;
  EmissionSpec emission;

  bool is_directed() const {
    return !members.empty() && members.front().role != MemberRole::Undirected;
  }

  bool operator==(const HyperedgeSpec&) const = default;
};

// How per-element message encoders are shared across the graph:
//   undirected-encoding: one encoder for all nodes, one for all edges.
//   directed-encoders:   node encoders keyed by the node's role mix
//                        (input / output / unconnected), edge encoders
//                        split into directed vs undirected.
//   individual-encoders: a private encoder per node and per edge.
enum class DirectionalityMode : std::uint8_t {
  UndirectedEncoding,
  DirectedEncoders,
  IndividualEncoders,
};

std::string to_string(DirectionalityMode mode);
DirectionalityMode directionality_mode_from_string(const std::string& text);

std::string to_string(EmissionKind kind);
std::string to_string(MemberRole role);

struct ConceptGraphSpec {
  std::vector<ConceptNodeSpec> nodes;
  std::vector<HyperedgeSpec> hyperedges;
  DirectionalityMode directionality_mode = DirectionalityMode::UndirectedEncoding;
  std::int64_t global_dim = 64;
  std::int64_t input_dim = 1;

  const ConceptNodeSpec* find_node(const std::string& name) const;
  const HyperedgeSpec* find_edge(const std::string& name) const;

  bool operator==(const ConceptGraphSpec&) const = default;
};

// Structural checks; returns one line per violated invariant, empty when
// the spec is sound.
std::vector<std::string> validate_spec(const ConceptGraphSpec& spec);

// Parses the JSON document format described in docs/formats.md. Throws
// ConfigError on malformed syntax (with position) or on any validation
// violation.
ConceptGraphSpec parse_graph_spec(const std::string& text);

// Canonical serialization: sorted keys, stable field set. Parsing the
// result reproduces the spec exactly.
std::string serialize_graph_spec(const ConceptGraphSpec& spec);

// 64-bit FNV-1a over the canonical serialization; used to pair
// checkpoints with the graph they were trained on.
std::uint64_t spec_hash(const ConceptGraphSpec& spec);

// Names of hyperedges that list the node as a member, in declaration
// order. Throws ContractError for an unknown node name.
std::vector<std::string> incident_edges(const ConceptGraphSpec& spec, const std::string& node_name);

ConceptGraphSpec preset_cvs();
ConceptGraphSpec preset_pgs();

// Accepts "preset:cvs", "preset:pgs", or a path to a spec document.
ConceptGraphSpec load_graph_spec(const std::string& source);

// Graphviz rendering: concept nodes as circles, hyperedges as square
// connector vertices, arrows following member roles.
std::string export_dot(const ConceptGraphSpec& spec);

}  // namespace cgnn
