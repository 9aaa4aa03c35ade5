#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgnn/graph_spec.hpp"

namespace cgnn {

// Integer labels for one concept: either one value per frame, or a single
// sequence-level value broadcast to every frame.
struct LabelTrack {
  bool sequence_level = false;
  std::vector<std::int64_t> values;

  std::int64_t at_frame(std::size_t frame) const {
    return sequence_level ? values.front() : values[frame];
  }

  bool operator==(const LabelTrack&) const = default;
};

// One data instance: frame feature vectors over time plus per-concept
// label tracks.
struct SequenceRecord {
  std::string id;
  std::vector<std::vector<double>> frames;
  std::map<std::string, LabelTrack> labels;

  bool operator==(const SequenceRecord&) const = default;
};

struct Dataset {
  std::vector<SequenceRecord> sequences;

  std::size_t size() const { return sequences.size(); }

  bool operator==(const Dataset&) const = default;
};

// Line-delimited format: a header object {"format":"cgnn-dataset",
// "version":1} followed by one JSON record per line. Serializing a parsed
// file reproduces it byte for byte.
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Checks a dataset against the emissions a graph expects: every emitting
// concept's label track present, per-frame lengths matching, label values
// in range for the emission kind, frame vectors matching input_dim.
// Returns one line per problem, empty when compatible.
std::vector<std::string> check_labels(const Dataset& ds, const ConceptGraphSpec& spec);

}  // namespace cgnn
