#include "cgnn/dataset.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cgnn/errors.hpp"

namespace cgnn {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "cgnn-dataset";
constexpr int kFormatVersion = 1;

json record_to_json(const SequenceRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["frames"] = rec.frames;
  json labels = json::object();
  for (const auto& [concept_name, track] : rec.labels) {
    if (track.sequence_level) {
      labels[concept_name] = track.values.front();
    } else {
      labels[concept_name] = track.values;
    }
  }
  j["labels"] = std::move(labels);
  return j;
}

SequenceRecord record_from_json(const json& j, std::size_t line_no) {
  SequenceRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    rec.frames = j.at("frames").get<std::vector<std::vector<double>>>();
    for (const auto& [concept_name, value] : j.at("labels").items()) {
      LabelTrack track;
      if (value.is_array()) {
        track.sequence_level = false;
        track.values = value.get<std::vector<std::int64_t>>();
        if (track.values.empty()) {
          throw DataError("line " + std::to_string(line_no) + ": label track \"" + concept_name +
                          "\" is empty");
        }
      } else if (value.is_number_integer()) {
        track.sequence_level = true;
        track.values = {value.get<std::int64_t>()};
      } else {
        throw DataError("line " + std::to_string(line_no) + ": label \"" + concept_name +
                        "\" must be an integer or an integer array");
      }
      rec.labels.emplace(concept_name, std::move(track));
    }
  } catch (const json::exception& err) {
    throw DataError("line " + std::to_string(line_no) + ": " + err.what());
  }
  return rec;
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream out;
  json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  out << header.dump() << "\n";
  for (const auto& rec : ds.sequences) out << record_to_json(rec).dump() << "\n";
  return out.str();
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Dataset ds;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw DataError("line " + std::to_string(line_no) + ": " + err.what());
    }
    if (!header_seen) {
      if (!j.is_object() || j.value("format", "") != kFormatName) {
        throw DataError("missing dataset header line {\"format\":\"cgnn-dataset\",...}");
      }
      const int version = j.value("version", -1);
      if (version != kFormatVersion) {
        throw DataError("unsupported dataset version " + std::to_string(version));
      }
      header_seen = true;
      continue;
    }
    ds.sequences.push_back(record_from_json(j, line_no));
  }
  if (!header_seen) throw DataError("dataset is empty (no header line)");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  const std::string text = serialize_dataset(ds);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("failed writing dataset \"" + path + "\"");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open dataset \"" + path + "\"");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_dataset(buf.str());
}

std::vector<std::string> check_labels(const Dataset& ds, const ConceptGraphSpec& spec) {
  std::vector<std::string> report;

  struct Track {
    std::string owner;
    EmissionSpec emission;
  };
  std::vector<Track> tracks;
  for (const auto& n : spec.nodes) {
    if (n.has_emission) tracks.push_back({n.name, n.emission});
  }
  for (const auto& e : spec.hyperedges) {
    if (e.has_emission) tracks.push_back({e.name, e.emission});
  }

  for (const auto& rec : ds.sequences) {
    auto complain = [&](const std::string& msg) {
      report.push_back("sequence \"" + rec.id + "\": " + msg);
    };
    if (rec.frames.empty()) {
      complain("has no frames");
      continue;
    }
    for (const auto& frame : rec.frames) {
      if (static_cast<std::int64_t>(frame.size()) != spec.input_dim) {
        complain("frame width " + std::to_string(frame.size()) + " != input_dim " +
                 std::to_string(spec.input_dim));
        break;
      }
    }
    for (const auto& t : tracks) {
      auto it = rec.labels.find(t.emission.label_track);
      if (it == rec.labels.end()) {
        complain("missing label track \"" + t.emission.label_track + "\" for concept \"" +
                 t.owner + "\"");
        continue;
      }
      const LabelTrack& lt = it->second;
      if (!lt.sequence_level && lt.values.size() != rec.frames.size()) {
        complain("label track \"" + t.emission.label_track + "\" has " +
                 std::to_string(lt.values.size()) + " values for " +
                 std::to_string(rec.frames.size()) + " frames");
        continue;
      }
      std::int64_t lo = 0, hi = 1;
      switch (t.emission.kind) {
        case EmissionKind::Binary: lo = 0; hi = 1; break;
        case EmissionKind::Categorical: lo = 0; hi = t.emission.classes - 1; break;
        case EmissionKind::Ordinal: lo = 1; hi = t.emission.classes; break;
      }
      for (std::int64_t v : lt.values) {
        if (v < lo || v > hi) {
          complain("label track \"" + t.emission.label_track + "\" value " + std::to_string(v) +
                   " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "] for " +
                   to_string(t.emission.kind) + " emission");
          break;
        }
      }
    }
  }
  return report;
}

}  // namespace cgnn
