#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgnn/checkpoint.hpp"
#include "cgnn/dataset.hpp"
#include "cgnn/errors.hpp"
#include "cgnn/graph_spec.hpp"
#include "cgnn/manifest.hpp"
#include "cgnn/synth.hpp"

using namespace cgnn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(f.good());
}

// Writes a mangled copy of a good checkpoint file and returns its path.
std::string mangled(const std::string& good_bytes, std::size_t offset, char value) {
  std::string bytes = good_bytes;
  REQUIRE(offset < bytes.size());
  bytes[offset] = value;
  const std::string path = "test_formats_mangled.cgnn";
  spit(path, bytes);
  return path;
}

struct FileGuard {
  std::vector<std::string> paths;
  ~FileGuard() {
    for (const auto& p : paths) std::remove(p.c_str());
  }
};

Dataset sample_dataset() {
  Dataset ds;
  SequenceRecord r1;
  r1.id = "alpha";
  r1.frames = {{0.5, -1.25}, {0.0, 3.0}};
  r1.labels["flag"] = LabelTrack{false, {0, 1}};
  r1.labels["grade"] = LabelTrack{true, {3}};
  SequenceRecord r2;
  r2.id = "beta";
  r2.frames = {{1.0, 2.0}};
  r2.labels["flag"] = LabelTrack{false, {1}};
  r2.labels["grade"] = LabelTrack{true, {1}};
  ds.sequences = {r1, r2};
  return ds;
}

ConceptGraphSpec label_spec() {
  ConceptGraphSpec spec;
  spec.input_dim = 2;
  spec.global_dim = 3;
  ConceptNodeSpec flag;
  flag.name = "flag";
  flag.state_dim = 4;
  flag.has_emission = true;
  flag.emission = EmissionSpec{EmissionKind::Binary, 2, "flag"};
  ConceptNodeSpec grade;
  grade.name = "grade";
  grade.state_dim = 4;
  grade.has_emission = true;
  grade.emission = EmissionSpec{EmissionKind::Ordinal, 5, "grade"};
  spec.nodes = {flag, grade};
  HyperedgeSpec e;
  e.name = "link";
  e.state_dim = 4;
  e.members = {{"flag", MemberRole::Undirected}, {"grade", MemberRole::Undirected}};
  spec.hyperedges = {e};
  return spec;
}

}  // namespace

TEST_CASE("checkpoints hold typed tensors and compare by content") {
  Checkpoint ck;
  ck.put("w", Tensor<double>(Shape{2, 2}, {1.0, 2.0, 3.0, 4.0}));
  ck.put("small", Tensor<float>(Shape{3}, {1.5f, -2.5f, 0.25f}));
  ck.put_scalar("epoch", 7.0);

  CHECK(ck.size() == 3);
  CHECK(ck.has("w"));
  CHECK_FALSE(ck.has("missing"));
  CHECK(ck.names() == std::vector<std::string>{"epoch", "small", "w"});
  CHECK(ck.dtype("w") == DtypeCode::F64);
  CHECK(ck.dtype("small") == DtypeCode::F32);
  CHECK(ck.entry("w").shape == Shape{2, 2});
  CHECK(ck.entry("w").raw.size() == 4 * sizeof(double));
  CHECK(ck.get_scalar("epoch") == 7.0);

  // Reads convert between precisions; exact values here survive both ways.
  CHECK(ck.get<double>("small") == Tensor<double>(Shape{3}, {1.5, -2.5, 0.25}));
  CHECK(ck.get<float>("w") == Tensor<float>(Shape{2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));

  Checkpoint same;
  same.put_scalar("epoch", 7.0);
  same.put("small", Tensor<float>(Shape{3}, {1.5f, -2.5f, 0.25f}));
  same.put("w", Tensor<double>(Shape{2, 2}, {1.0, 2.0, 3.0, 4.0}));
  CHECK(ck == same);
  same.put_scalar("epoch", 8.0);
  CHECK_FALSE(ck == same);

  CHECK_THROWS_AS(ck.entry("missing"), DataError);
  CHECK_THROWS_AS(ck.get_scalar("w"), DataError);
  CHECK_THROWS_AS(ck.put("", Tensor<double>::scalar(1.0)), ContractError);
}

TEST_CASE("checkpoint files round-trip byte for byte") {
  FileGuard guard;
  Checkpoint ck;
  ck.put("layer.w", Tensor<double>(Shape{2, 3}, {0.1, 0.2, 0.3, -0.1, -0.2, -0.3}));
  ck.put("layer.b", Tensor<float>(Shape{3}, {1.0f, 2.0f, 3.0f}));
  ck.put_scalar("step", 42.0);

  const std::string a = "test_formats_a.cgnn";
  const std::string b = "test_formats_b.cgnn";
  guard.paths = {a, b};
  ck.save(a);
  const Checkpoint loaded = Checkpoint::load(a);
  CHECK(loaded == ck);
  loaded.save(b);
  CHECK(slurp(a) == slurp(b));

  const std::string bytes = slurp(a);
  CHECK(bytes.substr(0, 4) == "CGNN");
}

TEST_CASE("corrupted checkpoint files are rejected with a reason") {
  FileGuard guard;
  Checkpoint ck;
  ck.put("w", Tensor<double>(Shape{2}, {1.0, 2.0}));
  const std::string good_path = "test_formats_good.cgnn";
  guard.paths = {good_path, "test_formats_mangled.cgnn", "test_formats_cut.cgnn"};
  ck.save(good_path);
  const std::string good = slurp(good_path);

  // Layout: magic(4) version(2) count(4) | name_len(2) "w" dtype(1) rank(1) dims...
  CHECK_THROWS_WITH_AS(Checkpoint::load(mangled(good, 0, 'X')), doctest::Contains("bad magic"),
                       DataError);
  CHECK_THROWS_WITH_AS(Checkpoint::load(mangled(good, 4, 9)),
                       doctest::Contains("unsupported checkpoint version"), DataError);
  CHECK_THROWS_WITH_AS(Checkpoint::load(mangled(good, 13, 7)), doctest::Contains("bad dtype"),
                       DataError);
  CHECK_THROWS_WITH_AS(Checkpoint::load(mangled(good, 15, 0)), doctest::Contains("zero dim"),
                       DataError);

  const std::string cut = "test_formats_cut.cgnn";
  spit(cut, good.substr(0, good.size() - 1));
  CHECK_THROWS_WITH_AS(Checkpoint::load(cut), doctest::Contains("truncated"), DataError);
  spit(cut, good + "!");
  CHECK_THROWS_WITH_AS(Checkpoint::load(cut), doctest::Contains("trailing bytes"), DataError);

  // Two entries under the same name can only come from a hand-built file.
  std::string dup = good;
  dup[6] = 2;  // count
  dup += good.substr(10);
  spit(cut, dup);
  CHECK_THROWS_WITH_AS(Checkpoint::load(cut), doctest::Contains("duplicate"), DataError);

  CHECK_THROWS_AS(Checkpoint::load("test_formats_does_not_exist.cgnn"), IoError);
}

TEST_CASE("dataset text round-trips exactly") {
  const Dataset ds = sample_dataset();
  const std::string text = serialize_dataset(ds);
  CHECK(text.substr(0, 1) == "{");
  CHECK(text.find("cgnn-dataset") != std::string::npos);

  const Dataset parsed = parse_dataset(text);
  CHECK(parsed == ds);
  CHECK(serialize_dataset(parsed) == text);

  // Sequence-level labels stay scalars in the file, per-frame stay arrays.
  std::istringstream lines(text);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  const auto j = nlohmann::json::parse(first);
  CHECK(j.at("labels").at("grade").is_number_integer());
  CHECK(j.at("labels").at("flag").is_array());

  FileGuard guard;
  const std::string path = "test_formats_ds.jsonl";
  guard.paths = {path};
  save_dataset(ds, path);
  CHECK(load_dataset(path) == ds);
  CHECK(slurp(path) == text);
  CHECK_THROWS_AS(load_dataset("test_formats_missing.jsonl"), IoError);
}

TEST_CASE("malformed dataset text is rejected with the line number") {
  const std::string good = serialize_dataset(sample_dataset());

  CHECK_THROWS_WITH_AS(parse_dataset(""), doctest::Contains("empty"), DataError);
  CHECK_THROWS_WITH_AS(parse_dataset("{\"id\": \"x\"}\n"), doctest::Contains("header"), DataError);
  CHECK_THROWS_WITH_AS(parse_dataset("{\"format\":\"cgnn-dataset\",\"version\":2}\n"),
                       doctest::Contains("unsupported dataset version 2"), DataError);

  const std::string header = good.substr(0, good.find('\n') + 1);
  CHECK_THROWS_WITH_AS(parse_dataset(header + "not json\n"), doctest::Contains("line 2"),
                       DataError);
  CHECK_THROWS_WITH_AS(parse_dataset(header + "{\"id\":\"x\",\"frames\":[[1]],\"labels\":{}}\n" +
                                     "{\"frames\":[[1]],\"labels\":{}}\n"),
                       doctest::Contains("line 3"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_dataset(header + "{\"id\":\"x\",\"frames\":[[1]],\"labels\":{\"t\":[]}}\n"),
      doctest::Contains("is empty"), DataError);
  CHECK_THROWS_WITH_AS(
      parse_dataset(header + "{\"id\":\"x\",\"frames\":[[1]],\"labels\":{\"t\":0.5}}\n"),
      doctest::Contains("integer"), DataError);

  // Blank lines are tolerated anywhere.
  const Dataset padded = parse_dataset(header + "\n" + good.substr(header.size()) + "\n\n");
  CHECK(padded == sample_dataset());
}

TEST_CASE("label checks name every incompatibility") {
  const ConceptGraphSpec spec = label_spec();
  Dataset ds = sample_dataset();
  CHECK(check_labels(ds, spec).empty());

  auto joined = [&](const Dataset& d) {
    std::string all;
    for (const auto& line : check_labels(d, spec)) all += line + "\n";
    return all;
  };

  Dataset empty_frames = ds;
  empty_frames.sequences[0].frames.clear();
  CHECK(joined(empty_frames).find("has no frames") != std::string::npos);

  Dataset narrow = ds;
  narrow.sequences[1].frames[0] = {1.0};
  CHECK(joined(narrow).find("frame width 1 != input_dim 2") != std::string::npos);

  Dataset missing = ds;
  missing.sequences[0].labels.erase("grade");
  CHECK(joined(missing).find("missing label track \"grade\"") != std::string::npos);

  Dataset short_track = ds;
  short_track.sequences[0].labels["flag"].values = {1};
  CHECK(joined(short_track).find("has 1 values for 2 frames") != std::string::npos);

  Dataset hot = ds;
  hot.sequences[0].labels["flag"].values = {0, 2};
  CHECK(joined(hot).find("value 2 outside [0,1] for binary emission") != std::string::npos);

  Dataset low = ds;
  low.sequences[1].labels["grade"].values = {0};
  CHECK(joined(low).find("value 0 outside [1,5] for ordinal emission") != std::string::npos);

  // One report line per problem, tagged with the sequence id.
  Dataset both = ds;
  both.sequences[0].labels["flag"].values = {0, 2};
  both.sequences[1].labels.erase("grade");
  const auto report = check_labels(both, spec);
  REQUIRE(report.size() == 2);
  CHECK(report[0].find("sequence \"alpha\"") != std::string::npos);
  CHECK(report[1].find("sequence \"beta\"") != std::string::npos);
}

TEST_CASE("shipped preset files match the builtin definitions") {
  const std::string dir = std::string(CGNN_REPO_DIR) + "/presets/";
  CHECK(slurp(dir + "cvs.json") == serialize_graph_spec(preset_cvs()));
  CHECK(slurp(dir + "pgs.json") == serialize_graph_spec(preset_pgs()));
  CHECK(slurp(dir + "pgs_rules.json") == serialize_pgs_rules(builtin_pgs_rules()));

  // The files are also valid inputs in their own right.
  CHECK(load_graph_spec(dir + "cvs.json") == preset_cvs());
  CHECK(load_graph_spec(dir + "pgs.json") == preset_pgs());
  CHECK(load_pgs_rules(dir + "pgs_rules.json") == builtin_pgs_rules());
}

TEST_CASE("run manifests capture the invocation and parse back as JSON") {
  const char* argv[] = {"cgnn", "train", "--config", "cfg.json"};
  RunManifest m = make_manifest("train", 4, argv);
  CHECK(m.command == "train");
  CHECK(m.argv == std::vector<std::string>{"cgnn", "train", "--config", "cfg.json"});
  CHECK_FALSE(m.version.empty());
  REQUIRE(m.created_at.size() == 20);
  CHECK(m.created_at[10] == 'T');
  CHECK(m.created_at.back() == 'Z');

  m.inputs["dataset"] = "data.jsonl";
  m.settings["seed"] = "7";
  m.out_path = "model.cgnn";

  FileGuard guard;
  const std::string path = "test_formats_manifest.json";
  guard.paths = {path};
  write_manifest(m, path);
  const auto doc = nlohmann::json::parse(slurp(path));
  CHECK(doc.at("command") == "train");
  CHECK(doc.at("argv").size() == 4);
  CHECK(doc.at("inputs").at("dataset") == "data.jsonl");
  CHECK(doc.at("settings").at("seed") == "7");
  CHECK(doc.at("out") == "model.cgnn");
  CHECK(doc.at("version") == m.version);
  CHECK(doc.at("created_at") == m.created_at);
}
