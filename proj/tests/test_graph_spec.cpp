#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "cgnn/errors.hpp"
#include "cgnn/graph_spec.hpp"
#include "cgnn/rng.hpp"
#include "helpers.hpp"

using namespace cgnn;

namespace {

bool report_mentions(const std::vector<std::string>& report, const std::string& needle) {
  return std::any_of(report.begin(), report.end(), [&](const std::string& line) {
    return line.find(needle) != std::string::npos;
  });
}

// Minimal sound spec to mutate in the validation tests.
ConceptGraphSpec two_node_spec() {
  ConceptGraphSpec spec;
  spec.input_dim = 3;
  spec.global_dim = 4;
  for (const char* name : {"a", "b"}) {
    ConceptNodeSpec n;
    n.name = name;
    n.state_dim = 4;
    n.has_emission = true;
    n.emission = EmissionSpec{EmissionKind::Binary, 2, name};
    spec.nodes.push_back(std::move(n));
  }
  HyperedgeSpec e;
  e.name = "ab";
  e.state_dim = 4;
  e.members = {{"a", MemberRole::Undirected}, {"b", MemberRole::Undirected}};
  spec.hyperedges.push_back(std::move(e));
  return spec;
}

}  // namespace

TEST_CASE("critical-view preset lists the five assessment criteria feeding the verdict") {
  const ConceptGraphSpec spec = preset_cvs();
  CHECK(validate_spec(spec).empty());
  CHECK(spec.nodes.size() == 6);
  CHECK(spec.hyperedges.size() == 1);
  CHECK(spec.input_dim == 24);
  CHECK(spec.directionality_mode == DirectionalityMode::DirectedEncoders);

  for (const char* name :
       {"cvs", "cystic_artery", "cystic_duct", "cystic_plate", "two_structures", "liver_visible"}) {
    const ConceptNodeSpec* n = spec.find_node(name);
    REQUIRE(n != nullptr);
    CHECK(n->has_emission);
    CHECK(n->emission.kind == EmissionKind::Binary);
    CHECK(n->emission.output_dim() == 1);
    CHECK(n->emission.label_track == name);
  }

  const HyperedgeSpec* rel = spec.find_edge("cvs_relation");
  REQUIRE(rel != nullptr);
  CHECK(rel->is_directed());
  REQUIRE(rel->members.size() == 6);
  std::size_t inputs = 0;
  for (const auto& m : rel->members) inputs += m.role == MemberRole::Input;
  CHECK(inputs == 5);
  CHECK(rel->members.back().node == "cvs");
  CHECK(rel->members.back().role == MemberRole::Output);
}

TEST_CASE("gallbladder-grading preset wires five findings into an ordinal severity readout") {
  const ConceptGraphSpec spec = preset_pgs();
  CHECK(validate_spec(spec).empty());
  CHECK(spec.nodes.size() == 6);
  CHECK(spec.input_dim == 34);

  const ConceptNodeSpec* pgs = spec.find_node("pgs");
  REQUIRE(pgs != nullptr);
  CHECK(pgs->emission.kind == EmissionKind::Ordinal);
  CHECK(pgs->emission.classes == 5);
  CHECK(pgs->emission.output_dim() == 5);

  CHECK(spec.find_node("adhesion")->emission.kind == EmissionKind::Categorical);
  CHECK(spec.find_node("adhesion")->emission.classes == 5);
  CHECK(spec.find_node("distention")->emission.classes == 3);
  for (const char* name : {"hyperemic", "intra_hepatic", "necrotic"}) {
    CHECK(spec.find_node(name)->emission.kind == EmissionKind::Binary);
  }

  const HyperedgeSpec* rel = spec.find_edge("pgs_relation");
  REQUIRE(rel != nullptr);
  CHECK(rel->members.back().node == "pgs");
  CHECK(rel->members.back().role == MemberRole::Output);
}

TEST_CASE("presets survive a serialize/parse round trip byte for byte") {
  for (const ConceptGraphSpec& spec : {preset_cvs(), preset_pgs()}) {
    const std::string text = serialize_graph_spec(spec);
    const ConceptGraphSpec back = parse_graph_spec(text);
    CHECK(back == spec);
    CHECK(serialize_graph_spec(back) == text);
    CHECK(spec_hash(back) == spec_hash(spec));
  }
  CHECK(spec_hash(preset_cvs()) != spec_hash(preset_pgs()));
}

TEST_CASE("random specs round trip across every encoder-sharing mode") {
  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mode = static_cast<DirectionalityMode>(trial % 3);
    const ConceptGraphSpec spec = testing::make_random_spec(rng, mode);
    REQUIRE(validate_spec(spec).empty());
    const std::string text = serialize_graph_spec(spec);
    const ConceptGraphSpec back = parse_graph_spec(text);
    CHECK(back == spec);
    CHECK(serialize_graph_spec(back) == text);
  }
}

TEST_CASE("a member naming a node that does not exist is rejected with the bad name") {
  const std::string doc = R"({
    "input_dim": 3,
    "nodes": [{"name": "cystic_duct", "state_dim": 4,
               "emission": {"kind": "binary"}}],
    "hyperedges": [{"name": "pair", "state_dim": 4,
                    "members": [{"node": "cystic_duct"}, {"node": "cystic_dutc"}]}]
  })";
  CHECK_THROWS_WITH_AS(parse_graph_spec(doc),
                       doctest::Contains("unknown node \"cystic_dutc\""), ConfigError);
}

TEST_CASE("structural validation flags each way a graph can be unsound") {
  SUBCASE("an edge needs at least two members") {
    ConceptGraphSpec spec = two_node_spec();
    spec.hyperedges[0].members.pop_back();
    CHECK(report_mentions(validate_spec(spec), "requires >= 2 members"));
  }
  SUBCASE("a directed edge needs members on both sides") {
    ConceptGraphSpec spec = two_node_spec();
    for (auto& m : spec.hyperedges[0].members) m.role = MemberRole::Input;
    CHECK(report_mentions(validate_spec(spec), "lacks a nonempty input and output set"));
  }
  SUBCASE("undirected and directed roles cannot mix on one edge") {
    ConceptGraphSpec spec = two_node_spec();
    spec.hyperedges[0].members[0].role = MemberRole::Input;
    CHECK(report_mentions(validate_spec(spec), "mixes undirected and directed roles"));
  }
  SUBCASE("an edge cannot list the same node twice") {
    ConceptGraphSpec spec = two_node_spec();
    spec.hyperedges[0].members[1].node = "a";
    CHECK(report_mentions(validate_spec(spec), "lists node \"a\" twice"));
  }
  SUBCASE("names are unique across nodes and edges together") {
    ConceptGraphSpec spec = two_node_spec();
    spec.hyperedges[0].name = "b";
    CHECK(report_mentions(validate_spec(spec), "duplicate name \"b\""));
  }
  SUBCASE("at least one element must emit something") {
    ConceptGraphSpec spec = two_node_spec();
    for (auto& n : spec.nodes) n.has_emission = false;
    CHECK(report_mentions(validate_spec(spec), "must define an emission"));
  }
  SUBCASE("node widths must agree so the shared encoders fit every node") {
    ConceptGraphSpec spec = two_node_spec();
    spec.nodes[1].state_dim = 8;
    CHECK(report_mentions(validate_spec(spec), "share one state_dim"));
  }
  SUBCASE("dims must be positive") {
    ConceptGraphSpec spec = two_node_spec();
    spec.global_dim = 0;
    spec.input_dim = -1;
    const auto report = validate_spec(spec);
    CHECK(report_mentions(report, "global_dim must be positive"));
    CHECK(report_mentions(report, "input_dim must be positive"));
  }
  SUBCASE("a multiclass emission needs at least two classes") {
    ConceptGraphSpec spec = two_node_spec();
    spec.nodes[0].emission = EmissionSpec{EmissionKind::Ordinal, 1, "a"};
    CHECK(report_mentions(validate_spec(spec), "requires K >= 2"));
  }
}

TEST_CASE("parse failures carry a usable message") {
  CHECK_THROWS_WITH_AS(parse_graph_spec("{"), doctest::Contains("not valid JSON"), ConfigError);
  CHECK_THROWS_AS(parse_graph_spec("[]"), ConfigError);
  CHECK_THROWS_AS(parse_graph_spec(R"({"nodes": []})"), ConfigError);  // input_dim missing
  CHECK_THROWS_WITH_AS(
      parse_graph_spec(R"({"input_dim": 2, "directionality_mode": "sideways", "nodes": []})"),
      doctest::Contains("unknown directionality_mode"), ConfigError);

  const std::string bad_role = R"({
    "input_dim": 2,
    "nodes": [{"name": "a", "emission": {"kind": "binary"}}, {"name": "b"}],
    "hyperedges": [{"name": "e", "members": [{"node": "a", "role": "sink"},
                                             {"node": "b"}]}]
  })";
  CHECK_THROWS_WITH_AS(parse_graph_spec(bad_role), doctest::Contains("unknown member role"),
                       ConfigError);
}

TEST_CASE("emission defaults follow the owner") {
  const std::string doc = R"({
    "input_dim": 2,
    "nodes": [{"name": "a", "emission": {"kind": "ordinal", "classes": 4}},
              {"name": "b", "emission": {"kind": "binary", "label_track": "shared"}}],
    "hyperedges": [{"name": "e", "members": [{"node": "a"}, {"node": "b"}]}]
  })";
  const ConceptGraphSpec spec = parse_graph_spec(doc);
  CHECK(spec.find_node("a")->emission.label_track == "a");
  CHECK(spec.find_node("a")->emission.output_dim() == 4);
  CHECK(spec.find_node("b")->emission.label_track == "shared");

  const ConceptGraphSpec back = parse_graph_spec(serialize_graph_spec(spec));
  CHECK(back == spec);
}

TEST_CASE("incidence queries agree with the member lists") {
  const ConceptGraphSpec cvs = preset_cvs();
  for (const char* name : {"cystic_artery", "cvs", "liver_visible"}) {
    CHECK(incident_edges(cvs, name) == std::vector<std::string>{"cvs_relation"});
  }
  CHECK_THROWS_AS(incident_edges(cvs, "gallbladder"), ContractError);

  RngStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const ConceptGraphSpec spec =
        testing::make_random_spec(rng, DirectionalityMode::UndirectedEncoding);
    for (const auto& n : spec.nodes) {
      const auto listed = incident_edges(spec, n.name);
      for (const auto& e : spec.hyperedges) {
        const bool member = std::any_of(e.members.begin(), e.members.end(),
                                        [&](const auto& m) { return m.node == n.name; });
        const bool named =
            std::find(listed.begin(), listed.end(), e.name) != listed.end();
        CHECK(member == named);
      }
    }
  }
}

TEST_CASE("the connectivity drawing places nodes as circles and edges as junction squares") {
  const std::string dot = export_dot(preset_cvs());
  CHECK(dot.find("\"cvs\" [shape=circle]") != std::string::npos);
  CHECK(dot.find("shape=square") != std::string::npos);
  CHECK(dot.find("cvs_relation") != std::string::npos);
  // Directed membership renders as an arrow toward the output node.
  CHECK(dot.find("dir=forward") != std::string::npos);
}
