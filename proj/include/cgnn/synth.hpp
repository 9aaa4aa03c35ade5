#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgnn/dataset.hpp"

namespace cgnn {

enum class WorldKind : std::uint8_t { Cvs, Pgs };

std::string to_string(WorldKind kind);
WorldKind world_kind_from_string(const std::string& s);

// Generator settings. Component features occupy disjoint blocks of
// `feature_dim_per_component` dims followed by `distractor_dim` dims of
// pure noise, so relational structure carries signal beyond any single
// block.
struct WorldConfig {
  WorldKind kind = WorldKind::Cvs;
  std::int64_t n_sequences = 100;
  std::int64_t frames = 50;
  std::int64_t feature_dim_per_component = 4;
  double noise_sigma = 0.5;
  std::int64_t distractor_dim = 4;
  std::uint64_t seed = 0;

  bool operator==(const WorldConfig&) const = default;
};

WorldConfig default_cvs_world_config();
WorldConfig default_pgs_world_config();

// Width of generated frame vectors: five component blocks plus distractors.
std::int64_t world_input_dim(const WorldConfig& cfg);

WorldConfig parse_world_config(const std::string& text);
std::string serialize_world_config(const WorldConfig& cfg);
WorldConfig load_world_config(const std::string& path);

// Component order fixed by the generators; block b covers feature dims
// [b*fd, (b+1)*fd).
inline constexpr std::array<const char*, 5> kCvsComponents = {
    "cystic_artery", "cystic_duct", "cystic_plate", "two_structures", "liver_visible"};
inline constexpr std::array<const char*, 5> kPgsComponents = {
    "adhesion", "distention", "hyperemic", "intra_hepatic", "necrotic"};

// Per-sequence latents: the frame each component becomes (and stays)
// active, -1 when it never does.
struct CvsSequenceLatents {
  std::array<std::int64_t, 5> activation_frame = {-1, -1, -1, -1, -1};

  bool active(std::size_t component, std::int64_t frame) const {
    return activation_frame[component] >= 0 && frame >= activation_frame[component];
  }
};

// Latent gallbladder state behind one PGS sequence. Categorical values use
// the class indexing of the corresponding graph preset (alphabetical:
// adhesion body=0, buried=1, majority=2, neck=3, none=4; distention
// distended=0, normal=1, shrivelled=2).
struct PgsComponents {
  std::int64_t adhesion = 4;
  std::int64_t distention = 1;
  bool hyperemic = false;
  bool intra_hepatic = false;
  bool necrotic = false;
};

// Monotone severity scoring that maps component states to a 1..5 grade.
// Shipped as a versioned data file with this builtin mirror.
struct PgsRuleTable {
  int version = 1;
  std::array<std::int64_t, 5> adhesion_points = {2, 4, 3, 1, 0};
  std::array<std::int64_t, 3> distention_points = {1, 0, 2};
  std::int64_t hyperemic_points = 2;
  std::int64_t intra_hepatic_points = 1;
  // grade g (1..4) applies while score <= grade_score_ceiling[g-1];
  // higher scores grade 5.
  std::array<std::int64_t, 4> grade_score_ceiling = {1, 3, 5, 7};
  bool necrotic_forces_worst = true;

  bool operator==(const PgsRuleTable&) const = default;
};

PgsRuleTable builtin_pgs_rules();
PgsRuleTable parse_pgs_rules(const std::string& text);
std::string serialize_pgs_rules(const PgsRuleTable& table);
PgsRuleTable load_pgs_rules(const std::string& path);

// Ground-truth labeling rules, identical to what the generators apply.
std::int64_t cvs_oracle(const std::array<bool, 5>& components_active);
std::int64_t pgs_oracle(const PgsComponents& components, const PgsRuleTable& rules);

struct GeneratedWorld {
  Dataset dataset;
  std::vector<CvsSequenceLatents> cvs_latents;
  std::vector<PgsComponents> pgs_latents;
};

GeneratedWorld generate_cvs_world(const WorldConfig& cfg, std::uint64_t seed);
GeneratedWorld generate_pgs_world(const WorldConfig& cfg, std::uint64_t seed);

// Dispatches on cfg.kind using cfg.seed.
GeneratedWorld generate_world(const WorldConfig& cfg);

}  // namespace cgnn
