#include "cgnn/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cgnn/errors.hpp"
#include "cgnn/rng.hpp"

namespace cgnn {

using nlohmann::json;

std::string to_string(WorldKind kind) { return kind == WorldKind::Cvs ? "cvs" : "pgs"; }

WorldKind world_kind_from_string(const std::string& s) {
  if (s == "cvs") return WorldKind::Cvs;
  if (s == "pgs") return WorldKind::Pgs;
  throw ConfigError("unknown world \"" + s + "\" (expected cvs or pgs)");
}

WorldConfig default_cvs_world_config() {
  WorldConfig cfg;
  cfg.kind = WorldKind::Cvs;
  cfg.n_sequences = 100;
  cfg.frames = 50;
  cfg.feature_dim_per_component = 4;
  cfg.noise_sigma = 0.5;
  cfg.distractor_dim = 4;
  return cfg;
}

WorldConfig default_pgs_world_config() {
  WorldConfig cfg;
  cfg.kind = WorldKind::Pgs;
  cfg.n_sequences = 200;
  cfg.frames = 8;
  cfg.feature_dim_per_component = 6;
  cfg.noise_sigma = 0.5;
  cfg.distractor_dim = 4;
  return cfg;
}

std::int64_t world_input_dim(const WorldConfig& cfg) {
  return 5 * cfg.feature_dim_per_component + cfg.distractor_dim;
}

namespace {

void validate_world_config(const WorldConfig& cfg) {
  if (cfg.n_sequences < 1) throw ConfigError("n_sequences must be positive");
  if (cfg.frames < 1) throw ConfigError("frames must be positive");
  if (cfg.feature_dim_per_component < 1) {
    throw ConfigError("feature_dim_per_component must be positive");
  }
  if (cfg.kind == WorldKind::Pgs && cfg.feature_dim_per_component < 5) {
    throw ConfigError("pgs world needs feature_dim_per_component >= 5 (up to 5 classes per block)");
  }
  if (cfg.distractor_dim < 0) throw ConfigError("distractor_dim must be >= 0");
  if (cfg.noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
}

}  // namespace

WorldConfig parse_world_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("world config is not valid JSON: ") + err.what());
  }
  if (!doc.is_object()) throw ConfigError("world config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    static const std::set<std::string> known = {"world",       "n_sequences",
                                                "frames",      "feature_dim_per_component",
                                                "noise_sigma", "distractor_dim",
                                                "seed"};
    if (!known.count(key)) throw ConfigError("world config: unknown key \"" + key + "\"");
  }
  WorldConfig cfg;
  try {
    const WorldKind kind = world_kind_from_string(doc.value("world", "cvs"));
    cfg = kind == WorldKind::Cvs ? default_cvs_world_config() : default_pgs_world_config();
    cfg.n_sequences = doc.value("n_sequences", cfg.n_sequences);
    cfg.frames = doc.value("frames", cfg.frames);
    cfg.feature_dim_per_component =
        doc.value("feature_dim_per_component", cfg.feature_dim_per_component);
    cfg.noise_sigma = doc.value("noise_sigma", cfg.noise_sigma);
    cfg.distractor_dim = doc.value("distractor_dim", cfg.distractor_dim);
    cfg.seed = doc.value("seed", cfg.seed);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("world config: ") + err.what());
  }
  validate_world_config(cfg);
  return cfg;
}

std::string serialize_world_config(const WorldConfig& cfg) {
  json doc;
  doc["world"] = to_string(cfg.kind);
  doc["n_sequences"] = cfg.n_sequences;
  doc["frames"] = cfg.frames;
  doc["feature_dim_per_component"] = cfg.feature_dim_per_component;
  doc["noise_sigma"] = cfg.noise_sigma;
  doc["distractor_dim"] = cfg.distractor_dim;
  doc["seed"] = cfg.seed;
  return doc.dump(2) + "\n";
}

WorldConfig load_world_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open world config \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_world_config(buf.str());
}

PgsRuleTable builtin_pgs_rules() { return PgsRuleTable{}; }

PgsRuleTable parse_pgs_rules(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("rule table is not valid JSON: ") + err.what());
  }
  PgsRuleTable table;
  try {
    table.version = doc.at("version").get<int>();
    const auto adhesion = doc.at("adhesion_points").get<std::vector<std::int64_t>>();
    const auto distention = doc.at("distention_points").get<std::vector<std::int64_t>>();
    const auto ceilings = doc.at("grade_score_ceiling").get<std::vector<std::int64_t>>();
    if (adhesion.size() != 5 || distention.size() != 3 || ceilings.size() != 4) {
      throw ConfigError("rule table arrays have wrong lengths");
    }
    std::copy(adhesion.begin(), adhesion.end(), table.adhesion_points.begin());
    std::copy(distention.begin(), distention.end(), table.distention_points.begin());
    std::copy(ceilings.begin(), ceilings.end(), table.grade_score_ceiling.begin());
    table.hyperemic_points = doc.at("hyperemic_points").get<std::int64_t>();
    table.intra_hepatic_points = doc.at("intra_hepatic_points").get<std::int64_t>();
    table.necrotic_forces_worst = doc.at("necrotic_forces_worst").get<bool>();
  } catch (const json::exception& err) {
    throw ConfigError(std::string("rule table: ") + err.what());
  }
  for (std::size_t g = 1; g < table.grade_score_ceiling.size(); ++g) {
    if (table.grade_score_ceiling[g] <= table.grade_score_ceiling[g - 1]) {
      throw ConfigError("rule table grade ceilings must increase");
    }
  }
  return table;
}

std::string serialize_pgs_rules(const PgsRuleTable& table) {
  json doc;
  doc["version"] = table.version;
  doc["adhesion_points"] = table.adhesion_points;
  doc["distention_points"] = table.distention_points;
  doc["hyperemic_points"] = table.hyperemic_points;
  doc["intra_hepatic_points"] = table.intra_hepatic_points;
  doc["grade_score_ceiling"] = table.grade_score_ceiling;
  doc["necrotic_forces_worst"] = table.necrotic_forces_worst;
  return doc.dump(2) + "\n";
}

PgsRuleTable load_pgs_rules(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rule table \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pgs_rules(buf.str());
}

std::int64_t cvs_oracle(const std::array<bool, 5>& components_active) {
  for (bool active : components_active) {
    if (!active) return 0;
  }
  return 1;
}

std::int64_t pgs_oracle(const PgsComponents& c, const PgsRuleTable& rules) {
  if (c.adhesion < 0 || c.adhesion > 4 || c.distention < 0 || c.distention > 2) {
    throw ContractError("pgs component state out of range");
  }
  if (c.necrotic && rules.necrotic_forces_worst) return 5;
  const std::int64_t score = rules.adhesion_points[static_cast<std::size_t>(c.adhesion)] +
                             rules.distention_points[static_cast<std::size_t>(c.distention)] +
                             (c.hyperemic ? rules.hyperemic_points : 0) +
                             (c.intra_hepatic ? rules.intra_hepatic_points : 0);
  for (std::size_t g = 0; g < rules.grade_score_ceiling.size(); ++g) {
    if (score <= rules.grade_score_ceiling[g]) return static_cast<std::int64_t>(g) + 1;
  }
  return 5;
}

namespace {

std::string sequence_id(const char* prefix, std::int64_t index) {
  std::ostringstream out;
  out << prefix << "-";
  std::string digits = std::to_string(index);
  for (std::size_t i = digits.size(); i < 4; ++i) out << '0';
  out << digits;
  return out.str();
}

void append_block_noise(std::vector<double>& frame, const std::vector<double>& mu,
                        double sigma, RngStream& rng) {
  for (double m : mu) frame.push_back(m + (sigma > 0 ? rng.normal(0.0, sigma) : 0.0));
}

}  // namespace

GeneratedWorld generate_cvs_world(const WorldConfig& cfg, std::uint64_t seed) {
  validate_world_config(cfg);
  GeneratedWorld world;
  const std::int64_t fd = cfg.feature_dim_per_component;
  // Each component independently fails to appear with probability
  // 1 - 0.5^(1/5), so all five appear in exactly half of sequences in
  // expectation, matching the achieved/not-achieved balance.
  const double p_never = 1.0 - std::pow(0.5, 0.2);

  for (std::int64_t s = 0; s < cfg.n_sequences; ++s) {
    RngStream rng(derive_seed(seed, 0x637673ull, static_cast<std::uint64_t>(s)));
    CvsSequenceLatents latents;
    for (std::size_t c = 0; c < 5; ++c) {
      if (rng.uniform() < p_never) {
        latents.activation_frame[c] = -1;
      } else {
        latents.activation_frame[c] =
            static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg.frames)));
      }
    }

    SequenceRecord rec;
    rec.id = sequence_id("cvs", s);
    std::array<std::vector<std::int64_t>, 5> component_tracks;
    std::vector<std::int64_t> cvs_track;
    for (std::int64_t t = 0; t < cfg.frames; ++t) {
      std::vector<double> frame;
      frame.reserve(static_cast<std::size_t>(world_input_dim(cfg)));
      std::array<bool, 5> active{};
      for (std::size_t c = 0; c < 5; ++c) {
        active[c] = latents.active(c, t);
        std::vector<double> mu(static_cast<std::size_t>(fd), active[c] ? 0.5 : -0.5);
        append_block_noise(frame, mu, cfg.noise_sigma, rng);
        component_tracks[c].push_back(active[c] ? 1 : 0);
      }
      for (std::int64_t d = 0; d < cfg.distractor_dim; ++d) frame.push_back(rng.normal(0.0, 1.0));
      cvs_track.push_back(cvs_oracle(active));
      rec.frames.push_back(std::move(frame));
    }
    for (std::size_t c = 0; c < 5; ++c) {
      rec.labels[kCvsComponents[c]] = LabelTrack{false, component_tracks[c]};
    }
    rec.labels["cvs"] = LabelTrack{false, cvs_track};
    world.dataset.sequences.push_back(std::move(rec));
    world.cvs_latents.push_back(latents);
  }
  return world;
}

GeneratedWorld generate_pgs_world(const WorldConfig& cfg, std::uint64_t seed) {
  validate_world_config(cfg);
  GeneratedWorld world;
  const PgsRuleTable rules = builtin_pgs_rules();
  const std::int64_t fd = cfg.feature_dim_per_component;

  // Class priors follow the class indexing of the graph preset
  // (alphabetical). Adhesion: body, buried, majority, neck, none.
  const std::array<double, 5> adhesion_prior = {0.20, 0.10, 0.15, 0.25, 0.30};
  // Distention: distended, normal, shrivelled.
  const std::array<double, 3> distention_prior = {0.35, 0.45, 0.20};

  auto draw_class = [](RngStream& rng, const auto& prior) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
      acc += prior[i];
      if (u < acc) return static_cast<std::int64_t>(i);
    }
    return static_cast<std::int64_t>(prior.size() - 1);
  };

  for (std::int64_t s = 0; s < cfg.n_sequences; ++s) {
    RngStream rng(derive_seed(seed, 0x706773ull, static_cast<std::uint64_t>(s)));
    PgsComponents comp;
    comp.adhesion = draw_class(rng, adhesion_prior);
    comp.distention = draw_class(rng, distention_prior);
    comp.hyperemic = rng.uniform() < 0.45;
    comp.intra_hepatic = rng.uniform() < 0.25;
    comp.necrotic = rng.uniform() < 0.12;
    const std::int64_t grade = pgs_oracle(comp, rules);

    SequenceRecord rec;
    rec.id = sequence_id("pgs", s);
    for (std::int64_t t = 0; t < cfg.frames; ++t) {
      std::vector<double> frame;
      frame.reserve(static_cast<std::size_t>(world_input_dim(cfg)));
      auto categorical_block = [&](std::int64_t cls, std::int64_t k) {
        std::vector<double> mu(static_cast<std::size_t>(fd), 0.0);
        for (std::int64_t j = 0; j < k; ++j) mu[static_cast<std::size_t>(j)] = j == cls ? 0.5 : -0.5;
        append_block_noise(frame, mu, cfg.noise_sigma, rng);
      };
      auto binary_block = [&](bool value) {
        std::vector<double> mu(static_cast<std::size_t>(fd), value ? 0.5 : -0.5);
        append_block_noise(frame, mu, cfg.noise_sigma, rng);
      };
      categorical_block(comp.adhesion, 5);
      categorical_block(comp.distention, 3);
      binary_block(comp.hyperemic);
      binary_block(comp.intra_hepatic);
      binary_block(comp.necrotic);
      for (std::int64_t d = 0; d < cfg.distractor_dim; ++d) frame.push_back(rng.normal(0.0, 1.0));
      rec.frames.push_back(std::move(frame));
    }
    rec.labels["pgs"] = LabelTrack{true, {grade}};
    rec.labels["adhesion"] = LabelTrack{true, {comp.adhesion}};
    rec.labels["distention"] = LabelTrack{true, {comp.distention}};
    rec.labels["hyperemic"] = LabelTrack{true, {comp.hyperemic ? 1 : 0}};
    rec.labels["intra_hepatic"] = LabelTrack{true, {comp.intra_hepatic ? 1 : 0}};
    rec.labels["necrotic"] = LabelTrack{true, {comp.necrotic ? 1 : 0}};
    world.dataset.sequences.push_back(std::move(rec));
    world.pgs_latents.push_back(comp);
  }
  return world;
}

GeneratedWorld generate_world(const WorldConfig& cfg) {
  return cfg.kind == WorldKind::Cvs ? generate_cvs_world(cfg, cfg.seed)
                                    : generate_pgs_world(cfg, cfg.seed);
}

}  // namespace cgnn
