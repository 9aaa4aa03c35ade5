// Command-line front end: generate synthetic worlds, train, evaluate,
// gradient-check, split datasets, and export graph drawings. Each artifact-
// producing run writes a manifest first so it can be replayed later.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cgnn/checkpoint.hpp"
#include "cgnn/dataset.hpp"
#include "cgnn/errors.hpp"
#include "cgnn/gradcheck.hpp"
#include "cgnn/graph_spec.hpp"
#include "cgnn/learning.hpp"
#include "cgnn/log.hpp"
#include "cgnn/manifest.hpp"
#include "cgnn/model.hpp"
#include "cgnn/synth.hpp"
#include "cgnn/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cgnn::IoError("cannot open \"" + path.string() + "\" for writing");
  out << text;
  if (!out) throw cgnn::IoError("failed writing \"" + path.string() + "\"");
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw cgnn::IoError("cannot create output directory \"" + out + "\": " + ec.message());
  return dir;
}

struct GenerateArgs {
  std::string world = "cvs";
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_generate(const GenerateArgs& args, int argc, const char* const* argv) {
  cgnn::WorldConfig cfg;
  if (!args.config.empty()) {
    cfg = cgnn::load_world_config(args.config);
  } else {
    cfg = args.world == "pgs" ? cgnn::default_pgs_world_config() : cgnn::default_cvs_world_config();
  }
  if (args.seed_given) cfg.seed = args.seed;

  cgnn::RunManifest man = cgnn::make_manifest("generate", argc, argv);
  if (!args.config.empty()) man.inputs["config"] = args.config;
  man.settings["world_config"] = cgnn::serialize_world_config(cfg);
  man.out_path = args.out;
  fs::path out_path(args.out);
  if (out_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out_path.parent_path(), ec);
  }
  cgnn::write_manifest(man, args.out + ".manifest.json");

  cgnn::GeneratedWorld world = cgnn::generate_world(cfg);
  cgnn::save_dataset(world.dataset, args.out);
  std::cout << "wrote " << world.dataset.sequences.size() << " sequences to " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string spec;
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::int64_t epochs = 0;
  bool epochs_given = false;
  double lr = 0.0;
  bool lr_given = false;
  std::string precision;
  bool deterministic = false;
};

template <class Real>
int run_train(const cgnn::ConceptGraphSpec& spec, const cgnn::Dataset& ds,
              const cgnn::TrainConfig& cfg, const TrainArgs& args, const fs::path& out_dir) {
  cgnn::Model<Real> model = cgnn::init_model<Real>(spec, cfg.hyper, cfg.seed);
  cgnn::TrainState<Real> state;
  if (!args.resume.empty()) {
    cgnn::Checkpoint ck = cgnn::Checkpoint::load(args.resume);
    if (!cgnn::checkpoint_matches_spec(ck, spec)) {
      throw cgnn::DataError("checkpoint \"" + args.resume +
                            "\" was written for a different graph spec");
    }
    state = cgnn::restore_training_state(model, ck);
    cgnn::log_info("resuming at epoch " + std::to_string(state.next_epoch));
  }

  const std::int64_t first_epoch = state.next_epoch;
  const fs::path history_path = out_dir / "history.jsonl";
  std::ofstream history(history_path,
                        args.resume.empty() ? std::ios::binary : std::ios::binary | std::ios::app);
  if (!history) throw cgnn::IoError("cannot open \"" + history_path.string() + "\" for writing");

  // One epoch per library call; epoch-scoped seeding makes this identical
  // to a single uninterrupted call, and we get progress lines for free.
  for (std::int64_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    cgnn::TrainConfig step = cfg;
    step.epochs = epoch + 1;
    const std::vector<double> losses = cgnn::train(model, ds, step, state);
    json line;
    line["epoch"] = epoch;
    line["loss"] = losses.at(0);
    history << line.dump() << "\n";
    history.flush();
    std::ostringstream msg;
    msg << "epoch " << (epoch + 1) << "/" << cfg.epochs << " mean sequence loss "
        << std::setprecision(6) << losses.at(0);
    cgnn::log_info(msg.str());
  }
  if (!history) throw cgnn::IoError("failed writing \"" + history_path.string() + "\"");

  const fs::path ck_path = out_dir / "checkpoint.cgnn";
  cgnn::training_checkpoint(model, state).save(ck_path.string());
  std::cout << "trained epochs " << first_epoch << ".." << cfg.epochs << ", checkpoint at "
            << ck_path.string() << "\n";
  return 0;
}

int cmd_train(const TrainArgs& args, int argc, const char* const* argv) {
  cgnn::ConceptGraphSpec spec = cgnn::load_graph_spec(args.spec);
  cgnn::Dataset ds = cgnn::load_dataset(args.data);
  cgnn::TrainConfig cfg;
  if (!args.config.empty()) cfg = cgnn::load_train_config(args.config);
  if (args.seed_given) cfg.seed = args.seed;
  if (args.epochs_given) cfg.epochs = args.epochs;
  if (args.lr_given) cfg.learning_rate = args.lr;
  if (!args.precision.empty()) cfg.precision = cgnn::precision_from_string(args.precision);
  if (args.deterministic) cfg.deterministic = true;

  fs::path out_dir = prepare_out_dir(args.out);
  write_text_file(out_dir / "train_config.json", cgnn::serialize_train_config(cfg));

  cgnn::RunManifest man = cgnn::make_manifest("train", argc, argv);
  man.inputs["spec"] = args.spec;
  man.inputs["data"] = args.data;
  if (!args.config.empty()) man.inputs["config"] = args.config;
  if (!args.resume.empty()) man.inputs["resume"] = args.resume;
  man.settings["effective_config"] = "train_config.json";
  man.settings["seed"] = std::to_string(cfg.seed);
  man.settings["precision"] = cgnn::to_string(cfg.precision);
  man.out_path = args.out;
  cgnn::write_manifest(man, (out_dir / "manifest.json").string());

  if (cfg.precision == cgnn::Precision::F64) {
    return run_train<double>(spec, ds, cfg, args, out_dir);
  }
  return run_train<float>(spec, ds, cfg, args, out_dir);
}

struct EvalArgs {
  std::string spec;
  std::string data;
  std::string checkpoint;
  std::string config;
  std::string out;
};

template <class Real>
int run_eval(const cgnn::ConceptGraphSpec& spec, const cgnn::Checkpoint& ck,
             const cgnn::Dataset& ds, const cgnn::TrainConfig& cfg, const fs::path& out_dir) {
  // Encoder widths are recoverable from the stored tensors; everything else
  // the forward pass needs comes from the spec and the eval-time config.
  cgnn::ModelHyper hyper = cfg.hyper;
  hyper.encoder_hidden_dim = ck.entry("fe.l1.w").shape.at(0);
  hyper.frame_embed_dim = ck.entry("fe.l2.w").shape.at(0);

  cgnn::Model<Real> model = cgnn::init_model<Real>(spec, hyper, 0);
  cgnn::load_model_params(model, ck);

  const auto predictions = cgnn::predict(model, ds, cfg.ordinal_decode_rule);
  const cgnn::MetricReport report =
      cgnn::score_predictions(predictions, spec, cfg.sequence_reduction);

  const std::string table = cgnn::render_metrics_text(report);
  write_text_file(out_dir / "metrics.txt", table);
  write_text_file(out_dir / "metrics.json", cgnn::render_metrics_json(report));
  write_text_file(out_dir / "predictions.jsonl", cgnn::serialize_predictions(predictions));
  std::cout << table;
  return 0;
}

int cmd_eval(const EvalArgs& args, int argc, const char* const* argv) {
  cgnn::ConceptGraphSpec spec = cgnn::load_graph_spec(args.spec);
  cgnn::Checkpoint ck = cgnn::Checkpoint::load(args.checkpoint);
  if (!cgnn::checkpoint_matches_spec(ck, spec)) {
    throw cgnn::DataError("checkpoint \"" + args.checkpoint +
                          "\" does not match graph spec \"" + args.spec +
                          "\" (stored spec hash differs)");
  }
  cgnn::Dataset ds = cgnn::load_dataset(args.data);
  cgnn::TrainConfig cfg;
  if (!args.config.empty()) cfg = cgnn::load_train_config(args.config);

  fs::path out_dir = prepare_out_dir(args.out);
  cgnn::RunManifest man = cgnn::make_manifest("eval", argc, argv);
  man.inputs["spec"] = args.spec;
  man.inputs["data"] = args.data;
  man.inputs["checkpoint"] = args.checkpoint;
  if (!args.config.empty()) man.inputs["config"] = args.config;
  man.out_path = args.out;
  cgnn::write_manifest(man, (out_dir / "manifest.json").string());

  if (ck.dtype("fe.l1.w") == cgnn::DtypeCode::F64) {
    return run_eval<double>(spec, ck, ds, cfg, out_dir);
  }
  return run_eval<float>(spec, ck, ds, cfg, out_dir);
}

struct GradcheckArgs {
  std::string spec;
  std::int64_t frames = 2;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::int64_t encoder_dim = 8;
  std::string out;
};

int cmd_gradcheck(const GradcheckArgs& args, int argc, const char* const* argv) {
  cgnn::ConceptGraphSpec spec =
      args.spec.empty() ? cgnn::gradcheck_toy_spec() : cgnn::load_graph_spec(args.spec);
  cgnn::ModelHyper hyper;
  hyper.encoder_hidden_dim = args.encoder_dim;
  hyper.frame_embed_dim = args.encoder_dim;

  const cgnn::GradcheckReport report =
      cgnn::run_gradcheck(spec, hyper, args.frames, args.seed, args.eps, args.tolerance);

  std::ostringstream body;
  body << std::scientific << std::setprecision(3);
  for (const auto& g : report.groups) {
    body << std::left << std::setw(34) << g.parameter << " " << g.max_rel_err << "\n";
  }
  body << "worst " << report.worst_parameter << " " << report.worst << " (tolerance "
       << report.tolerance << "): " << (report.passed ? "pass" : "FAIL") << "\n";
  std::cout << body.str();

  if (!args.out.empty()) {
    fs::path out_dir = prepare_out_dir(args.out);
    cgnn::RunManifest man = cgnn::make_manifest("gradcheck", argc, argv);
    if (!args.spec.empty()) man.inputs["spec"] = args.spec;
    man.settings["frames"] = std::to_string(args.frames);
    man.settings["seed"] = std::to_string(args.seed);
    man.out_path = args.out;
    cgnn::write_manifest(man, (out_dir / "manifest.json").string());
    json doc;
    doc["tolerance"] = report.tolerance;
    doc["worst"] = report.worst;
    doc["worst_parameter"] = report.worst_parameter;
    doc["passed"] = report.passed;
    json groups = json::array();
    for (const auto& g : report.groups) {
      groups.push_back({{"parameter", g.parameter}, {"max_rel_err", g.max_rel_err}});
    }
    doc["groups"] = groups;
    write_text_file(out_dir / "gradcheck.json", doc.dump(2) + "\n");
  }
  if (!report.passed) {
    cgnn::log_error("gradient check failed at " + report.worst_parameter);
    return 3;
  }
  return 0;
}

struct SplitsArgs {
  std::string data;
  std::string out;
  double ratio = 0.9;
  std::int64_t n = 5;
  std::uint64_t seed = 0;
};

int cmd_splits(const SplitsArgs& args, int argc, const char* const* argv) {
  cgnn::Dataset ds = cgnn::load_dataset(args.data);
  fs::path out_dir = prepare_out_dir(args.out);

  cgnn::RunManifest man = cgnn::make_manifest("splits", argc, argv);
  man.inputs["data"] = args.data;
  man.settings["ratio"] = std::to_string(args.ratio);
  man.settings["n"] = std::to_string(args.n);
  man.settings["seed"] = std::to_string(args.seed);
  man.out_path = args.out;
  cgnn::write_manifest(man, (out_dir / "manifest.json").string());

  const auto splits = cgnn::split_dataset(ds.sequences.size(), args.ratio,
                                          static_cast<std::size_t>(args.n), args.seed);
  for (std::size_t k = 0; k < splits.size(); ++k) {
    auto write_ids = [&](const std::vector<std::size_t>& indices, const std::string& suffix) {
      std::ostringstream text;
      for (std::size_t i : indices) text << ds.sequences[i].id << "\n";
      const fs::path path = out_dir / ("split_" + std::to_string(k) + "." + suffix + ".txt");
      write_text_file(path, text.str());
      std::cout << path.string() << " (" << indices.size() << " ids)\n";
    };
    write_ids(splits[k].train, "train");
    write_ids(splits[k].test, "test");
  }
  return 0;
}

struct ExportDotArgs {
  std::string spec;
  std::string out;
};

int cmd_export_dot(const ExportDotArgs& args, int argc, const char* const* argv) {
  cgnn::ConceptGraphSpec spec = cgnn::load_graph_spec(args.spec);
  const std::string dot = cgnn::export_dot(spec);
  if (args.out.empty()) {
    std::cout << dot;
    return 0;
  }
  cgnn::RunManifest man = cgnn::make_manifest("export-dot", argc, argv);
  man.inputs["spec"] = args.spec;
  man.out_path = args.out;
  cgnn::write_manifest(man, args.out + ".manifest.json");
  write_text_file(args.out, dot);
  std::cout << "wrote " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept graph network toolkit"};
  app.set_version_flag("--version",
                       std::string(cgnn::kVersionString) + " (" + cgnn::kBuildId + ")");
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "generate a synthetic world dataset");
  generate->add_option("--world", gen.world, "builtin world when no --config is given")
      ->check(CLI::IsMember({"cvs", "pgs"}));
  generate->add_option("--config", gen.config, "world config JSON path");
  generate->add_option("--out", gen.out, "output dataset path")->required();
  auto* gen_seed = generate->add_option("--seed", gen.seed, "override the config seed");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  train->add_option("--spec", tr.spec, "graph spec path or preset:<name>")->required();
  train->add_option("--data", tr.data, "training dataset path")->required();
  train->add_option("--config", tr.config, "training config JSON path");
  train->add_option("--out", tr.out, "output directory")->required();
  train->add_option("--resume", tr.resume, "checkpoint to resume from");
  auto* tr_seed = train->add_option("--seed", tr.seed, "override the config seed");
  auto* tr_epochs = train->add_option("--epochs", tr.epochs, "override the epoch count");
  auto* tr_lr = train->add_option("--lr", tr.lr, "override the learning rate");
  train->add_option("--precision", tr.precision, "numeric precision")
      ->check(CLI::IsMember({"f32", "f64"}));
  train->add_flag("--deterministic", tr.deterministic, "force single-threaded numeric paths");

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--spec", ev.spec, "graph spec path or preset:<name>")->required();
  eval->add_option("--data", ev.data, "evaluation dataset path")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  eval->add_option("--config", ev.config, "training config JSON (decode/reduction settings)");
  eval->add_option("--out", ev.out, "output directory")->required();

  GradcheckArgs gc;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "compare gradients against finite differences");
  gradcheck->add_option("--spec", gc.spec, "graph spec path (default: builtin two-node toy)");
  gradcheck->add_option("--frames", gc.frames, "sequence length, 1..4");
  gradcheck->add_option("--seed", gc.seed, "seed for weights and probe data");
  gradcheck->add_option("--eps", gc.eps, "finite difference step");
  gradcheck->add_option("--tolerance", gc.tolerance, "max relative error allowed");
  gradcheck->add_option("--encoder-dim", gc.encoder_dim, "encoder hidden and embed width");
  gradcheck->add_option("--out", gc.out, "optional directory for the JSON report");

  SplitsArgs sp;
  CLI::App* splits = app.add_subcommand("splits", "write shuffled train/test id files");
  splits->add_option("--data", sp.data, "dataset path")->required();
  splits->add_option("--out", sp.out, "output directory")->required();
  splits->add_option("--ratio", sp.ratio, "training fraction");
  splits->add_option("--n", sp.n, "number of splits");
  splits->add_option("--seed", sp.seed, "shuffle seed");

  ExportDotArgs xd;
  CLI::App* export_dot = app.add_subcommand("export-dot", "write a Graphviz drawing of a spec");
  export_dot->add_option("--spec", xd.spec, "graph spec path or preset:<name>")->required();
  export_dot->add_option("--out", xd.out, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  gen.seed_given = gen_seed->count() > 0;
  tr.seed_given = tr_seed->count() > 0;
  tr.epochs_given = tr_epochs->count() > 0;
  tr.lr_given = tr_lr->count() > 0;

  try {
    if (app.got_subcommand(generate)) return cmd_generate(gen, argc, argv);
    if (app.got_subcommand(train)) return cmd_train(tr, argc, argv);
    if (app.got_subcommand(eval)) return cmd_eval(ev, argc, argv);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc, argc, argv);
    if (app.got_subcommand(splits)) return cmd_splits(sp, argc, argv);
    if (app.got_subcommand(export_dot)) return cmd_export_dot(xd, argc, argv);
  } catch (const cgnn::ConfigError& e) {
    cgnn::log_error(e.what());
    return 1;
  } catch (const cgnn::NumericError& e) {
    cgnn::log_error(e.what());
    return 3;
  } catch (const cgnn::Error& e) {
    cgnn::log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    cgnn::log_error(e.what());
    return 2;
  }
  return 1;
}
