// amsrc: batch pipeline for the synthetic surveillance experiments.
// Subcommands: gen-synthetic, train, score, eval. Config files are JSON;
// command-line flags override file values, and every run writes its resolved
// config beside its outputs so it can be reproduced.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "amsrc/checkpoint.hpp"
#include "amsrc/dataset.hpp"
#include "amsrc/scoring.hpp"
#include "amsrc/synthetic.hpp"
#include "amsrc/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw amsrc::IoError("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw amsrc::InvalidConfig("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw amsrc::InvalidConfig("config file " + path + " is not valid JSON: " + e.what());
  }
}

template <typename T>
void fetch(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw amsrc::InvalidConfig(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

amsrc::FlowSource flow_source_from(const std::string& s) {
  if (s == "auto") return amsrc::FlowSource::Auto;
  if (s == "files") return amsrc::FlowSource::Files;
  if (s == "block") return amsrc::FlowSource::BlockMatching;
  throw amsrc::InvalidConfig("unknown flow source '" + s + "' (expected auto|files|block)");
}

// ---------------------------------------------------------------------------
// gen-synthetic

struct GenArgs {
  std::string out_dir;
  std::string config_file;
  std::uint64_t seed = 7;
  amsrc::GenConfig cfg;
  bool force = false;
};

int run_gen(const GenArgs& args, const std::vector<std::string>& overridden) {
  json file = load_config_file(args.config_file);
  amsrc::GenConfig cfg = args.cfg;
  std::uint64_t seed = args.seed;
  auto flagged = [&](const char* name) {
    return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
  };
  if (!flagged("seed")) fetch(file, "seed", seed);
  if (!flagged("train-clips")) fetch(file, "train_clips", cfg.train_clips);
  if (!flagged("test-clips")) fetch(file, "test_clips", cfg.test_clips);
  if (!flagged("frames")) fetch(file, "frames_per_clip", cfg.frames_per_clip);
  if (!flagged("size")) {
    fetch(file, "height", cfg.height);
    fetch(file, "width", cfg.width);
  }
  if (!flagged("sprites")) fetch(file, "sprites_per_clip", cfg.sprites_per_clip);
  cfg.validate();

  const fs::path out_dir(args.out_dir);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !args.force)
    throw amsrc::InvalidConfig("output directory " + out_dir.string() +
                               " is not empty (use --force to overwrite)");
  fs::create_directories(out_dir);

  const auto summary = amsrc::generate_synthetic(cfg, seed, out_dir);

  json resolved = {{"command", "gen-synthetic"},
                   {"seed", seed},
                   {"train_clips", cfg.train_clips},
                   {"test_clips", cfg.test_clips},
                   {"frames_per_clip", cfg.frames_per_clip},
                   {"height", cfg.height},
                   {"width", cfg.width},
                   {"sprites_per_clip", cfg.sprites_per_clip}};
  write_json(out_dir / "generate.config.json", resolved);

  std::cout << "wrote " << summary.train_clips << " train clips, " << summary.test_clips
            << " test clips (" << summary.frames << " frames, " << summary.boxes << " boxes, "
            << summary.anomalous_frames << " anomalous frames) to " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data_dir;
  std::string out_ckpt;
  std::string config_file;
  amsrc::TrainConfig cfg;
  std::string variant = "amsrc";
  std::string flow = "auto";
  int window = 4;
  int patch = 32;
  std::vector<int> channels = {32, 64, 128};
  bool quiet = false;
};

int run_train(const TrainArgs& args, const std::vector<std::string>& overridden) {
  json file = load_config_file(args.config_file);
  amsrc::TrainConfig cfg = args.cfg;
  std::string variant = args.variant;
  std::string flow = args.flow;
  int window = args.window;
  int patch = args.patch;
  std::vector<int> channels = args.channels;
  auto flagged = [&](const char* name) {
    return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
  };
  if (!flagged("epochs")) fetch(file, "epochs", cfg.epochs);
  if (!flagged("batch")) fetch(file, "batch_size", cfg.batch_size);
  if (!flagged("lr")) fetch(file, "learning_rate", cfg.learning_rate);
  if (!flagged("seed")) fetch(file, "seed", cfg.seed);
  if (!flagged("variant")) fetch(file, "variant", variant);
  if (!flagged("flow")) fetch(file, "flow", flow);
  fetch(file, "lr_decay", cfg.lr_decay);
  fetch(file, "lr_decay_every", cfg.lr_decay_every);
  fetch(file, "window", window);
  fetch(file, "patch", patch);
  fetch(file, "channels", channels);
  if (file.contains("weights")) {
    const json& w = file.at("weights");
    fetch(w, "intensity", cfg.weights.intensity);
    fetch(w, "gradient", cfg.weights.gradient);
    fetch(w, "consistency", cfg.weights.consistency);
    fetch(w, "model", cfg.weights.model);
  }
  cfg.validate();

  amsrc::ArchConfig arch;
  arch.window = window;
  arch.patch = patch;
  arch.channels = channels;
  arch.variant = amsrc::variant_from_name(variant);
  arch.validate();

  const auto dataset = amsrc::load_dataset(args.data_dir, flow_source_from(flow));
  if (dataset.train.empty()) throw amsrc::IoError("no training clips under " + args.data_dir);
  std::vector<amsrc::Stc> stcs;
  for (const auto& clip : dataset.train) {
    auto clip_stcs = amsrc::extract_stcs(clip, arch.window, arch.patch);
    stcs.insert(stcs.end(), clip_stcs.begin(), clip_stcs.end());
  }
  if (stcs.empty()) throw amsrc::IoError("no extractable training samples (clips too short?)");
  if (!args.quiet)
    std::cout << "training on " << stcs.size() << " cubes from " << dataset.train.size()
              << " clips, variant " << variant << "\n";

  amsrc::AmsrcModel<float> model(arch, cfg.seed);
  const auto result = amsrc::train_model(model, stcs, cfg, args.quiet ? nullptr : &std::cout);

  const fs::path ckpt(args.out_ckpt);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  amsrc::save_checkpoint(model, ckpt);
  amsrc::write_loss_log_csv(ckpt.string() + ".loss_log.csv", result.log);
  const amsrc::NormStats stats = amsrc::compute_norm_stats(model, stcs, cfg.batch_size);
  amsrc::write_norm_stats(ckpt.string() + ".stats.csv", stats);

  json resolved = {{"command", "train"},
                   {"data", args.data_dir},
                   {"out", args.out_ckpt},
                   {"seed", cfg.seed},
                   {"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate},
                   {"lr_decay", cfg.lr_decay},
                   {"lr_decay_every", cfg.lr_decay_every},
                   {"weights",
                    {{"intensity", cfg.weights.intensity},
                     {"gradient", cfg.weights.gradient},
                     {"consistency", cfg.weights.consistency},
                     {"model", cfg.weights.model}}},
                   {"variant", variant},
                   {"window", window},
                   {"patch", patch},
                   {"channels", channels},
                   {"flow", flow}};
  write_json(ckpt.string() + ".config.json", resolved);

  if (!args.quiet)
    std::cout << "checkpoint written to " << ckpt.string() << " (final total loss "
              << result.log.back().total << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  std::string data_dir;
  std::string ckpt;
  std::string out_csv;
  std::string frame_csv;
  std::string stats_file;
  std::string config_file;
  std::string split = "test";
  std::string flow = "auto";
  double w_f = 0.5;
  double w_p = 0.5;
  int batch_size = 64;
};

int run_score(const ScoreArgs& args, const std::vector<std::string>& overridden) {
  json file = load_config_file(args.config_file);
  amsrc::ScoreWeights weights{args.w_f, args.w_p};
  std::string split = args.split;
  std::string flow = args.flow;
  int batch_size = args.batch_size;
  auto flagged = [&](const char* name) {
    return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
  };
  if (!flagged("wf")) fetch(file, "w_f", weights.w_f);
  if (!flagged("wp")) fetch(file, "w_p", weights.w_p);
  if (!flagged("split")) fetch(file, "split", split);
  if (!flagged("flow")) fetch(file, "flow", flow);
  fetch(file, "batch_size", batch_size);
  weights.validate();
  if (split != "test" && split != "train")
    throw amsrc::InvalidConfig("split must be 'test' or 'train'");

  auto model = amsrc::load_checkpoint(args.ckpt);
  const std::string stats_path =
      args.stats_file.empty() ? args.ckpt + ".stats.csv" : args.stats_file;
  const amsrc::NormStats stats = amsrc::read_norm_stats(stats_path);

  const auto dataset = amsrc::load_dataset(args.data_dir, flow_source_from(flow));
  const auto& clips = split == "test" ? dataset.test : dataset.train;
  if (clips.empty()) throw amsrc::IoError("no clips in split '" + split + "'");

  const auto outputs = amsrc::score_dataset(model, clips, stats, weights, batch_size);
  if (outputs.objects.empty())
    throw amsrc::IoError("no scorable objects in split '" + split + "'");

  const fs::path out_csv(args.out_csv);
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  fs::path frame_csv;
  if (!args.frame_csv.empty()) {
    frame_csv = args.frame_csv;
  } else {
    frame_csv = out_csv;
    frame_csv.replace_extension();
    frame_csv += "_frames.csv";
  }
  amsrc::write_object_scores_csv(out_csv, outputs.objects);
  amsrc::write_frame_scores_csv(frame_csv, outputs.frames);

  json resolved = {{"command", "score"}, {"data", args.data_dir},
                   {"ckpt", args.ckpt},  {"out", out_csv.string()},
                   {"frame_out", frame_csv.string()}, {"stats", stats_path},
                   {"w_f", weights.w_f}, {"w_p", weights.w_p},
                   {"split", split},     {"flow", flow},
                   {"batch_size", batch_size}};
  write_json(out_csv.string() + ".config.json", resolved);

  std::cout << "scored " << outputs.objects.size() << " objects over " << outputs.frames.size()
            << " frames; object scores in " << out_csv.string() << ", frame scores in "
            << frame_csv.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int run_eval(const std::string& scores_csv) {
  const auto frames = amsrc::read_frame_scores_csv(scores_csv);
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(frames.size());
  labels.reserve(frames.size());
  for (const auto& f : frames) {
    scores.push_back(f.score);
    labels.push_back(f.label);
  }
  const double auc = amsrc::auroc(scores, labels);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(6);
  std::cout << "AUROC: " << auc << "\n";
  return 0;
}

int exit_code_for(amsrc::ErrorCategory cat) {
  switch (cat) {
    case amsrc::ErrorCategory::Config: return 2;
    case amsrc::ErrorCategory::Data: return 3;
    case amsrc::ErrorCategory::Numeric: return 4;
    case amsrc::ErrorCategory::Internal: return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AMSRC video anomaly detection pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  int gen_size = 64;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset");
  gen_cmd->add_option("--out", gen.out_dir, "Output dataset directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--train-clips", gen.cfg.train_clips, "Training clip count");
  gen_cmd->add_option("--test-clips", gen.cfg.test_clips, "Test clip count");
  gen_cmd->add_option("--frames", gen.cfg.frames_per_clip, "Frames per clip");
  auto* size_opt = gen_cmd->add_option("--size", gen_size, "Frame height and width");
  gen_cmd->add_option("--sprites", gen.cfg.sprites_per_clip, "Normal sprites per clip");
  gen_cmd->add_option("--config", gen.config_file, "JSON config file");
  gen_cmd->add_flag("--force", gen.force, "Allow writing into a nonempty directory");
  gen_cmd->callback([&] {
    if (size_opt->count() > 0) {
      gen.cfg.height = gen_size;
      gen.cfg.width = gen_size;
    }
  });

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset's train split");
  train_cmd->add_option("--data", train.data_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out_ckpt, "Checkpoint output path")->required();
  train_cmd->add_option("--config", train.config_file, "JSON config file");
  train_cmd->add_option("--epochs", train.cfg.epochs, "Training epochs");
  train_cmd->add_option("--batch", train.cfg.batch_size, "Batch size");
  train_cmd->add_option("--lr", train.cfg.learning_rate, "Initial learning rate");
  train_cmd->add_option("--seed", train.cfg.seed, "Init/shuffle seed");
  train_cmd->add_option("--variant", train.variant, "amsrc|no_gated_fusion|frame_only");
  train_cmd->add_option("--flow", train.flow, "Flow source: auto|files|block");
  train_cmd->add_flag("--quiet", train.quiet, "Suppress progress output");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score a dataset split with a checkpoint");
  score_cmd->add_option("--data", score.data_dir, "Dataset directory")->required();
  score_cmd->add_option("--ckpt", score.ckpt, "Checkpoint path")->required();
  score_cmd->add_option("--out", score.out_csv, "Per-object score CSV")->required();
  score_cmd->add_option("--frame-out", score.frame_csv, "Per-frame score CSV");
  score_cmd->add_option("--stats", score.stats_file, "Norm-stats file (default <ckpt>.stats.csv)");
  score_cmd->add_option("--wf", score.w_f, "Weight of the feature-inconsistency score");
  score_cmd->add_option("--wp", score.w_p, "Weight of the prediction-error score");
  score_cmd->add_option("--split", score.split, "Dataset split: test|train");
  score_cmd->add_option("--flow", score.flow, "Flow source: auto|files|block");
  score_cmd->add_option("--config", score.config_file, "JSON config file");

  std::string eval_csv;
  auto* eval_cmd = app.add_subcommand("eval", "Frame-level AUROC of a per-frame score CSV");
  eval_cmd->add_option("--scores", eval_csv, "Per-frame score CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    std::cerr << "error[UsageError]: " << e.what() << "\n";
    return 2;
  }

  auto overridden_names = [](CLI::App* cmd) {
    std::vector<std::string> names;
    for (const auto* opt : cmd->get_options())
      if (opt->count() > 0 && !opt->get_name().empty()) {
        std::string n = opt->get_name();
        while (!n.empty() && n.front() == '-') n.erase(n.begin());
        names.push_back(n);
      }
    return names;
  };

  try {
    if (gen_cmd->parsed()) return run_gen(gen, overridden_names(gen_cmd));
    if (train_cmd->parsed()) return run_train(train, overridden_names(train_cmd));
    if (score_cmd->parsed()) return run_score(score, overridden_names(score_cmd));
    if (eval_cmd->parsed()) return run_eval(eval_csv);
  } catch (const amsrc::Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[Unhandled]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
