#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "amsrc/losses.hpp"
#include "amsrc/scoring.hpp"
#include "amsrc/synthetic.hpp"
#include "amsrc/training.hpp"
#include "test_support.hpp"

using namespace amsrc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "amsrc_test_train";
  fs::create_directories(dir);
  return dir;
}

ArchConfig tiny_arch(Variant variant = Variant::Amsrc) {
  ArchConfig arch;
  arch.window = 4;
  arch.patch = 32;
  arch.channels = {8, 12};
  arch.variant = variant;
  return arch;
}

// Small in-memory training set from the synthetic generator.
std::vector<Stc> tiny_dataset(int clips = 2, int frames = 24) {
  GenConfig cfg;
  cfg.train_clips = clips;
  cfg.test_clips = 0;
  cfg.frames_per_clip = frames;
  cfg.sprites_per_clip = 1;
  Rng master(404);
  std::vector<Stc> stcs;
  for (int c = 0; c < clips; ++c) {
    Rng clip_rng = master.fork(static_cast<std::uint64_t>(c));
    ClipData data = make_synthetic_clip(clip_rng, cfg, false, c, "c" + std::to_string(c));
    auto clip_stcs = extract_stcs(data, 4);
    stcs.insert(stcs.end(), clip_stcs.begin(), clip_stcs.end());
  }
  return stcs;
}

}  // namespace

TEST_CASE("paper-style train presets") {
  const auto ped2 = TrainConfig::ped2_style();
  CHECK(ped2.batch_size == 128);
  CHECK(ped2.epochs == 60);
  CHECK(ped2.learning_rate == 2e-4);
  CHECK(ped2.lr_decay == 0.8);
  CHECK(ped2.lr_decay_every == 10);
  CHECK(ped2.weights.consistency == 1.0);

  const auto avenue = TrainConfig::avenue_style();
  CHECK(avenue.batch_size == 128);
  CHECK(avenue.epochs == 40);

  const auto sht = TrainConfig::shanghaitech_style();
  CHECK(sht.batch_size == 256);
  CHECK(sht.epochs == 40);
  CHECK(sht.weights.consistency == 10.0);
  CHECK(sht.weights.intensity == 1.0);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}

TEST_CASE("learning rate decays by 0.8 every ten epochs, as float products") {
  TrainConfig cfg;
  CHECK(learning_rate_at(cfg, 0) == 2e-4);
  CHECK(learning_rate_at(cfg, 9) == 2e-4);
  CHECK(learning_rate_at(cfg, 10) == 2e-4 * 0.8);
  CHECK(learning_rate_at(cfg, 19) == 2e-4 * 0.8);
  CHECK(learning_rate_at(cfg, 20) == 2e-4 * 0.8 * 0.8);
  CHECK(learning_rate_at(cfg, 35) == 2e-4 * 0.8 * 0.8 * 0.8);
}

TEST_CASE("train log carries the scheduled learning rate") {
  auto stcs = tiny_dataset(1, 12);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.lr_decay_every = 2;
  AmsrcModel<float> model(tiny_arch(), 1);
  auto result = train_model(model, stcs, cfg);
  REQUIRE(result.log.size() == 5);
  for (int e = 0; e < 5; ++e) CHECK(result.log[e].lr == learning_rate_at(cfg, e));
}

TEST_CASE("a single small Adam step decreases the batch loss") {
  auto stcs = tiny_dataset(1, 16);
  ArchConfig arch = tiny_arch();
  AmsrcModel<float> model(arch, 3);
  std::vector<int> indices(stcs.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  BatchTensors batch = assemble_batch(stcs, indices, 0, stcs.size(), arch);
  LossWeights w{1, 1, 1, 1};

  auto eval_loss = [&] {
    auto out = model.forward(batch.frames, batch.flows);
    return compute_losses(out.prediction, batch.targets, out.fea_frame, out.fea_flow,
                          model.params(), w);
  };
  auto terms = eval_loss();
  const double before = terms.total.item();
  terms.total.backward();
  Adam<float> opt;
  opt.step(model.params(), 1e-6);
  for (auto& p : model.params()) p.tensor.zero_grad();
  const double after = eval_loss().total.item();
  CHECK(after < before);
}

TEST_CASE("training reduces the loss and is seed-deterministic") {
  auto stcs = tiny_dataset();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  cfg.seed = 11;

  AmsrcModel<float> model_a(tiny_arch(), cfg.seed);
  auto result_a = train_model(model_a, stcs, cfg);
  REQUIRE(result_a.log.size() == 5);
  CHECK(result_a.log.back().total < result_a.log.front().total);

  AmsrcModel<float> model_b(tiny_arch(), cfg.seed);
  auto result_b = train_model(model_b, stcs, cfg);
  for (std::size_t i = 0; i < model_a.params().size(); ++i)
    CHECK((model_a.params()[i].tensor.value() == model_b.params()[i].tensor.value()).all());
  for (std::size_t e = 0; e < result_a.log.size(); ++e)
    CHECK(result_a.log[e].total == result_b.log[e].total);
}

TEST_CASE("training aborts with a diagnostic on non-finite loss") {
  auto stcs = tiny_dataset(1, 12);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e14;  // detonates the parameters
  AmsrcModel<float> model(tiny_arch(), 5);
  CHECK_THROWS_WITH_AS(train_model(model, stcs, cfg), doctest::Contains("batch"),
                       NumericalFailure);
}

TEST_CASE("training requires a nonempty dataset") {
  AmsrcModel<float> model(tiny_arch(), 1);
  std::vector<Stc> empty;
  CHECK_THROWS_AS(train_model(model, empty, TrainConfig{}), InvalidInput);
}

TEST_CASE("population statistics match the analytic example") {
  auto [mean, stddev] = population_mean_std({1.0, 2.0, 3.0});
  CHECK(mean == doctest::Approx(2.0));
  CHECK(stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));  // 0.81650
  CHECK_THROWS_AS(population_mean_std({}), InvalidInput);
}

TEST_CASE("norm stats floor degenerate deviations and warn") {
  auto stcs = tiny_dataset(1, 12);
  std::vector<Stc> repeated{stcs[0], stcs[0], stcs[0]};
  AmsrcModel<float> model(tiny_arch(), 7);
  NormStats stats = compute_norm_stats(model, repeated);
  CHECK(stats.d_f == 1e-12);
  CHECK(stats.d_p == 1e-12);
  CHECK(stats.u_p > 0.0);
}

TEST_CASE("norm stats are deterministic") {
  auto stcs = tiny_dataset(1, 16);
  AmsrcModel<float> model(tiny_arch(), 9);
  NormStats a = compute_norm_stats(model, stcs);
  NormStats b = compute_norm_stats(model, stcs);
  CHECK(a.u_f == b.u_f);
  CHECK(a.d_f == b.d_f);
  CHECK(a.u_p == b.u_p);
  CHECK(a.d_p == b.d_p);
  CHECK_THROWS_AS(compute_norm_stats(model, {}), InvalidInput);
}

TEST_CASE("norm stats roundtrip through their file") {
  NormStats stats{0.25, 0.125, 1.5, 0.75};
  const fs::path p = scratch_dir() / "stats.csv";
  write_norm_stats(p, stats);
  NormStats back = read_norm_stats(p);
  CHECK(back.u_f == stats.u_f);
  CHECK(back.d_f == stats.d_f);
  CHECK(back.u_p == stats.u_p);
  CHECK(back.d_p == stats.d_p);
}

TEST_CASE("loss log CSV has the documented columns") {
  std::vector<EpochLog> log{{0, 0.5, 0.25, 0.125, 0.1, 1.0, 2e-4},
                            {1, 0.4, 0.2, 0.1, 0.1, 0.8, 2e-4}};
  const fs::path p = scratch_dir() / "loss_log.csv";
  write_loss_log_csv(p, log);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,l_int,l_gd,l_sim,l_reg,total,lr");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("object scores on a constant model match the closed form") {
  auto stcs = tiny_dataset(1, 12);
  ArchConfig arch = tiny_arch();
  AmsrcModel<float> model(arch);  // zero parameters
  for (auto& p : model.params())
    if (!p.is_weight) p.tensor.mutable_value().setConstant(0.2f);

  // Both encoders now produce the same constant nonzero feature, so the
  // feature inconsistency collapses to the epsilon term.
  auto [s_f, s_p] = object_scores(model, stcs[0]);
  CHECK(s_f == doctest::Approx(0.0).epsilon(1e-6));

  // With zero weights the prediction is the constant 0.2 + 0.2 stack of
  // decoder biases; recompute it directly.
  const long plane = 32 * 32;
  NoGradGuard ng;
  std::vector<int> idx{0};
  BatchTensors batch = assemble_batch(stcs, idx, 0, 1, arch);
  auto out = model.forward(batch.frames, batch.flows);
  const float pred = std::clamp(out.prediction.value()[0], 0.0f, 1.0f);
  double expect = 0.0;
  for (long i = 0; i < plane; ++i) {
    const double d = pred - stcs[0].frame_cube[4 * plane + i];
    expect += d * d;
  }
  CHECK(s_p == doctest::Approx(expect / plane).epsilon(1e-6));
}

TEST_CASE("a perfect prediction scores S_p = 0 exactly") {
  // Zero-weight model: the prediction is the constant decoder output bias.
  // A clip of constant frames at the same value makes the target identical.
  const float level = pixel_to_float(102);
  ArchConfig arch = tiny_arch();
  AmsrcModel<float> model(arch);
  for (auto& p : model.params())
    if (p.name == "dec.out.b") p.tensor.mutable_value().setConstant(level);

  ClipData data;
  data.clip.id = "const";
  for (int f = 0; f < 6; ++f) data.clip.frames.push_back(Image::Constant(64, 64, level));
  for (int k = 0; k < 5; ++k)
    data.flows.push_back({Image::Zero(64, 64), Image::Zero(64, 64)});
  Stc stc = build_stc(data.clip, data.flows, RoIBox{5, 8, 8, 32, 32, 0}, 4);
  auto [s_f, s_p] = object_scores(model, stc);
  CHECK(s_p == 0.0);
}

TEST_CASE("frame-only models report zero feature inconsistency") {
  auto stcs = tiny_dataset(1, 12);
  AmsrcModel<float> model(tiny_arch(Variant::FrameOnly), 13);
  auto [s_f, s_p] = object_scores(model, stcs[0]);
  CHECK(s_f == 0.0);
  CHECK(s_p > 0.0);
}

TEST_CASE("batched and single-sample scoring agree bitwise") {
  auto stcs = tiny_dataset(1, 16);
  AmsrcModel<float> model(tiny_arch(), 15);
  auto batched = object_scores_batched(model, stcs, 8);
  for (std::size_t i = 0; i < stcs.size(); ++i) {
    auto single = object_scores(model, stcs[i]);
    CHECK(single.first == batched[i].first);
    CHECK(single.second == batched[i].second);
  }
}

TEST_CASE("fuse_score is the weighted sum of z-scores") {
  NormStats stats{0.5, 0.25, 2.0, 0.5};
  ScoreWeights w{1.0, 0.0};
  CHECK(fuse_score(0.5, 2.0, stats, w) == 0.0);
  CHECK(fuse_score(0.75, 2.0, stats, w) == doctest::Approx(1.0));
  ScoreWeights both{0.3, 0.7};
  CHECK(fuse_score(0.75, 2.5, stats, both) == doctest::Approx(0.3 * 1.0 + 0.7 * 1.0));
}

TEST_CASE("fuse_score is affine and the frame argmax survives shared rescaling") {
  NormStats stats{0.2, 0.4, 1.0, 2.0};
  ScoreWeights w{0.6, 0.4};
  // Affine in each argument.
  const double base = fuse_score(0.3, 1.2, stats, w);
  const double df = fuse_score(0.3 + 0.8, 1.2, stats, w) - base;
  CHECK(fuse_score(0.3 + 1.6, 1.2, stats, w) == doctest::Approx(base + 2 * df).epsilon(1e-12));

  std::vector<double> fused{0.4, -1.0, 2.5, 0.7};
  std::vector<double> rescaled;
  for (double v : fused) rescaled.push_back(3.0 * v - 7.0);
  const auto arg = [](const std::vector<double>& v) {
    return std::max_element(v.begin(), v.end()) - v.begin();
  };
  CHECK(arg(fused) == arg(rescaled));
}

TEST_CASE("paper-style score weight presets") {
  CHECK(ScoreWeights::ped2_style().w_f == 1.0);
  CHECK(ScoreWeights::ped2_style().w_p == 0.01);
  CHECK(ScoreWeights::avenue_style().w_f == 0.2);
  CHECK(ScoreWeights::avenue_style().w_p == 0.8);
  CHECK(ScoreWeights::shanghaitech_style().w_f == 0.4);
  CHECK(ScoreWeights::shanghaitech_style().w_p == 0.6);
  ScoreWeights zero{0.0, 0.0};
  CHECK_THROWS_AS(zero.validate(), InvalidConfig);
}

TEST_CASE("frame_score takes the max over objects") {
  CHECK(frame_score({0.1, 0.7, 0.3}) == 0.7);
  CHECK(frame_score({0.5}) == 0.5);
  CHECK_THROWS_AS(frame_score({}), InvalidInput);
}

TEST_CASE("frames without objects get the global minimum fused score") {
  GenConfig cfg;
  cfg.train_clips = 1;
  cfg.test_clips = 0;
  cfg.frames_per_clip = 16;
  cfg.sprites_per_clip = 1;
  Rng rng(21);
  ClipData clip = make_synthetic_clip(rng, cfg, false, 0, "c0");
  // Keep boxes only on frames 6 and 9: everything else is "empty".
  std::vector<RoIBox> kept;
  for (const auto& b : clip.boxes)
    if (b.frame == 6 || b.frame == 9) kept.push_back(b);
  clip.boxes = kept;

  AmsrcModel<float> model(tiny_arch(), 23);
  NormStats stats{0.0, 1.0, 0.0, 1.0};
  auto out = score_dataset(model, {clip}, stats, ScoreWeights{0.5, 0.5});
  REQUIRE(out.objects.size() == 2);
  const double min_fused = std::min(out.objects[0].s_fused, out.objects[1].s_fused);
  REQUIRE(out.frames.size() == 16);
  for (const auto& f : out.frames) {
    if (f.frame == 6 || f.frame == 9)
      CHECK(f.score >= min_fused);
    else
      CHECK(f.score == min_fused);
  }
}

TEST_CASE("auroc handles the canonical cases") {
  CHECK(auroc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(auroc({0.1, 0.2, 0.9, 0.8}, {1, 1, 0, 0}) == 0.0);
  CHECK(auroc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), UndefinedMetric);
  CHECK_THROWS_AS(auroc({0.1}, {1, 0}), InvalidInput);
}

TEST_CASE("rank-based auroc equals the threshold-sweep oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 200));
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // Coarse grid forces plenty of ties.
      scores[static_cast<std::size_t>(i)] = rng.uniform_int(0, 9) / 10.0;
      labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.4 ? 1 : 0;
      has_pos = has_pos || labels[static_cast<std::size_t>(i)] == 1;
      has_neg = has_neg || labels[static_cast<std::size_t>(i)] == 0;
    }
    if (!has_pos || !has_neg) continue;
    const double fast = auroc(scores, labels);
    const double slow = testing::auroc_threshold_sweep(scores, labels);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
    CHECK(std::abs(fast - slow) <= 1e-9);
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(37);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    scores.push_back(rng.uniform(-2.0, 2.0));
    labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(0.5 * s) + 3.0);
  CHECK(auroc(scores, labels) == doctest::Approx(auroc(transformed, labels)).epsilon(1e-12));
}

TEST_CASE("score CSVs roundtrip and carry the exact headers") {
  std::vector<ObjectScore> objects{{"clip_a", 5, 0, 0.125, 0.5, -0.75},
                                   {"clip_a", 5, 1, 0.5, 0.25, 1.5}};
  std::vector<FrameScore> frames{{"clip_a", 0, -1.25, 0}, {"clip_a", 1, 2.5, 1}};
  const fs::path op = scratch_dir() / "objects.csv";
  const fs::path fp = scratch_dir() / "frames.csv";
  write_object_scores_csv(op, objects);
  write_frame_scores_csv(fp, frames);

  std::ifstream oin(op);
  std::string header;
  std::getline(oin, header);
  CHECK(header == "clip,frame,object_id,s_f,s_p,s_fused");

  auto back = read_frame_scores_csv(fp);
  REQUIRE(back.size() == 2);
  CHECK(back[0].clip == "clip_a");
  CHECK(back[0].score == -1.25);
  CHECK(back[1].label == 1);
}
