// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cloudtomo/eval.hpp"
#include "cloudtomo/training.hpp"

using namespace cloudtomo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DatasetBuildOptions micro_options(uint64_t seed) {
  DatasetBuildOptions opts;
  opts.grid.nx = opts.grid.ny = opts.grid.nz = 6;
  opts.grid.dx = opts.grid.dy = 1.6 / 6;
  opts.grid.dz = 1.2 / 6;
  opts.n_cam = 3;
  opts.image_size = 12;
  opts.seed = seed;
  return opts;
}

ModelConfig micro_model() {
  ModelConfig c;
  c.n_cam = 3;
  c.conv_channels = {4, 8};
  c.conv_strides = {2, 1};
  c.feature_channels = 8;
  c.encoder_width = 8;
  c.encoder_depth = 2;
  c.decoder_hidden = {16, 8};
  c.output_scale = 50.0;
  return c;
}

TrainConfig micro_train(int stage, uint64_t seed) {
  TrainConfig t;
  t.stage = stage;
  t.learning_rate = 2e-3;
  t.queries_per_iteration = 32;
  t.max_iterations = 240;
  t.validation_interval = 40;
  t.early_stop_patience = 5;
  t.val_fraction = 0.34;
  t.seed = seed;
  return t;
}

bool params_equal(const nn::Mlp& a, const nn::Mlp& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].W != b.layers[i].W || a.layers[i].b != b.layers[i].b) return false;
  return true;
}

bool params_equal(const nn::ConvNet& a, const nn::ConvNet& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].W != b.layers[i].W || a.layers[i].b != b.layers[i].b) return false;
  return true;
}

}  // namespace

TEST_CASE("relative L2 loss values and gradient") {
  Vec t(2), h(2);
  t << 3, 4;
  h << 0, 0;
  CHECK(loss_relative_l2(h, t, 1e-6) == doctest::Approx(1.0).epsilon(1e-6));
  h << 3, 0;
  CHECK(loss_relative_l2(h, t, 1e-6) == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(loss_relative_l2(t, t, 1e-6) == 0.0);
  // Scale invariance when delta = 0.
  CHECK(loss_relative_l2(3.0 * h, 3.0 * t, 0.0) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(loss_relative_l2(Vec(), Vec(), 1e-6), ValidationError);

  Vec grad;
  Vec hh(3), tt(3);
  hh << 1.0, -0.5, 2.0;
  tt << 0.5, 0.25, 1.5;
  double base = loss_relative_l2_grad(hh, tt, 1e-6, grad);
  CHECK(base == doctest::Approx(loss_relative_l2(hh, tt, 1e-6)));
  double step = 1e-7;
  for (int i = 0; i < 3; ++i) {
    Vec up = hh, down = hh;
    up[i] += step;
    down[i] -= step;
    double fd = (loss_relative_l2(up, tt, 1e-6) - loss_relative_l2(down, tt, 1e-6)) / (2 * step);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("training step: determinism, freezing, loss reduction") {
  TempDir tmp("cloudtomo_test_train_step");
  DatasetManifest m = build_fixed_sun_dataset(2, 1, micro_options(3), tmp.path.string());
  TrainConfig tc = micro_train(1, 17);
  ModelConfig mc = micro_model();

  std::vector<TrainScene> scenes;
  for (const auto& id : m.train_ids)
    scenes.push_back(prepare_train_scene(load_scene(m.scene_dir(id)), m.stats, tc));
  REQUIRE_FALSE(scenes[0].hull_points.empty());

  // Determinism: identical states and seeds give identical updates.
  TrainState a = TrainState::create(mc, tc, 101, SunMode::Zeroed);
  TrainState b = TrainState::create(mc, tc, 101, SunMode::Zeroed);
  double la = training_step(a, scenes[0], tc);
  double lb = training_step(b, scenes[0], tc);
  CHECK(la == lb);
  CHECK(params_equal(a.params.decoder, b.params.decoder));

  // Freezing: frozen blocks are bit-identical across steps.
  TrainState frozen = TrainState::create(mc, tc, 102, SunMode::Zeroed);
  frozen.params.set_trainable(Block::Extractor, false);
  frozen.params.set_trainable(Block::SunEnc, false);
  nn::ConvNet extractor_before = frozen.params.extractor;
  nn::Mlp sun_before = frozen.params.sun_enc;
  nn::Mlp decoder_before = frozen.params.decoder;
  for (int i = 0; i < 20; ++i) training_step(frozen, scenes[size_t(i) % scenes.size()], tc);
  CHECK(params_equal(frozen.params.extractor, extractor_before));
  CHECK(params_equal(frozen.params.sun_enc, sun_before));
  CHECK_FALSE(params_equal(frozen.params.decoder, decoder_before));

  // 500 steps on a 2-scene micro-dataset beat the initial loss.
  TrainState s = TrainState::create(mc, tc, 103, SunMode::Zeroed);
  double first = training_step(s, scenes[0], tc);
  double last = 0.0;
  for (int i = 1; i < 500; ++i) last = training_step(s, scenes[size_t(i) % scenes.size()], tc);
  CHECK(last < first);
}

TEST_CASE("empty hull is skipped") {
  TempDir tmp("cloudtomo_test_empty_hull");
  DatasetManifest m = build_fixed_sun_dataset(2, 1, micro_options(3), tmp.path.string());
  TrainConfig tc = micro_train(1, 5);
  Scene scene = load_scene(m.scene_dir(m.train_ids[0]));
  std::fill(scene.images.data.begin(), scene.images.data.end(), 0.0f);
  TrainScene ts = prepare_train_scene(std::move(scene), m.stats, tc);
  CHECK(ts.hull_points.empty());
  TrainState s = TrainState::create(micro_model(), tc, 1, SunMode::Zeroed);
  CHECK(training_step(s, ts, tc) < 0.0);
}

TEST_CASE("train state round-trip resumes bit-identically") {
  TempDir tmp("cloudtomo_test_resume");
  DatasetManifest m = build_fixed_sun_dataset(2, 1, micro_options(7), tmp.path.string());
  TrainConfig tc = micro_train(1, 23);
  std::vector<TrainScene> scenes;
  for (const auto& id : m.train_ids)
    scenes.push_back(prepare_train_scene(load_scene(m.scene_dir(id)), m.stats, tc));

  ModelConfig mc = micro_model();
  TrainState run = TrainState::create(mc, tc, 301, SunMode::Zeroed);
  for (int i = 0; i < 10; ++i) training_step(run, scenes[size_t(i) % 2], tc);
  std::string path = (tmp.path / "state.tst").string();
  save_train_state(run, 0.1, 1.5, 1, path);

  double mean = 0, std_ = 0;
  int stage = 0;
  TrainState resumed = load_train_state(path, &mean, &std_, &stage);
  CHECK(mean == 0.1);
  CHECK(std_ == 1.5);
  CHECK(stage == 1);

  for (int i = 10; i < 20; ++i) {
    double l1 = training_step(run, scenes[size_t(i) % 2], tc);
    double l2 = training_step(resumed, scenes[size_t(i) % 2], tc);
    CHECK(l1 == l2);
  }
  CHECK(params_equal(run.params.decoder, resumed.params.decoder));
  CHECK(params_equal(run.params.extractor, resumed.params.extractor));
}

TEST_CASE("stage 1 trains sun-zeroed and improves validation") {
  TempDir tmp("cloudtomo_test_stage1");
  DatasetManifest m = build_fixed_sun_dataset(5, 1, micro_options(11), tmp.path.string());
  TrainConfig tc = micro_train(1, 31);
  ModelConfig mc = micro_model();
  TrainOutcome out = train_stage1(tc, mc, m, 401, (tmp.path / "log.txt").string());
  CHECK(out.checkpoint.stage == 1);
  CHECK(out.checkpoint.config_hash == mc.hash());
  CHECK(out.final_val < out.initial_val);
  CHECK_FALSE(out.log.empty());
  CHECK(fs::exists(tmp.path / "log.txt"));

  // Sun-zeroed invariance of the resulting model.
  Scene s = load_scene(m.scene_dir(m.test_ids[0]));
  EvalOptions eo;
  Scene shifted = s;
  shifted.sun = SunDirection(10.0, 80.0);
  auto a = predict_field(out.checkpoint, s, eo);
  auto b = predict_field(out.checkpoint, shifted, eo);
  CHECK(a == b);
}

TEST_CASE("stage 2 freezes the extractor and single-stage trains everything") {
  TempDir fixed_dir("cloudtomo_test_s2_fixed"), sun_dir("cloudtomo_test_s2_sun"),
      pert_dir("cloudtomo_test_s2_pert");
  DatasetManifest fixed = build_fixed_sun_dataset(4, 1, micro_options(13), fixed_dir.path.string());
  DatasetManifest sun =
      build_varying_sun_dataset(2, 1, 2, false, micro_options(14), sun_dir.path.string());
  DatasetManifest pert =
      build_varying_sun_dataset(2, 1, 2, true, micro_options(15), pert_dir.path.string());

  ModelConfig mc = micro_model();
  TrainOutcome s1 = train_stage1(micro_train(1, 41), mc, fixed, 501);
  TrainOutcome s2 = train_stage2(micro_train(2, 42), s1.checkpoint, {sun, pert});
  CHECK(s2.checkpoint.stage == 2);
  // Extractor untouched, sun encoder trained.
  CHECK(params_equal(s2.checkpoint.params.extractor, s1.checkpoint.params.extractor));
  CHECK_FALSE(params_equal(s2.checkpoint.params.sun_enc, s1.checkpoint.params.sun_enc));
  // Stage 2 keeps the stage-1 normalization (the frozen extractor was trained
  // under those statistics).
  CHECK(s2.checkpoint.stats_mean == s1.checkpoint.stats_mean);
  CHECK(s2.checkpoint.stats_std == s1.checkpoint.stats_std);

  // Stage-2 input contract: a non-stage-1 checkpoint is rejected.
  CHECK_THROWS_AS(train_stage2(micro_train(2, 43), s2.checkpoint, {sun}), ConfigError);

  TrainOutcome single =
      train_single_stage_baseline(micro_train(3, 44), mc, {sun, pert}, 601);
  CHECK(single.checkpoint.stage == 3);
  NormalizationStats union_stats = compute_union_stats({sun, pert});
  CHECK(single.checkpoint.stats_mean == doctest::Approx(union_stats.mean).epsilon(1e-12));
}

TEST_CASE("training is reproducible end to end") {
  TempDir tmp("cloudtomo_test_repro_train");
  DatasetManifest m = build_fixed_sun_dataset(3, 1, micro_options(19), tmp.path.string());
  TrainConfig tc = micro_train(1, 71);
  ModelConfig mc = micro_model();
  TrainOutcome a = train_stage1(tc, mc, m, 801);
  TrainOutcome b = train_stage1(tc, mc, m, 801);
  CHECK(params_equal(a.checkpoint.params.decoder, b.checkpoint.params.decoder));
  CHECK(params_equal(a.checkpoint.params.extractor, b.checkpoint.params.extractor));
  CHECK(a.final_val == b.final_val);
}
