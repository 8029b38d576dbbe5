// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cloudtomo/datasets.hpp"
#include "cloudtomo/model.hpp"

using namespace cloudtomo;

namespace {

ModelConfig micro_config(int n_cam = 2) {
  ModelConfig c;
  c.n_cam = n_cam;
  c.conv_channels = {4, 6};
  c.conv_strides = {2, 1};
  c.feature_channels = 6;
  c.encoder_width = 5;
  c.encoder_depth = 2;
  c.decoder_hidden = {8, 6};
  c.output_scale = 10.0;
  return c;
}

struct MicroScene {
  MultiviewImages images;
  CameraArray cameras;
  GridSpec grid;

  SceneInput input(const Vec2& sun_input = Vec2(0.375, 1.0 / 3.0)) const {
    return SceneInput{&images, &cameras, sun_input, grid};
  }
};

MicroScene micro_scene(int n_cam = 2, uint64_t seed = 13) {
  MicroScene s;
  s.grid.nx = s.grid.ny = s.grid.nz = 4;
  s.grid.dx = s.grid.dy = 0.4;
  s.grid.dz = 0.3;
  s.cameras = formation_poses(s.grid.center(), 500, 100, n_cam, 8, 8);
  s.images.n_cam = n_cam;
  s.images.height = s.images.width = 8;
  s.images.data.resize(size_t(n_cam) * 64);
  Rng rng(seed);
  for (auto& v : s.images.data) v = float(rng.uniform(-1.0, 1.0));
  return s;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c;
  CHECK(c.decoder_input_dim() == 10 * (64 + 1 + 64) + 2 * 64);
  c.validate();
  c.sun_encoder_depth = 4;  // the sun path is architecturally five layers
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro_config();
  c.conv_strides = {2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("parameter creation is deterministic per seed") {
  ModelConfig c = micro_config();
  ModelParams a = ModelParams::create(c, 7);
  ModelParams b = ModelParams::create(c, 7);
  ModelParams other = ModelParams::create(c, 8);
  CHECK(a.decoder.layers[0].W == b.decoder.layers[0].W);
  CHECK(a.sun_enc.layers.size() == 5);
  CHECK(a.sun_enc.relu_last);
  CHECK(a.decoder.layers[0].W != other.decoder.layers[0].W);
}

TEST_CASE("feature extraction is per-view with shared weights") {
  ModelConfig c = micro_config(3);
  ModelParams p = ModelParams::create(c, 3);
  MicroScene s = micro_scene(3);
  // Duplicate view 0 into view 2.
  for (int i = 0; i < 64; ++i) s.images.data[2 * 64 + i] = s.images.data[i];
  FeatureMaps maps = extract_features(s.images, p, c);
  CHECK(maps.n_cam == 3);
  CHECK(maps.channels == 6);
  CHECK(maps.scale_denominator == 2);
  CHECK(maps.height == 4);
  CHECK(maps.maps[0] == maps.maps[2]);
  CHECK(maps.maps[0] != maps.maps[1]);
}

TEST_CASE("feature sampling hits nodes exactly and blends at midpoints") {
  FeatureMaps maps;
  maps.n_cam = 1;
  maps.channels = 2;
  maps.height = maps.width = 3;
  maps.scale_denominator = 2;
  Mat m(2, 9);
  for (int i = 0; i < 9; ++i) {
    m(0, i) = double(i);
    m(1, i) = 10.0 * i;
  }
  maps.maps = {m};

  // Node (u=1, v=2) sits at image coordinates ((1+0.5)*2, (2+0.5)*2) = (3, 5).
  Vec v = sample_features(maps, {PixelCoord{3.0, 5.0, true}});
  CHECK(v[0] == doctest::Approx(7.0));
  CHECK(v[1] == doctest::Approx(70.0));
  CHECK(v[2] == doctest::Approx(1.0));  // validity flag

  // Horizontal midpoint between nodes 0 and 1.
  v = sample_features(maps, {PixelCoord{2.0, 1.0, true}});
  CHECK(v[0] == doctest::Approx(0.5));
  CHECK(v[1] == doctest::Approx(5.0));

  // Invalid projection contributes a zero block with the flag off.
  v = sample_features(maps, {PixelCoord{3.0, 5.0, false}});
  CHECK(v.norm() == 0.0);
}

TEST_CASE("domain normalization maps the box to [-1,1]^3") {
  GridSpec g;
  g.origin = Vec3(1, 2, 3);
  g.nx = g.ny = g.nz = 4;
  g.dx = 0.5;
  g.dy = 0.25;
  g.dz = 1.0;
  CHECK(normalize_domain_point(g, g.origin) == Vec3(-1, -1, -1));
  CHECK(normalize_domain_point(g, g.max_corner()) == Vec3(1, 1, 1));
  CHECK(normalize_domain_point(g, g.center()).norm() == doctest::Approx(0.0));
}

TEST_CASE("sun encoder modes") {
  ModelConfig c = micro_config();
  ModelParams p = ModelParams::create(c, 11);
  Vec zeroed = encode_sun(p, Vec2(0.3, 0.7), SunMode::Zeroed);
  CHECK(zeroed.norm() == 0.0);
  CHECK(zeroed.size() == c.encoder_width);
  Vec active = encode_sun(p, Vec2(0.3, 0.7), SunMode::Active);
  CHECK((active.array() >= 0.0).all());  // five FC layers, each with ReLU
}

TEST_CASE("forward output is nonnegative and batch-invariant") {
  ModelConfig c = micro_config();
  ModelParams p = ModelParams::create(c, 21);
  MicroScene s = micro_scene();
  auto centers = voxel_centers(s.grid);
  std::vector<Vec3> all(centers.begin(), centers.begin() + 10);
  Vec full = model_forward(p, c, s.input(), all, SunMode::Active);
  CHECK((full.array() >= 0.0).all());

  std::vector<Vec3> first(all.begin(), all.begin() + 4), rest(all.begin() + 4, all.end());
  Vec a = model_forward(p, c, s.input(), first, SunMode::Active);
  Vec b = model_forward(p, c, s.input(), rest, SunMode::Active);
  for (int i = 0; i < 4; ++i) CHECK(full[i] == a[i]);
  for (int i = 0; i < 6; ++i) CHECK(full[4 + i] == b[i]);
}

TEST_CASE("sun-zeroed forward ignores the sun input bit for bit") {
  ModelConfig c = micro_config();
  ModelParams p = ModelParams::create(c, 30);
  MicroScene s = micro_scene();
  std::vector<Vec3> queries = {s.grid.voxel_center(1, 2, 2), s.grid.voxel_center(3, 0, 1)};
  Vec a = model_forward(p, c, s.input(Vec2(0.1, 0.9)), queries, SunMode::Zeroed);
  Vec b = model_forward(p, c, s.input(Vec2(0.8, 0.2)), queries, SunMode::Zeroed);
  CHECK(a == b);
  Vec c2 = model_forward(p, c, s.input(Vec2(0.8, 0.2)), queries, SunMode::Active);
  CHECK(a != c2);
}

TEST_CASE("analytic gradients match finite differences for every block") {
  ModelConfig c = micro_config();
  ModelParams p = ModelParams::create(c, 55);
  MicroScene s = micro_scene();
  std::vector<Vec3> queries = {s.grid.voxel_center(0, 1, 2), s.grid.voxel_center(2, 2, 1),
                               s.grid.voxel_center(3, 3, 3)};
  Vec target(3);
  target << 4.0, 0.5, 2.0;

  auto loss_value = [&] {
    Vec out = model_forward(p, c, s.input(), queries, SunMode::Active);
    return 0.5 * (out - target).squaredNorm();
  };

  ForwardTrace trace;
  p.zero_grad();
  Vec out = model_forward(p, c, s.input(), queries, SunMode::Active, &trace);
  model_backward(p, c, s.input(), queries, out - target, trace);

  double h = 1e-5;
  for (Block blk : kAllBlocks) {
    double worst = 0.0;
    p.visit_block(blk, [&](double* param, double* grad, int64_t n) {
      // Probe a strided subset; full enumeration is too slow for the conv.
      int64_t stride = std::max<int64_t>(1, n / 25);
      for (int64_t i = 0; i < n; i += stride) {
        double keep = param[i];
        param[i] = keep + h;
        double up = loss_value();
        param[i] = keep - h;
        double down = loss_value();
        param[i] = keep;
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
      }
    });
    INFO("block ", block_name(blk));
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("checkpoint round-trip preserves the forward function") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "cloudtomo_test_model";
  fs::create_directories(dir);
  ModelConfig c = micro_config();
  Checkpoint ckpt;
  ckpt.config = c;
  ckpt.params = ModelParams::create(c, 99);
  ckpt.stats_mean = 0.37;
  ckpt.stats_std = 1.21;
  ckpt.stage = 2;
  ckpt.config_hash = c.hash();
  std::string path = (dir / "m.ckpt").string();
  save_checkpoint(ckpt, path);
  Checkpoint r = load_checkpoint(path);
  CHECK(r.stage == 2);
  CHECK(r.stats_mean == ckpt.stats_mean);
  CHECK(r.stats_std == ckpt.stats_std);
  CHECK(r.config_hash == c.hash());
  CHECK(r.config.output_scale == c.output_scale);

  MicroScene s = micro_scene();
  std::vector<Vec3> queries = {s.grid.voxel_center(1, 1, 1)};
  Vec a = model_forward(ckpt.params, c, s.input(), queries, SunMode::Active);
  Vec b = model_forward(r.params, r.config, s.input(), queries, SunMode::Active);
  CHECK(a == b);

  // Corrupt magic must be rejected.
  std::ofstream bad(path, std::ios::binary | std::ios::trunc);
  bad << "BADMAGIC";
  bad.close();
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  fs::remove_all(dir);
}
