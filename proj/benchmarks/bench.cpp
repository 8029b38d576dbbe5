// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "cloudtomo/model.hpp"
#include "cloudtomo/renderer.hpp"
#include "cloudtomo/volumes.hpp"

using namespace cloudtomo;

namespace {

ExtinctionField bench_field() {
  GridSpec g;
  g.nx = g.ny = g.nz = 16;
  g.dx = g.dy = 0.1;
  g.dz = 0.075;
  CloudGenParams params;
  params.seed = 1;
  return generate_cloud(g, params);
}

void bm_transmittance(benchmark::State& state) {
  ExtinctionField f = bench_field();
  RenderOptions opts = RenderOptions::defaults_for(f.grid);
  Vec3 dir = sun_unit_vector(SunDirection(135, 30));
  Vec3 x = f.grid.center();
  for (auto _ : state) benchmark::DoNotOptimize(transmittance(f, x, dir, opts));
}
BENCHMARK(bm_transmittance);

void bm_render_view(benchmark::State& state) {
  ExtinctionField f = bench_field();
  RenderOptions opts = RenderOptions::defaults_for(f.grid);
  CameraArray cams = formation_poses(f.grid.center(), 500, 100, 1, 32, 32);
  for (auto _ : state)
    benchmark::DoNotOptimize(render_view(f, SunDirection(135, 30), cams[0], opts));
}
BENCHMARK(bm_render_view);

void bm_model_forward(benchmark::State& state) {
  ExtinctionField f = bench_field();
  ModelConfig c;
  c.n_cam = 10;
  c.conv_channels = {8, 16, 16};
  c.conv_strides = {2, 1, 1};
  c.feature_channels = 16;
  c.encoder_width = 32;
  c.encoder_depth = 3;
  c.decoder_hidden = {128, 64};
  ModelParams p = ModelParams::create(c, 7);
  CameraArray cams = formation_poses(f.grid.center(), 500, 100, 10, 32, 32);
  MultiviewImages imgs;
  imgs.n_cam = 10;
  imgs.height = imgs.width = 32;
  imgs.data.resize(10 * 32 * 32);
  Rng rng(3);
  for (auto& v : imgs.data) v = float(rng.uniform(-1.0, 1.0));
  SceneInput input{&imgs, &cams, Vec2(0.375, 1.0 / 3.0), f.grid};
  std::vector<Vec3> queries;
  for (int i = 0; i < 200; ++i)
    queries.push_back(f.grid.voxel_center(i % 16, (i / 16) % 16, (i / 64) % 16));
  for (auto _ : state)
    benchmark::DoNotOptimize(model_forward(p, c, input, queries, SunMode::Active));
}
BENCHMARK(bm_model_forward);

}  // namespace

BENCHMARK_MAIN();
