// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Runs the nine release criteria and prints one PASS/FAIL
// line each; exits nonzero when any criterion fails. Criterion 7 executes the
// full reproduce-trends recipe and dominates the runtime; its run directory
// (and the smoke reruns of criterion 9) are left on disk for inspection.
//
// Environment:
//   CLOUDTOMO_ACCEPTANCE_DIR  work directory (default: ./acceptance_runs)
//   CLOUDTOMO_REUSE_RUN=1     reuse an existing reproduce-trends run directory
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "cloudtomo/config.hpp"
#include "cloudtomo/eval.hpp"
#include "cloudtomo/io.hpp"
#include "cloudtomo/pipeline.hpp"

using namespace cloudtomo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
  const char* env = std::getenv("CLOUDTOMO_ACCEPTANCE_DIR");
  return env ? fs::path(env) : fs::path("acceptance_runs");
}

// ---- shared micro fixtures -------------------------------------------------

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

// ---- criterion 1: metric correctness ---------------------------------------

bool criterion_metric(std::string& detail) {
  ExtinctionField t;
  t.grid.nx = 2;
  t.grid.ny = t.grid.nz = 1;
  t.beta = {2.0f, 2.0f};
  if (std::abs(relative_error(t, {1.0f, 3.0f}) - 0.5) > 1e-12) {
    detail = "hand example (2,2) vs (1,3) != 0.5";
    return false;
  }
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    ExtinctionField f;
    f.grid.nx = 5;
    f.grid.ny = 4;
    f.grid.nz = 3;
    f.beta.resize(60);
    for (auto& v : f.beta) v = float(std::max(0.0, rng.uniform(-10.0, 90.0)));
    f.beta[size_t(rng.uniform_int(0, 59))] = 1.0f;  // keep the field nonzero
    if (relative_error(f, f.beta) != 0.0) {
      detail = "eps(beta, beta) != 0";
      return false;
    }
    if (std::abs(relative_error(f, std::vector<float>(60, 0.0f)) - 1.0) > 1e-6) {
      detail = "eps(beta, 0) != 1";
      return false;
    }
  }
  detail = "hand value + 100 random fields";
  return true;
}

// ---- criterion 2: renderer physics ------------------------------------------

bool criterion_renderer(std::string& detail) {
  ExtinctionField f;
  f.grid.nx = f.grid.ny = f.grid.nz = 8;
  f.grid.dx = f.grid.dy = f.grid.dz = 1.0 / 8;
  f.beta.assign(size_t(f.grid.num_voxels()), 10.0f);
  RenderOptions opts = RenderOptions::defaults_for(f.grid);

  // Analytic Beer-Lambert within 1% at default steps.
  double t = transmittance(f, Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 1), opts);
  double exact = std::exp(-5.0);
  double rel = std::abs(t - exact) / exact;
  if (rel > 0.01) {
    detail = "slab transmittance off by " + std::to_string(rel);
    return false;
  }

  // At least first-order convergence when the step halves. The field must
  // vary spatially (the midpoint rule is exact on the constant slab) and the
  // error is aggregated over many rays because for a single ray the midpoint
  // error oscillates with the step phase relative to voxel faces.
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i)
        f.at(i, j, k) = float(0.3 + 0.05 * i * i + 0.15 * j + 0.3 * k);
  RenderOptions fine = opts, half = opts, quarter = opts;
  fine.sun_step_km = opts.sun_step_km / 512.0;
  half.sun_step_km = opts.sun_step_km / 2.0;
  quarter.sun_step_km = opts.sun_step_km / 4.0;
  Rng conv_rng(7);
  double e0 = 0.0, e1 = 0.0, e2 = 0.0;
  for (int trial = 0; trial < 32; ++trial) {
    Vec3 x0(conv_rng.uniform(0.05, 0.9), conv_rng.uniform(0.05, 0.9),
            conv_rng.uniform(0.05, 0.5));
    Vec3 dir(conv_rng.uniform(-1, 1), conv_rng.uniform(-1, 1), conv_rng.uniform(0.2, 1));
    dir.normalize();
    double ref = transmittance(f, x0, dir, fine);
    e0 += std::abs(transmittance(f, x0, dir, opts) - ref);
    e1 += std::abs(transmittance(f, x0, dir, half) - ref);
    e2 += std::abs(transmittance(f, x0, dir, quarter) - ref);
  }
  if (!(e1 < e0 && e2 < e1 && e1 <= 0.75 * e0)) {
    detail = "no first-order convergence: " + std::to_string(e0) + " -> " + std::to_string(e1) +
             " -> " + std::to_string(e2);
    return false;
  }

  // Phase normalization within 1e-3.
  for (double g : {0.0, 0.85, -0.5}) {
    const int n = 40000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += phase_hg(-1.0 + (i + 0.5) * (2.0 / n), g) * (2.0 / n);
    if (std::abs(2.0 * M_PI * sum - 1.0) > 1e-3) {
      detail = "phase normalization failed for g=" + std::to_string(g);
      return false;
    }
  }

  // Empty field -> background-only images.
  ExtinctionField empty = f;
  std::fill(empty.beta.begin(), empty.beta.end(), 0.0f);
  RenderOptions bg = opts;
  bg.background = 0.125;
  CameraPose cam;
  cam.position = empty.grid.center() + Vec3(0, 0, 500);
  cam.look_at = empty.grid.center();
  cam.fov_deg = 0.4;
  cam.width = cam.height = 8;
  for (float v : render_view(empty, SunDirection(135, 30), cam, bg))
    if (std::abs(v - 0.125f) > 1e-6f) {
      detail = "empty field not background-only";
      return false;
    }
  detail = "slab 1%, first-order steps, phase 1e-3, background";
  return true;
}

// ---- criterion 3: geometry ---------------------------------------------------

bool criterion_geometry(std::string& detail) {
  CameraPose cam;
  cam.position = Vec3(0, 0, 500);
  cam.look_at = Vec3(0, 0, 0);
  cam.fov_deg = 90.0;
  cam.width = cam.height = 64;
  PixelCoord pc = project(cam, Vec3(10, 0, 0));
  if (!pc.valid || std::abs(pc.u - 32.64) > 1e-6 || std::abs(pc.v - 32.0) > 1e-6) {
    detail = "similar-triangles example mismatch";
    return false;
  }
  CameraArray arr = formation_poses(Vec3(0.8, 0.8, 0.6));
  for (size_t c = 0; c + 1 < arr.size(); ++c)
    if (std::abs((arr[c + 1].position - arr[c].position).norm() - 100.0) > 1e-9) {
      detail = "spacing != 100 km";
      return false;
    }
  for (uint64_t seed = 0; seed < 20; ++seed) {
    CameraArray p = perturb_poses(arr, seed);
    for (size_t c = 0; c < arr.size(); ++c) {
      Vec3 d = p[c].position - arr[c].position;
      if (std::abs(d.x()) > 50.0 || std::abs(d.y()) > 50.0 || std::abs(d.z()) > 50.0) {
        detail = "perturbation out of bounds";
        return false;
      }
    }
  }
  detail = "projection 1e-6 px, spacing 100 km, perturbation bounds";
  return true;
}

// ---- criterion 4: carving superset ------------------------------------------

bool criterion_carving(std::string& detail) {
  GridSpec g;
  g.nx = g.ny = g.nz = 8;
  g.dx = g.dy = 0.2;
  g.dz = 0.15;
  CameraArray cams = formation_poses(g.center(), 500, 100, 6, 24, 24);
  CloudGenParams params;
  int violations = 0;
  for (int64_t seed = 0; seed < 50; ++seed) {
    params.seed = seed;
    ExtinctionField f = generate_cloud(g, params);
    // Independent oracle: masks from direct voxel-center projections.
    std::vector<CloudMask> masks(cams.size());
    for (size_t c = 0; c < cams.size(); ++c) {
      masks[c].height = masks[c].width = 24;
      masks[c].data.assign(24 * 24, 0);
    }
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
          if (f.at(i, j, k) <= 0.0f) continue;
          for (size_t c = 0; c < cams.size(); ++c) {
            PixelCoord pc = project(cams[c], g.voxel_center(i, j, k));
            if (!pc.valid) continue;
            masks[c].set(std::clamp(int(pc.v), 0, 23), std::clamp(int(pc.u), 0, 23), true);
          }
        }
    Hull hull = space_carve(masks, cams, g, 1);
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          if (f.at(i, j, k) > 0.0f && !hull.at(i, j, k)) ++violations;
  }
  detail = std::to_string(violations) + " violations over 50 clouds";
  return violations == 0;
}

// ---- criterion 5: gradients under stage-2 freezing ---------------------------

bool criterion_gradients(std::string& detail) {
  fs::path dir = work_dir() / "grad_check_ds";
  fs::remove_all(dir);
  DatasetManifest m = build_fixed_sun_dataset(3, 1, micro_options(31), dir.string());
  ModelConfig mc = micro_model();
  TrainConfig tc;
  tc.stage = 2;
  tc.queries_per_iteration = 16;
  tc.seed = 7;

  std::vector<TrainScene> scenes;
  for (const auto& id : m.train_ids)
    scenes.push_back(prepare_train_scene(load_scene(m.scene_dir(id)), m.stats, tc));

  ModelParams params = ModelParams::create(mc, 41);
  params.set_trainable(Block::Extractor, false);  // stage-2 freezing

  // Relative-L2 loss over a fixed 3-scene micro-batch.
  auto batch_loss = [&] {
    double total = 0.0;
    for (const auto& s : scenes) {
      size_t nq = std::min<size_t>(8, s.hull_points.size());
      std::vector<Vec3> queries(s.hull_points.begin(), s.hull_points.begin() + int64_t(nq));
      Vec out = model_forward(params, mc, s.input(), queries, SunMode::Active);
      total += loss_relative_l2(out, s.hull_beta.head(int64_t(nq)), tc.loss_delta);
    }
    return total;
  };

  params.zero_grad();
  for (const auto& s : scenes) {
    size_t nq = std::min<size_t>(8, s.hull_points.size());
    std::vector<Vec3> queries(s.hull_points.begin(), s.hull_points.begin() + int64_t(nq));
    ForwardTrace trace;
    Vec out = model_forward(params, mc, s.input(), queries, SunMode::Active, &trace);
    Vec grad;
    loss_relative_l2_grad(out, s.hull_beta.head(int64_t(nq)), tc.loss_delta, grad);
    model_backward(params, mc, s.input(), queries, grad, trace);
  }

  double h = 1e-5;
  for (Block blk : {Block::DomainEnc, Block::CamEnc, Block::SunEnc, Block::Decoder}) {
    double worst = 0.0;
    params.visit_block(blk, [&](double* p, double* g, int64_t n) {
      int64_t stride = std::max<int64_t>(1, n / 20);
      for (int64_t i = 0; i < n; i += stride) {
        double keep = p[i];
        p[i] = keep + h;
        double up = batch_loss();
        p[i] = keep - h;
        double down = batch_loss();
        p[i] = keep;
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - g[i]) / denom);
      }
    });
    if (worst > 1e-3) {
      detail = std::string("block ") + block_name(blk) + " rel err " + std::to_string(worst);
      return false;
    }
  }

  // Frozen extractor: bit-identical across 100 optimizer steps.
  TrainState state = TrainState::create(mc, tc, 51, SunMode::Active);
  state.params.set_trainable(Block::Extractor, false);
  std::ostringstream before;
  for (auto& layer : state.params.extractor.layers) {
    nn::write_mat(before, layer.W);
    nn::write_vec(before, layer.b);
  }
  for (int i = 0; i < 100; ++i) training_step(state, scenes[size_t(i) % scenes.size()], tc);
  std::ostringstream after;
  for (auto& layer : state.params.extractor.layers) {
    nn::write_mat(after, layer.W);
    nn::write_vec(after, layer.b);
  }
  if (before.str() != after.str()) {
    detail = "frozen extractor changed";
    return false;
  }
  detail = "unfrozen blocks rel<=1e-3, frozen extractor bit-stable over 100 steps";
  return true;
}

// ---- criterion 6: sun-zeroed invariance --------------------------------------

bool criterion_sun_zeroed(std::string& detail) {
  fs::path dir = work_dir() / "sun_zeroed_ds";
  fs::remove_all(dir);
  DatasetManifest m = build_fixed_sun_dataset(3, 1, micro_options(61), dir.string());
  TrainConfig tc;
  tc.stage = 1;
  tc.learning_rate = 1e-3;
  tc.queries_per_iteration = 16;
  tc.max_iterations = 40;
  tc.validation_interval = 20;
  tc.val_fraction = 0.34;
  tc.seed = 3;
  TrainOutcome out = train_stage1(tc, micro_model(), m, 71);

  Scene scene = load_scene(m.scene_dir(m.test_ids[0]));
  auto base = predict_field(out.checkpoint, scene);
  for (auto [az, zen] : std::vector<std::pair<double, double>>{{0, 0}, {210, 75}, {359, 90}}) {
    Scene variant = scene;
    variant.sun = SunDirection(az, zen);
    if (predict_field(out.checkpoint, variant) != base) {
      detail = "stage-1 output depends on the sun input";
      return false;
    }
  }
  detail = "bit-identical retrievals across sun inputs";
  return true;
}

// ---- criteria 7 and 8: reproduce-trends recipe -------------------------------

struct TrendsArtifacts {
  fs::path run;
  json summary;
};

bool run_trends(TrendsArtifacts& art, std::string& detail) {
  art.run = work_dir() / "trends";
  const char* reuse = std::getenv("CLOUDTOMO_REUSE_RUN");
  if (!(reuse && std::string(reuse) == "1" && fs::exists(art.run / "manifest.json"))) {
    fs::remove_all(art.run);
    RunConfig cfg = RunConfig::for_recipe("reproduce-trends");
    cfg.seed = 2026;
    run_recipe(cfg, art.run.string(), &std::cout);
  }
  std::ifstream is(art.run / "reports" / "summary.json");
  if (!is) {
    detail = "summary.json missing";
    return false;
  }
  is >> art.summary;
  return true;
}

bool criterion_two_stage(const TrendsArtifacts& art, std::string& detail) {
  // >= 100 varying-sun test scenes.
  EvalReport report = load_report((art.run / "reports" / "eval_stage2_seed0_sun.json").string());
  if (report.eps.size() < 100) {
    detail = "only " + std::to_string(report.eps.size()) + " varying-sun test scenes";
    return false;
  }
  int wins_vs_stage1 = 0, wins_vs_single = 0, n = 0;
  std::ostringstream numbers;
  for (const auto& seed : art.summary.at("seeds")) {
    double s1 = seed.at("stage1_sun_mean").get<double>();
    double s2 = seed.at("stage2_sun_mean").get<double>();
    double single = seed.at("single_sun_mean").get<double>();
    if (s1 - s2 >= 0.05) ++wins_vs_stage1;
    if (s2 < single) ++wins_vs_single;
    ++n;
    numbers << " [s1 " << s1 << " s2 " << s2 << " single " << single << "]";
  }
  detail = std::to_string(wins_vs_stage1) + "/" + std::to_string(n) + " seeds beat stage-1 by 5pp, " +
           std::to_string(wins_vs_single) + "/" + std::to_string(n) + " beat single-stage;" +
           numbers.str();
  return wins_vs_stage1 * 2 > n && wins_vs_single * 2 > n;
}

bool criterion_sweep(const TrendsArtifacts& art, std::string& detail) {
  for (const char* p : {"reports/sweep_stage1.csv", "reports/sweep_stage1.ppm",
                        "reports/sweep_stage2.csv", "reports/sweep_stage2.ppm"})
    if (!fs::exists(art.run / p)) {
      detail = std::string("missing artifact ") + p;
      return false;
    }
  // Parse the stage-2 sweep: mean eps of the highest bin >= lowest bin.
  std::ifstream is(art.run / "reports" / "sweep_stage2.csv");
  std::string line;
  std::getline(is, line);  // header
  double first = -1.0, last = -1.0;
  while (std::getline(is, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double lo, hi, mean;
    int count;
    if (!(row >> lo >> hi >> count)) continue;
    if (count == 0 || !(row >> mean)) continue;
    if (first < 0.0) first = mean;
    last = mean;
  }
  if (first < 0.0 || last < 0.0) {
    detail = "sweep has no populated bins";
    return false;
  }
  std::ostringstream os;
  os << "lowest bin " << first << ", highest bin " << last;
  detail = os.str();
  return last >= first;
}

// ---- criterion 9: smoke reproducibility --------------------------------------

bool criterion_reproducibility(std::string& detail) {
  fs::path a = work_dir() / "smoke_a", b = work_dir() / "smoke_b";
  fs::remove_all(a);
  fs::remove_all(b);
  RunConfig cfg = RunConfig::for_recipe("smoke");
  cfg.seed = 11;
  RunResult ra = run_recipe(cfg, a.string());
  RunResult rb = run_recipe(cfg, b.string());
  if (ra.artifacts.size() != rb.artifacts.size()) {
    detail = "artifact counts differ";
    return false;
  }
  for (size_t i = 0; i < ra.artifacts.size(); ++i)
    if (ra.artifacts[i].path != rb.artifacts[i].path || ra.artifacts[i].hash != rb.artifacts[i].hash) {
      detail = "hash mismatch at " + ra.artifacts[i].path;
      return false;
    }
  detail = std::to_string(ra.artifacts.size()) + " artifacts byte-identical";
  return true;
}

int report(int index, const char* name, bool ok, const std::string& detail) {
  std::cout << "criterion " << index << " (" << name << "): " << (ok ? "PASS" : "FAIL") << " — "
            << detail << std::endl;
  return ok ? 0 : 1;
}

}  // namespace

int main() {
  fs::create_directories(work_dir());
  int failures = 0;
  std::string detail;

  failures += report(1, "metric correctness", criterion_metric(detail), detail);
  failures += report(2, "renderer physics", criterion_renderer(detail), detail);
  failures += report(3, "geometry", criterion_geometry(detail), detail);
  failures += report(4, "carving superset", criterion_carving(detail), detail);
  failures += report(5, "gradient check", criterion_gradients(detail), detail);
  failures += report(6, "sun-zeroed invariance", criterion_sun_zeroed(detail), detail);

  TrendsArtifacts trends;
  if (run_trends(trends, detail)) {
    failures += report(7, "two-stage benefit", criterion_two_stage(trends, detail), detail);
    failures += report(8, "zenith-sweep shape", criterion_sweep(trends, detail), detail);
  } else {
    failures += report(7, "two-stage benefit", false, detail);
    failures += report(8, "zenith-sweep shape", false, "reproduce-trends run unavailable");
  }

  failures += report(9, "reproducibility", criterion_reproducibility(detail), detail);

  std::cout << (failures == 0 ? "acceptance: all criteria passed"
                              : "acceptance: " + std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
