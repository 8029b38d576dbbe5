// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cloudtomo/io.hpp"
#include "cloudtomo/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cloudtomo {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void note(std::ostream* progress, const std::string& msg) {
  if (progress) *progress << "[run] " << msg << std::endl;
}

}  // namespace

RunConfig RunConfig::for_recipe(const std::string& name) {
  RunConfig c;
  c.recipe = name;
  if (name == "smoke") {
    // Header defaults are the smoke recipe: tiny everything, one seed.
    c.model.n_cam = c.n_cam;
    c.model.conv_channels = {8, 16};
    c.model.conv_strides = {2, 1};
    c.model.feature_channels = 16;
    c.model.encoder_width = 16;
    c.model.encoder_depth = 2;
    c.model.decoder_hidden = {32, 16};
    c.model.output_scale = 50.0;
    return c;
  }
  if (name == "reproduce-trends") {
    c.grid_n = 16;
    c.image_size = 32;
    c.n_cam = 10;
    c.fixed_train = 240;
    c.fixed_test = 24;
    // The varying-sun training split is deliberately small: the two-stage
    // scheme leans on the plentiful fixed-sun corpus, while the single-stage
    // baseline must learn everything from the varying scenes alone.
    c.sun_base_train = 6;
    c.sun_base_test = 12;
    c.pert_base_train = 4;
    c.pert_base_test = 6;
    c.suns_per_scene = 10;
    c.model.n_cam = 10;
    c.model.conv_channels = {8, 16, 16};
    c.model.conv_strides = {2, 1, 1};
    c.model.feature_channels = 16;
    c.model.encoder_width = 32;
    c.model.encoder_depth = 3;
    c.model.decoder_hidden = {128, 64};
    c.model.output_scale = 50.0;
    c.learning_rate = 3e-4;
    c.stage2_learning_rate = 1e-4;
    c.queries_per_iteration = 200;
    c.stage1_iterations = 12000;
    c.stage2_iterations = 6000;
    c.single_iterations = 18000;
    c.validation_interval = 500;
    c.early_stop_patience = 8;
    c.n_seeds = 3;
    return c;
  }
  throw ConfigError("unknown recipe: " + name + " (expected smoke or reproduce-trends)");
}

GridSpec RunConfig::grid() const {
  GridSpec g;
  g.nx = g.ny = g.nz = grid_n;
  g.dx = 1.6 / grid_n;
  g.dy = 1.6 / grid_n;
  g.dz = 1.2 / grid_n;
  return g;
}

DatasetBuildOptions RunConfig::dataset_options() const {
  DatasetBuildOptions opts;
  opts.grid = grid();
  opts.cloud = cloud;
  opts.altitude_km = altitude_km;
  opts.spacing_km = spacing_km;
  opts.n_cam = n_cam;
  opts.image_size = image_size;
  return opts;
}

TrainConfig RunConfig::train_config(int stage, uint64_t train_seed) const {
  TrainConfig t;
  t.stage = stage;
  t.learning_rate = stage == 2 ? stage2_learning_rate : learning_rate;
  t.weight_decay = weight_decay;
  t.queries_per_iteration = queries_per_iteration;
  t.max_iterations = stage == 1   ? stage1_iterations
                     : stage == 2 ? stage2_iterations
                                  : single_iterations;
  t.validation_interval = validation_interval;
  t.early_stop_patience = early_stop_patience;
  t.seed = train_seed;
  return t;
}

void RunConfig::apply_overrides(const KvMap& kv) {
  recipe = kv_str(kv, "recipe", recipe);
  seed = uint64_t(kv_int(kv, "seed", int64_t(seed)));
  grid_n = int(kv_int(kv, "grid_n", grid_n));
  image_size = int(kv_int(kv, "image_size", image_size));
  n_cam = int(kv_int(kv, "n_cam", n_cam));
  altitude_km = kv_double(kv, "altitude_km", altitude_km);
  spacing_km = kv_double(kv, "spacing_km", spacing_km);
  cloud.n_blobs_min = int(kv_int(kv, "cloud.n_blobs_min", cloud.n_blobs_min));
  cloud.n_blobs_max = int(kv_int(kv, "cloud.n_blobs_max", cloud.n_blobs_max));
  cloud.blob_scale_min = kv_double(kv, "cloud.blob_scale_min", cloud.blob_scale_min);
  cloud.blob_scale_max = kv_double(kv, "cloud.blob_scale_max", cloud.blob_scale_max);
  cloud.beta_peak_min = kv_double(kv, "cloud.beta_peak_min", cloud.beta_peak_min);
  cloud.beta_peak_max = kv_double(kv, "cloud.beta_peak_max", cloud.beta_peak_max);
  cloud.cloud_base_height = kv_double(kv, "cloud.base_height", cloud.cloud_base_height);
  fixed_train = int(kv_int(kv, "fixed_train", fixed_train));
  fixed_test = int(kv_int(kv, "fixed_test", fixed_test));
  sun_base_train = int(kv_int(kv, "sun_base_train", sun_base_train));
  sun_base_test = int(kv_int(kv, "sun_base_test", sun_base_test));
  pert_base_train = int(kv_int(kv, "pert_base_train", pert_base_train));
  pert_base_test = int(kv_int(kv, "pert_base_test", pert_base_test));
  suns_per_scene = int(kv_int(kv, "suns_per_scene", suns_per_scene));
  model.conv_channels = kv_int_list(kv, "model.conv_channels", model.conv_channels);
  model.conv_strides = kv_int_list(kv, "model.conv_strides", model.conv_strides);
  model.feature_channels = model.conv_channels.back();
  model.encoder_width = int(kv_int(kv, "model.encoder_width", model.encoder_width));
  model.encoder_depth = int(kv_int(kv, "model.encoder_depth", model.encoder_depth));
  model.decoder_hidden = kv_int_list(kv, "model.decoder_hidden", model.decoder_hidden);
  model.cam_position_scale = kv_double(kv, "model.cam_position_scale", model.cam_position_scale);
  model.output_scale = kv_double(kv, "model.output_scale", model.output_scale);
  model.n_cam = n_cam;
  learning_rate = kv_double(kv, "learning_rate", learning_rate);
  stage2_learning_rate = kv_double(kv, "stage2_learning_rate", stage2_learning_rate);
  weight_decay = kv_double(kv, "weight_decay", weight_decay);
  queries_per_iteration = int(kv_int(kv, "queries_per_iteration", queries_per_iteration));
  stage1_iterations = kv_int(kv, "stage1_iterations", stage1_iterations);
  stage2_iterations = kv_int(kv, "stage2_iterations", stage2_iterations);
  single_iterations = kv_int(kv, "single_iterations", single_iterations);
  validation_interval = kv_int(kv, "validation_interval", validation_interval);
  early_stop_patience = int(kv_int(kv, "early_stop_patience", early_stop_patience));
  n_seeds = int(kv_int(kv, "n_seeds", n_seeds));
  sweep_bin_deg = kv_double(kv, "sweep_bin_deg", sweep_bin_deg);
}

KvMap RunConfig::to_map() const {
  KvMap kv;
  kv["recipe"] = recipe;
  kv["seed"] = std::to_string(seed);
  kv["grid_n"] = std::to_string(grid_n);
  kv["image_size"] = std::to_string(image_size);
  kv["n_cam"] = std::to_string(n_cam);
  kv["altitude_km"] = fmt_double(altitude_km);
  kv["spacing_km"] = fmt_double(spacing_km);
  kv["cloud.n_blobs_min"] = std::to_string(cloud.n_blobs_min);
  kv["cloud.n_blobs_max"] = std::to_string(cloud.n_blobs_max);
  kv["cloud.blob_scale_min"] = fmt_double(cloud.blob_scale_min);
  kv["cloud.blob_scale_max"] = fmt_double(cloud.blob_scale_max);
  kv["cloud.beta_peak_min"] = fmt_double(cloud.beta_peak_min);
  kv["cloud.beta_peak_max"] = fmt_double(cloud.beta_peak_max);
  kv["cloud.base_height"] = fmt_double(cloud.cloud_base_height);
  kv["fixed_train"] = std::to_string(fixed_train);
  kv["fixed_test"] = std::to_string(fixed_test);
  kv["sun_base_train"] = std::to_string(sun_base_train);
  kv["sun_base_test"] = std::to_string(sun_base_test);
  kv["pert_base_train"] = std::to_string(pert_base_train);
  kv["pert_base_test"] = std::to_string(pert_base_test);
  kv["suns_per_scene"] = std::to_string(suns_per_scene);
  kv["model.conv_channels"] = fmt_int_list(model.conv_channels);
  kv["model.conv_strides"] = fmt_int_list(model.conv_strides);
  kv["model.encoder_width"] = std::to_string(model.encoder_width);
  kv["model.encoder_depth"] = std::to_string(model.encoder_depth);
  kv["model.decoder_hidden"] = fmt_int_list(model.decoder_hidden);
  kv["model.cam_position_scale"] = fmt_double(model.cam_position_scale);
  kv["model.output_scale"] = fmt_double(model.output_scale);
  kv["learning_rate"] = fmt_double(learning_rate);
  kv["stage2_learning_rate"] = fmt_double(stage2_learning_rate);
  kv["weight_decay"] = fmt_double(weight_decay);
  kv["queries_per_iteration"] = std::to_string(queries_per_iteration);
  kv["stage1_iterations"] = std::to_string(stage1_iterations);
  kv["stage2_iterations"] = std::to_string(stage2_iterations);
  kv["single_iterations"] = std::to_string(single_iterations);
  kv["validation_interval"] = std::to_string(validation_interval);
  kv["early_stop_patience"] = std::to_string(early_stop_patience);
  kv["n_seeds"] = std::to_string(n_seeds);
  kv["sweep_bin_deg"] = fmt_double(sweep_bin_deg);
  return kv;
}

void RunConfig::validate() const {
  if (recipe != "smoke" && recipe != "reproduce-trends")
    throw ConfigError("unknown recipe: " + recipe);
  if (grid_n < 2) throw ConfigError("grid_n must be >= 2");
  if (image_size < 4) throw ConfigError("image_size must be >= 4");
  if (n_cam < 1) throw ConfigError("n_cam must be >= 1");
  if (model.n_cam != n_cam) throw ConfigError("model.n_cam must match n_cam");
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (fixed_train < 2 || fixed_test < 1) throw ConfigError("fixed dataset too small");
  if (sun_base_train < 1 || sun_base_test < 1 || pert_base_train < 1 || pert_base_test < 1)
    throw ConfigError("varying datasets need at least one base cloud per split");
  if (suns_per_scene < 1) throw ConfigError("suns_per_scene must be >= 1");
  cloud.validate();
  model.validate();
  grid().validate();
  train_config(1, 0).validate();
  train_config(2, 0).validate();
  train_config(3, 0).validate();
}

namespace {

struct RunCtx {
  const RunConfig& cfg;
  fs::path root;
  std::ostream* progress;

  std::string rel(const fs::path& p) const { return fs::relative(p, root).generic_string(); }
};

std::string seed_tag(int s) { return "seed" + std::to_string(s); }

Hull carve_hull_for(const Scene& scene, const EvalOptions& opts) {
  float max_radiance = 0.0f;
  for (float v : scene.images.data) max_radiance = std::max(max_radiance, v);
  auto masks = make_masks(scene.images, opts.mask_threshold_frac * double(max_radiance));
  return space_carve(masks, scene.cameras, scene.field.grid, opts.hull_dilation);
}

}  // namespace

RunResult run_recipe(const RunConfig& config, const std::string& out_dir, std::ostream* progress) {
  config.validate();
  RunCtx ctx{config, fs::path(out_dir), progress};
  for (const char* d : {"configs", "datasets", "checkpoints", "reports"})
    fs::create_directories(ctx.root / d);

  write_kv_file(config.to_map(), (ctx.root / "configs" / "run.cfg").string());

  // Datasets. Each builder gets an independent derived seed so dataset
  // contents do not depend on each other or on the training arms.
  DatasetBuildOptions opts = config.dataset_options();
  note(progress, "building fixed-sun dataset");
  opts.seed = derive_seed(config.seed, "dataset-fixed");
  DatasetManifest fixed = build_fixed_sun_dataset(
      config.fixed_train, config.fixed_test, opts, (ctx.root / "datasets" / "fixed").string());
  note(progress, "building varying-sun dataset");
  opts.seed = derive_seed(config.seed, "dataset-sun");
  DatasetManifest sun = build_varying_sun_dataset(
      config.sun_base_train, config.sun_base_test, config.suns_per_scene, false, opts,
      (ctx.root / "datasets" / "sun").string());
  note(progress, "building varying-sun+pose dataset");
  opts.seed = derive_seed(config.seed, "dataset-pert");
  DatasetManifest pert = build_varying_sun_dataset(
      config.pert_base_train, config.pert_base_test, config.suns_per_scene, true, opts,
      (ctx.root / "datasets" / "pert").string());

  const std::vector<DatasetManifest> varying = {sun, pert};
  const std::vector<std::pair<std::string, const DatasetManifest*>> eval_sets = {
      {"fixed", &fixed}, {"sun", &sun}, {"pert", &pert}};

  EvalOptions eval_opts;
  json summary;
  summary["version"] = 1;
  summary["recipe"] = config.recipe;
  summary["seed"] = config.seed;
  summary["seeds"] = json::array();

  std::vector<std::string> row_labels;
  std::vector<std::vector<EvalReport>> table_rows;
  Checkpoint stage1_s0, stage2_s0;  // retained for the sweep/scatter artifacts

  for (int s = 0; s < config.n_seeds; ++s) {
    json seed_summary;
    seed_summary["seed_index"] = s;
    std::vector<std::pair<std::string, Checkpoint>> arms;

    note(progress, "training stage 1, " + seed_tag(s));
    TrainConfig t1 = config.train_config(1, derive_seed(config.seed, "train-stage1", uint64_t(s)));
    TrainOutcome o1 =
        train_stage1(t1, config.model, fixed, derive_seed(config.seed, "init", uint64_t(s)),
                     (ctx.root / "reports" / ("train_stage1_" + seed_tag(s) + ".log")).string());
    save_checkpoint(o1.checkpoint,
                    (ctx.root / "checkpoints" / ("stage1_" + seed_tag(s) + ".ckpt")).string());
    arms.emplace_back("stage1", o1.checkpoint);

    note(progress, "training stage 2, " + seed_tag(s));
    TrainConfig t2 = config.train_config(2, derive_seed(config.seed, "train-stage2", uint64_t(s)));
    TrainOutcome o2 =
        train_stage2(t2, o1.checkpoint, varying,
                     (ctx.root / "reports" / ("train_stage2_" + seed_tag(s) + ".log")).string());
    save_checkpoint(o2.checkpoint,
                    (ctx.root / "checkpoints" / ("stage2_" + seed_tag(s) + ".ckpt")).string());
    arms.emplace_back("stage2", o2.checkpoint);

    note(progress, "training single-stage baseline, " + seed_tag(s));
    TrainConfig t3 = config.train_config(3, derive_seed(config.seed, "train-single", uint64_t(s)));
    TrainOutcome o3 = train_single_stage_baseline(
        t3, config.model, varying, derive_seed(config.seed, "init-single", uint64_t(s)),
        (ctx.root / "reports" / ("train_single_" + seed_tag(s) + ".log")).string());
    save_checkpoint(o3.checkpoint,
                    (ctx.root / "checkpoints" / ("single_" + seed_tag(s) + ".ckpt")).string());
    arms.emplace_back("single", o3.checkpoint);

    if (s == 0) {
      stage1_s0 = o1.checkpoint;
      stage2_s0 = o2.checkpoint;
    }

    for (const auto& [arm, ckpt] : arms) {
      std::vector<EvalReport> row;
      for (const auto& [dname, manifest] : eval_sets) {
        note(progress, "evaluating " + arm + " " + seed_tag(s) + " on " + dname);
        EvalReport report = evaluate(ckpt, *manifest, Split::Test, eval_opts);
        save_report(report, (ctx.root / "reports" /
                             ("eval_" + arm + "_" + seed_tag(s) + "_" + dname + ".json"))
                                .string());
        seed_summary[arm + "_" + dname + "_mean"] = report.mean;
        seed_summary[arm + "_" + dname + "_std"] = report.std;
        row.push_back(std::move(report));
      }
      row_labels.push_back(arm + " " + seed_tag(s));
      table_rows.push_back(std::move(row));
    }
    summary["seeds"].push_back(seed_summary);
  }

  {
    std::ofstream os(ctx.root / "reports" / "comparison.txt");
    if (!os) throw IoError("cannot write comparison table");
    os << comparison_table(row_labels, {"fixed-sun", "varying-sun", "varying-sun+pose"},
                           table_rows);
  }

  // Zenith sweeps on the varying-sun test split, seed 0 only.
  note(progress, "zenith sweeps");
  for (const auto& [arm, ckpt] : std::vector<std::pair<std::string, const Checkpoint*>>{
           {"stage1", &stage1_s0}, {"stage2", &stage2_s0}}) {
    ZenithSweep sweep = zenith_sweep(*ckpt, sun, Split::Test, config.sweep_bin_deg, eval_opts);
    save_sweep_csv(sweep, (ctx.root / "reports" / ("sweep_" + arm + ".csv")).string());
    plot_sweep(sweep, (ctx.root / "reports" / ("sweep_" + arm + ".ppm")).string());
  }

  // Scatter plot: stage-2 retrieval of the first varying-sun test scene.
  note(progress, "scatter plot");
  {
    Scene scene = load_scene(sun.scene_dir(sun.test_ids.front()));
    std::vector<float> beta_hat = predict_field(stage2_s0, scene, eval_opts);
    Hull hull = carve_hull_for(scene, eval_opts);
    auto pairs = scatter_data(scene.field, beta_hat, hull);
    plot_scatter(pairs, (ctx.root / "reports" / "scatter_stage2.ppm").string());
    summary["scatter_scene"] = scene.id;
    summary["scatter_slope"] = scatter_slope(pairs);
    summary["scatter_points"] = pairs.size();
  }

  {
    std::ofstream os(ctx.root / "reports" / "summary.json");
    if (!os) throw IoError("cannot write summary.json");
    os << summary.dump(2) << "\n";
  }

  // Hash every artifact so a rerun with the same config can be checked for
  // bit-identical outputs.
  RunResult result;
  result.run_dir = ctx.root.string();
  for (auto it = fs::recursive_directory_iterator(ctx.root); it != fs::recursive_directory_iterator();
       ++it) {
    if (!it->is_regular_file()) continue;
    std::string rel = ctx.rel(it->path());
    if (rel == "manifest.json") continue;
    result.artifacts.push_back({rel, io::file_hash(it->path().string())});
  }
  std::sort(result.artifacts.begin(), result.artifacts.end(),
            [](const RunArtifact& a, const RunArtifact& b) { return a.path < b.path; });

  json manifest;
  manifest["version"] = 1;
  manifest["recipe"] = config.recipe;
  manifest["files"] = json::array();
  for (const auto& a : result.artifacts) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(a.hash));
    manifest["files"].push_back({{"path", a.path}, {"fnv1a64", std::string(buf)}});
  }
  {
    std::ofstream os(ctx.root / "manifest.json");
    if (!os) throw IoError("cannot write run manifest");
    os << manifest.dump(2) << "\n";
  }
  note(progress, "run complete: " + result.run_dir);
  return result;
}

}  // namespace cloudtomo
