// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cloudtomo/carving.hpp"
#include "cloudtomo/datasets.hpp"
#include "cloudtomo/model.hpp"

namespace cloudtomo {

struct TrainConfig {
  int stage = 1;  // 1, 2, or 3 (single-stage baseline)
  double learning_rate = 1e-5;
  double weight_decay = 1e-5;
  int queries_per_iteration = 200;
  int64_t max_iterations = 100000;
  int64_t validation_interval = 500;
  int early_stop_patience = 10;  // validation checks without improvement
  double loss_delta = 1e-6;      // stabilizer in the relative L2 loss
  double val_fraction = 0.1;     // train scenes held out for early stopping
  double mask_threshold_frac = 0.02;  // hull mask threshold, fraction of scene max radiance
  int hull_dilation = 1;
  uint64_t seed = 0;

  void validate() const;
};

/// ||beta_hat - beta_true||_2 / (||beta_true||_2 + delta).
double loss_relative_l2(const Vec& beta_hat, const Vec& beta_true, double delta);
/// Loss value plus d(loss)/d(beta_hat).
double loss_relative_l2_grad(const Vec& beta_hat, const Vec& beta_true, double delta, Vec& grad);

/// One training sample with its precomputed hull query set.
struct TrainScene {
  Scene scene;
  MultiviewImages normalized;
  std::vector<Vec3> hull_points;  // hull voxel centers
  Vec hull_beta;                  // beta_true at hull_points

  SceneInput input() const {
    return SceneInput{&normalized, &scene.cameras, encode_sun_input(scene.sun), scene.field.grid};
  }
};

TrainScene prepare_train_scene(Scene&& scene, const NormalizationStats& stats,
                               const TrainConfig& config);

struct TrainState {
  ModelParams params;
  ModelConfig config;
  std::array<nn::AdamW, 5> opt;  // one per block
  int64_t iteration = 0;
  double best_val = 0.0;
  bool has_best = false;
  SunMode sun_mode = SunMode::Zeroed;
  Rng rng{0};

  static TrainState create(const ModelConfig& config, const TrainConfig& train, uint64_t init_seed,
                           SunMode mode);
};

// Train-state files restore bit-identical subsequent iterations.
void save_train_state(const TrainState& state, double stats_mean, double stats_std, int stage,
                      const std::string& path);
TrainState load_train_state(const std::string& path, double* stats_mean = nullptr,
                            double* stats_std = nullptr, int* stage = nullptr);

/// One iteration: sample queries_per_iteration hull voxels of `scene`
/// (without replacement when the hull is large enough), forward, relative-L2
/// loss against beta_true, one AdamW update of the unfrozen blocks.
/// Returns the loss; returns a negative value when the hull is empty and the
/// scene was skipped.
double training_step(TrainState& state, const TrainScene& scene, const TrainConfig& config);

struct TrainLogEntry {
  int64_t iteration;
  double train_loss;
  double val_loss;  // NaN when not a validation step
};

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<TrainLogEntry> log;
  double initial_val = 0.0, final_val = 0.0;
};

/// Stage 1: random init, sun encoder frozen and zeroed, trained on the
/// fixed-sun dataset until early stopping or max_iterations.
TrainOutcome train_stage1(const TrainConfig& config, const ModelConfig& model_config,
                          const DatasetManifest& fixed_sun, uint64_t init_seed,
                          const std::string& log_path = "");

/// Stage 2: init from the stage-1 checkpoint, image extractor frozen, sun
/// encoder active, trained on the union of the varying-sun manifests.
TrainOutcome train_stage2(const TrainConfig& config, const Checkpoint& stage1,
                          const std::vector<DatasetManifest>& varying,
                          const std::string& log_path = "");

/// Ablation arm: random init, all blocks trainable, sun encoder active,
/// trained directly on varying-sun data.
TrainOutcome train_single_stage_baseline(const TrainConfig& config,
                                         const ModelConfig& model_config,
                                         const std::vector<DatasetManifest>& varying,
                                         uint64_t init_seed, const std::string& log_path = "");

/// Pixel statistics pooled over the train splits of several manifests.
NormalizationStats compute_union_stats(const std::vector<DatasetManifest>& manifests);

void write_train_log(const std::vector<TrainLogEntry>& log, const std::string& path);

}  // namespace cloudtomo
