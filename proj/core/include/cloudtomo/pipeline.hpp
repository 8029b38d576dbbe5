// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cloudtomo/config.hpp"
#include "cloudtomo/datasets.hpp"
#include "cloudtomo/eval.hpp"
#include "cloudtomo/model.hpp"
#include "cloudtomo/training.hpp"

namespace cloudtomo {

/// Everything one end-to-end run needs, serializable to a key/value config
/// file (docs/CONFIG.md). Recipes provide tuned defaults; any key can be
/// overridden from a file or the command line.
struct RunConfig {
  std::string recipe = "smoke";  // "smoke" or "reproduce-trends"
  uint64_t seed = 0;

  // Scene and formation.
  int grid_n = 8;                // cubic voxel count; domain stays 1.6 x 1.6 x 1.2 km
  int image_size = 16;
  int n_cam = 4;
  double altitude_km = 500.0;
  double spacing_km = 100.0;
  CloudGenParams cloud;

  // Dataset sizes.
  int fixed_train = 6, fixed_test = 2;
  int sun_base_train = 2, sun_base_test = 1;
  int pert_base_train = 2, pert_base_test = 1;
  int suns_per_scene = 2;

  ModelConfig model;

  // Optimization (shared across arms; per-arm iteration budgets).
  double learning_rate = 3e-4;
  double stage2_learning_rate = 3e-4;  // stage-2 fine-tuning is gentler
  double weight_decay = 1e-5;
  int queries_per_iteration = 64;
  int64_t stage1_iterations = 60;
  int64_t stage2_iterations = 40;
  int64_t single_iterations = 60;
  int64_t validation_interval = 20;
  int early_stop_patience = 3;
  int n_seeds = 1;

  double sweep_bin_deg = 10.0;

  static RunConfig for_recipe(const std::string& name);
  GridSpec grid() const;
  DatasetBuildOptions dataset_options() const;
  TrainConfig train_config(int stage, uint64_t run_seed_salted) const;
  void apply_overrides(const KvMap& kv);
  KvMap to_map() const;
  void validate() const;
};

struct RunArtifact {
  std::string path;   // relative to the run directory
  uint64_t hash = 0;  // FNV-1a 64 over file bytes
};

struct RunResult {
  std::string run_dir;
  std::vector<RunArtifact> artifacts;  // sorted by path; mirrors manifest.json
};

/// Full pipeline: generate the three datasets, train the two-stage scheme and
/// the single-stage baseline for n_seeds initializations, evaluate every
/// checkpoint on every test split, and emit the comparison table, zenith
/// sweeps, scatter plot, summary.json and a hashed artifact manifest under
/// `out_dir`. Progress lines go to `progress` when given.
RunResult run_recipe(const RunConfig& config, const std::string& out_dir,
                     std::ostream* progress = nullptr);

}  // namespace cloudtomo
