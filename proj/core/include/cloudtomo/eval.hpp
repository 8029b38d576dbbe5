// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cloudtomo/datasets.hpp"
#include "cloudtomo/model.hpp"
#include "cloudtomo/training.hpp"

namespace cloudtomo {

struct EvalOptions {
  double mask_threshold_frac = 0.02;  // fraction of scene max radiance
  int hull_dilation = 1;
  int query_batch = 2048;
};

struct EvalReport {
  std::string checkpoint_id;
  std::string manifest_name;
  std::string split;
  std::vector<std::string> scene_ids;
  std::vector<double> eps;  // per-scene relative error
  double mean = 0.0, std = 0.0;  // population std over scenes
};

struct ZenithSweep {
  double bin_width_deg = 10.0;             // bins over |zenith - 30| in [0, 50]
  std::vector<double> bin_lo, bin_hi;
  std::vector<int> counts;
  std::vector<double> mean_eps, std_eps;   // undefined (NaN) for empty bins
};

/// Relative error: ||beta_true - beta_hat||_1 / ||beta_true||_1 over all
/// voxels. Throws on an all-zero beta_true.
double relative_error(const ExtinctionField& beta_true, const std::vector<float>& beta_hat);

/// Full-grid retrieval: carve the hull from the scene images, query the model
/// at hull voxel centers, zero elsewhere.
std::vector<float> predict_field(const Checkpoint& ckpt, const Scene& scene,
                                 const EvalOptions& opts = {});

EvalReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest,
                    Split split = Split::Test, const EvalOptions& opts = {});

ZenithSweep zenith_sweep(const Checkpoint& ckpt, const DatasetManifest& manifest,
                         Split split = Split::Test, double bin_width_deg = 10.0,
                         const EvalOptions& opts = {});
/// Groups an existing per-scene report by |zenith - 30| without re-running
/// the model; `zeniths` pairs with report.eps.
ZenithSweep sweep_from_report(const EvalReport& report, const std::vector<double>& zeniths,
                              double bin_width_deg = 10.0);

/// One (true, predicted) pair per hull voxel.
std::vector<std::pair<double, double>> scatter_data(const ExtinctionField& beta_true,
                                                    const std::vector<float>& beta_hat,
                                                    const Hull& hull);
/// Least-squares slope through the origin-free fit of predicted vs true.
double scatter_slope(const std::vector<std::pair<double, double>>& pairs);

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);
void save_sweep_csv(const ZenithSweep& sweep, const std::string& path);

// Plot files (binary PPM raster; see docs/FORMATS.md).
void plot_sweep(const ZenithSweep& sweep, const std::string& path);
void plot_scatter(const std::vector<std::pair<double, double>>& pairs, const std::string& path);

/// Three-way comparison table (rows: checkpoints, columns: datasets).
std::string comparison_table(const std::vector<std::string>& row_labels,
                             const std::vector<std::string>& col_labels,
                             const std::vector<std::vector<EvalReport>>& reports);

}  // namespace cloudtomo
