// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cloudtomo/io.hpp"

using nlohmann::json;

namespace cloudtomo {

double relative_error(const ExtinctionField& beta_true, const std::vector<float>& beta_hat) {
  if (beta_hat.size() != beta_true.beta.size())
    throw ValidationError("relative_error: shape mismatch");
  double num = 0.0, denom = 0.0;
  for (size_t i = 0; i < beta_hat.size(); ++i) {
    num += std::abs(double(beta_true.beta[i]) - double(beta_hat[i]));
    denom += std::abs(double(beta_true.beta[i]));
  }
  if (denom == 0.0) throw ValidationError("relative_error undefined for all-zero beta_true");
  return num / denom;
}

namespace {

Hull carve_scene_hull(const Scene& scene, const EvalOptions& opts) {
  float max_radiance = 0.0f;
  for (float v : scene.images.data) max_radiance = std::max(max_radiance, v);
  auto masks = make_masks(scene.images, opts.mask_threshold_frac * double(max_radiance));
  return space_carve(masks, scene.cameras, scene.field.grid, opts.hull_dilation);
}

}  // namespace

std::vector<float> predict_field(const Checkpoint& ckpt, const Scene& scene,
                                 const EvalOptions& opts) {
  if (!(ckpt.stats_std > 0.0)) throw ValidationError("checkpoint has incompatible stats (std<=0)");
  if (static_cast<int>(scene.cameras.size()) != ckpt.config.n_cam)
    throw ValidationError("checkpoint n_cam incompatible with scene");
  MultiviewImages normalized =
      normalize_images(scene.images, {ckpt.stats_mean, ckpt.stats_std});
  SceneInput input{&normalized, &scene.cameras, encode_sun_input(scene.sun), scene.field.grid};
  SunMode mode = ckpt.stage == 1 ? SunMode::Zeroed : SunMode::Active;
  FeatureMaps features = extract_features(normalized, ckpt.params, ckpt.config, nullptr);

  Hull hull = carve_scene_hull(scene, opts);
  const GridSpec& g = scene.field.grid;
  std::vector<float> beta_hat(static_cast<size_t>(g.num_voxels()), 0.0f);

  std::vector<Vec3> queries;
  std::vector<int64_t> indices;
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (hull.at(i, j, k)) {
          queries.push_back(g.voxel_center(i, j, k));
          indices.push_back(g.index(i, j, k));
        }
  for (size_t start = 0; start < queries.size(); start += size_t(opts.query_batch)) {
    size_t end = std::min(queries.size(), start + size_t(opts.query_batch));
    std::vector<Vec3> batch(queries.begin() + int64_t(start), queries.begin() + int64_t(end));
    Vec out = model_forward_with_features(ckpt.params, ckpt.config, input, features, batch, mode);
    for (size_t b = 0; b < batch.size(); ++b)
      beta_hat[size_t(indices[start + b])] = static_cast<float>(out[int64_t(b)]);
  }
  return beta_hat;
}

EvalReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest, Split split,
                    const EvalOptions& opts) {
  EvalReport report;
  report.manifest_name = manifest.name;
  report.split = split_name(split);
  std::ostringstream id;
  id << "stage" << ckpt.stage << "-cfg" << std::hex << ckpt.config_hash;
  report.checkpoint_id = id.str();
  for (const auto& scene_id : manifest.ids(split)) {
    Scene scene = load_scene(manifest.scene_dir(scene_id));
    std::vector<float> beta_hat = predict_field(ckpt, scene, opts);
    report.scene_ids.push_back(scene_id);
    report.eps.push_back(relative_error(scene.field, beta_hat));
  }
  if (!report.eps.empty()) {
    double sum = 0.0;
    for (double e : report.eps) sum += e;
    report.mean = sum / double(report.eps.size());
    double var = 0.0;
    for (double e : report.eps) var += (e - report.mean) * (e - report.mean);
    report.std = std::sqrt(var / double(report.eps.size()));
  }
  return report;
}

ZenithSweep sweep_from_report(const EvalReport& report, const std::vector<double>& zeniths,
                              double bin_width_deg) {
  if (zeniths.size() != report.eps.size())
    throw ValidationError("zenith list must pair with report eps");
  if (bin_width_deg <= 0) throw ConfigError("bin width must be > 0");
  ZenithSweep sweep;
  sweep.bin_width_deg = bin_width_deg;
  int n_bins = std::max(1, static_cast<int>(std::ceil(50.0 / bin_width_deg)));
  sweep.bin_lo.resize(size_t(n_bins));
  sweep.bin_hi.resize(size_t(n_bins));
  sweep.counts.assign(size_t(n_bins), 0);
  std::vector<double> sums(size_t(n_bins), 0.0), sumsqs(size_t(n_bins), 0.0);
  for (int b = 0; b < n_bins; ++b) {
    sweep.bin_lo[size_t(b)] = b * bin_width_deg;
    sweep.bin_hi[size_t(b)] = std::min((b + 1) * bin_width_deg, 50.0);
  }
  for (size_t s = 0; s < zeniths.size(); ++s) {
    // Differences beyond 50 degrees land in the last bin.
    double d = std::min(std::abs(zeniths[s] - 30.0), 50.0);
    int b = std::min(static_cast<int>(d / bin_width_deg), n_bins - 1);
    sweep.counts[size_t(b)]++;
    sums[size_t(b)] += report.eps[s];
    sumsqs[size_t(b)] += report.eps[s] * report.eps[s];
  }
  sweep.mean_eps.assign(size_t(n_bins), std::numeric_limits<double>::quiet_NaN());
  sweep.std_eps.assign(size_t(n_bins), std::numeric_limits<double>::quiet_NaN());
  for (int b = 0; b < n_bins; ++b) {
    if (sweep.counts[size_t(b)] == 0) continue;
    double m = sums[size_t(b)] / sweep.counts[size_t(b)];
    sweep.mean_eps[size_t(b)] = m;
    sweep.std_eps[size_t(b)] =
        std::sqrt(std::max(sumsqs[size_t(b)] / sweep.counts[size_t(b)] - m * m, 0.0));
  }
  return sweep;
}

ZenithSweep zenith_sweep(const Checkpoint& ckpt, const DatasetManifest& manifest, Split split,
                         double bin_width_deg, const EvalOptions& opts) {
  EvalReport report = evaluate(ckpt, manifest, split, opts);
  std::vector<double> zeniths;
  for (const auto& id : manifest.ids(split))
    zeniths.push_back(load_scene(manifest.scene_dir(id)).sun.zenith);
  return sweep_from_report(report, zeniths, bin_width_deg);
}

std::vector<std::pair<double, double>> scatter_data(const ExtinctionField& beta_true,
                                                    const std::vector<float>& beta_hat,
                                                    const Hull& hull) {
  if (beta_hat.size() != beta_true.beta.size() || hull.occupied.size() != beta_true.beta.size())
    throw ValidationError("scatter_data: shape mismatch");
  std::vector<std::pair<double, double>> pairs;
  for (size_t i = 0; i < beta_hat.size(); ++i)
    if (hull.occupied[i]) pairs.emplace_back(double(beta_true.beta[i]), double(beta_hat[i]));
  return pairs;
}

double scatter_slope(const std::vector<std::pair<double, double>>& pairs) {
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [t, p] : pairs) {
    sxy += t * p;
    sxx += t * t;
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

void save_report(const EvalReport& report, const std::string& path) {
  json j;
  j["version"] = 1;
  j["checkpoint_id"] = report.checkpoint_id;
  j["manifest_name"] = report.manifest_name;
  j["split"] = report.split;
  j["scene_ids"] = report.scene_ids;
  j["eps"] = report.eps;
  j["mean"] = report.mean;
  j["std"] = report.std;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report: " + path);
  os << j.dump(2) << "\n";
}

EvalReport load_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open report: " + path);
  json j;
  is >> j;
  EvalReport report;
  report.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  report.manifest_name = j.at("manifest_name").get<std::string>();
  report.split = j.at("split").get<std::string>();
  report.scene_ids = j.at("scene_ids").get<std::vector<std::string>>();
  report.eps = j.at("eps").get<std::vector<double>>();
  report.mean = j.at("mean").get<double>();
  report.std = j.at("std").get<double>();
  return report;
}

void save_sweep_csv(const ZenithSweep& sweep, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write sweep csv: " + path);
  os << "bin_lo_deg,bin_hi_deg,count,mean_eps,std_eps\n";
  os.precision(10);
  for (size_t b = 0; b < sweep.counts.size(); ++b) {
    os << sweep.bin_lo[b] << "," << sweep.bin_hi[b] << "," << sweep.counts[b] << ",";
    if (sweep.counts[b] > 0)
      os << sweep.mean_eps[b] << "," << sweep.std_eps[b];
    else
      os << ",";
    os << "\n";
  }
}

std::string comparison_table(const std::vector<std::string>& row_labels,
                             const std::vector<std::string>& col_labels,
                             const std::vector<std::vector<EvalReport>>& reports) {
  if (reports.size() != row_labels.size())
    throw ValidationError("comparison_table: row count mismatch");
  std::ostringstream os;
  os << "relative error epsilon, mean +/- std over test scenes\n\n";
  size_t w = 24;
  os << std::string(w, ' ');
  for (const auto& c : col_labels) {
    std::string cell = c;
    cell.resize(std::max(cell.size(), size_t(20)), ' ');
    os << cell;
  }
  os << "\n";
  for (size_t r = 0; r < reports.size(); ++r) {
    if (reports[r].size() != col_labels.size())
      throw ValidationError("comparison_table: column count mismatch");
    std::string label = row_labels[r];
    label.resize(std::max(label.size(), w), ' ');
    os << label;
    for (const auto& rep : reports[r]) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.3f +/- %.3f", rep.mean, rep.std);
      std::string cell = buf;
      cell.resize(std::max(cell.size(), size_t(20)), ' ');
      os << cell;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace cloudtomo
