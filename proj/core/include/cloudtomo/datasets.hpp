// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cloudtomo/geometry.hpp"
#include "cloudtomo/renderer.hpp"
#include "cloudtomo/volumes.hpp"

namespace cloudtomo {

enum class Split { Train, Test };
inline const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

/// One labeled sample: extinction field, sun, cameras, rendered images.
struct Scene {
  std::string id;
  ExtinctionField field;
  SunDirection sun;
  CameraArray cameras;
  MultiviewImages images;
  Split split = Split::Train;

  void validate() const;
};

/// Image normalization statistics, computed over training images only.
/// Population (not sample) standard deviation.
struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> train_ids, test_ids;
  std::map<std::string, std::string> config;  // generation settings, stringified
  RenderOptions render;
  NormalizationStats stats;
  std::string root;  // dataset directory, set on load

  const std::vector<std::string>& ids(Split s) const {
    return s == Split::Train ? train_ids : test_ids;
  }
  std::string scene_dir(const std::string& id) const { return root + "/" + id; }
};

/// Generation knobs shared by all dataset builders.
struct DatasetBuildOptions {
  GridSpec grid = GridSpec::default_domain();
  CloudGenParams cloud;       // per-scene seeds are derived, cloud.seed is ignored
  double altitude_km = 500.0;
  double spacing_km = 100.0;
  int n_cam = 10;
  int image_size = 32;
  RenderOptions render;       // step_km <= 0 means RenderOptions::defaults_for(grid)
  uint64_t seed = 0;          // dataset-level seed; everything derives from it
};

// One directory per scene (volume.vol, images.img, scene.json) plus
// manifest.json and stats.json at the dataset root.
void save_scene(const Scene& scene, const std::string& dir);
Scene load_scene(const std::string& dir);

void save_manifest(const DatasetManifest& manifest, const std::string& root);
DatasetManifest load_manifest(const std::string& root);

/// Resolves a dataset path against $CLOUDTOMO_DATA_ROOT when the path is
/// relative and does not exist as given.
std::string resolve_data_path(const std::string& path);

/// Fixed-sun dataset: every scene at azimuth 135, zenith 30, nominal
/// formation. Deterministic per opts.seed.
DatasetManifest build_fixed_sun_dataset(int n_train, int n_test, const DatasetBuildOptions& opts,
                                        const std::string& out_dir);

/// Varying-sun dataset: each base cloud rendered under `suns_per_scene`
/// independent sun draws; with perturb_poses each scene also gets an
/// independently perturbed camera array.
DatasetManifest build_varying_sun_dataset(int base_train, int base_test, int suns_per_scene,
                                          bool perturb_poses, const DatasetBuildOptions& opts,
                                          const std::string& out_dir);

/// (round(azimuth) mod 360)/360 and round(zenith)/90, clamped to [0,1].
Vec2 encode_sun_input(const SunDirection& sun);

/// Mean and population std over every pixel of the given split.
NormalizationStats compute_stats(const DatasetManifest& manifest, Split split = Split::Train);

/// (x - mean) / std per pixel. The result is an in-memory network input and
/// is exempt from the >= 0 radiance invariant.
MultiviewImages normalize_images(const MultiviewImages& images, const NormalizationStats& stats);

}  // namespace cloudtomo
