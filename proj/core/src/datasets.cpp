// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cloudtomo/io.hpp"
#include "cloudtomo/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cloudtomo {

void Scene::validate() const {
  field.validate();
  images.validate();
  if (images.n_cam != static_cast<int>(cameras.size()))
    throw ValidationError("scene image view count != camera count");
  for (const auto& cam : cameras.cameras) cam.validate();
}

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected 3-vector in scene metadata");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void save_scene(const Scene& scene, const std::string& dir) {
  scene.validate();
  fs::create_directories(dir);
  save_volume(scene.field, dir + "/volume.vol");
  save_images(scene.images, dir + "/images.img");
  json j;
  j["version"] = 1;
  j["id"] = scene.id;
  j["split"] = split_name(scene.split);
  j["sun"] = {{"azimuth", scene.sun.azimuth}, {"zenith", scene.sun.zenith}};
  json cams = json::array();
  for (const auto& cam : scene.cameras.cameras) {
    cams.push_back({{"position", vec3_to_json(cam.position)},
                    {"look_at", vec3_to_json(cam.look_at)},
                    {"up_hint", vec3_to_json(cam.up_hint)},
                    {"fov_deg", cam.fov_deg},
                    {"width", cam.width},
                    {"height", cam.height}});
  }
  j["cameras"] = cams;
  std::ofstream os(dir + "/scene.json");
  if (!os) throw IoError("cannot write scene metadata: " + dir);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + dir + "/scene.json");
}

Scene load_scene(const std::string& dir) {
  std::ifstream is(dir + "/scene.json");
  if (!is) throw IoError("cannot open scene metadata: " + dir);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("corrupt scene metadata in " + dir + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw IoError("unknown scene metadata version in " + dir);
  Scene scene;
  scene.id = j.at("id").get<std::string>();
  std::string split = j.at("split").get<std::string>();
  if (split == "train")
    scene.split = Split::Train;
  else if (split == "test")
    scene.split = Split::Test;
  else
    throw IoError("unknown split tag in " + dir);
  scene.sun = SunDirection(j.at("sun").at("azimuth").get<double>(),
                           j.at("sun").at("zenith").get<double>());
  for (const auto& jc : j.at("cameras")) {
    CameraPose cam;
    cam.position = vec3_from_json(jc.at("position"));
    cam.look_at = vec3_from_json(jc.at("look_at"));
    cam.up_hint = vec3_from_json(jc.at("up_hint"));
    cam.fov_deg = jc.at("fov_deg").get<double>();
    cam.width = jc.at("width").get<int>();
    cam.height = jc.at("height").get<int>();
    scene.cameras.cameras.push_back(cam);
  }
  scene.field = load_volume(dir + "/volume.vol");
  scene.images = load_images(dir + "/images.img");
  scene.validate();
  return scene;
}

void save_manifest(const DatasetManifest& manifest, const std::string& root) {
  json j;
  j["version"] = 1;
  j["name"] = manifest.name;
  j["train_ids"] = manifest.train_ids;
  j["test_ids"] = manifest.test_ids;
  j["config"] = manifest.config;
  j["render"] = {{"step_km", manifest.render.step_km},
                 {"sun_step_km", manifest.render.sun_step_km},
                 {"irradiance", manifest.render.irradiance},
                 {"background", manifest.render.background}};
  j["stats_file"] = "stats.json";
  std::ofstream os(root + "/manifest.json");
  if (!os) throw IoError("cannot write manifest: " + root);
  os << j.dump(2) << "\n";

  json js = {{"mean", manifest.stats.mean}, {"std", manifest.stats.std}};
  std::ofstream oss(root + "/stats.json");
  if (!oss) throw IoError("cannot write stats: " + root);
  oss << js.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& root_in) {
  std::string root = resolve_data_path(root_in);
  std::ifstream is(root + "/manifest.json");
  if (!is) throw IoError("cannot open manifest: " + root);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("corrupt manifest: ") + e.what());
  }
  if (j.value("version", 0) != 1) throw IoError("unknown manifest version");
  DatasetManifest m;
  m.root = root;
  m.name = j.at("name").get<std::string>();
  m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  if (j.contains("config"))
    m.config = j["config"].get<std::map<std::string, std::string>>();
  m.render.step_km = j.at("render").at("step_km").get<double>();
  m.render.sun_step_km = j.at("render").at("sun_step_km").get<double>();
  m.render.irradiance = j.at("render").at("irradiance").get<double>();
  m.render.background = j.at("render").at("background").get<double>();

  std::set<std::string> train(m.train_ids.begin(), m.train_ids.end());
  for (const auto& id : m.test_ids)
    if (train.count(id)) throw ValidationError("train/test ids overlap: " + id);

  std::ifstream iss(root + "/" + j.value("stats_file", std::string("stats.json")));
  if (iss) {
    json js;
    iss >> js;
    m.stats.mean = js.at("mean").get<double>();
    m.stats.std = js.at("std").get<double>();
  }
  return m;
}

std::string resolve_data_path(const std::string& path) {
  if (fs::path(path).is_absolute() || fs::exists(path)) return path;
  if (const char* root = std::getenv("CLOUDTOMO_DATA_ROOT"))
    return std::string(root) + "/" + path;
  return path;
}

namespace {

RenderOptions effective_render(const DatasetBuildOptions& opts) {
  if (opts.render.step_km > 0) return opts.render;
  RenderOptions r = RenderOptions::defaults_for(opts.grid);
  r.irradiance = opts.render.irradiance;
  r.background = opts.render.background;
  return r;
}

CameraArray nominal_formation(const DatasetBuildOptions& opts) {
  double span = opts.grid.extent().head<2>().norm();
  return formation_poses(opts.grid.center(), opts.altitude_km, opts.spacing_km, opts.n_cam,
                         opts.image_size, opts.image_size, span);
}

// Builds, renders, and writes one scene; removes the partial directory on
// failure.
void emit_scene(Scene&& scene, const std::string& root) {
  std::string dir = root + "/" + scene.id;
  try {
    save_scene(scene, dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw;
  }
}

}  // namespace

DatasetManifest build_fixed_sun_dataset(int n_train, int n_test, const DatasetBuildOptions& opts,
                                        const std::string& out_dir) {
  if (n_train < 1 || n_test < 1) throw ConfigError("scene counts must be >= 1");
  opts.grid.validate();
  RenderOptions render = effective_render(opts);
  fs::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.name = "fixed-sun";
  manifest.render = render;
  manifest.root = out_dir;
  manifest.config["seed"] = std::to_string(opts.seed);
  manifest.config["sun_protocol"] = "fixed azimuth=135 zenith=30";
  manifest.config["perturb_poses"] = "0";
  manifest.config["n_cam"] = std::to_string(opts.n_cam);

  SunDirection sun(135.0, 30.0);
  CameraArray cameras = nominal_formation(opts);
  int total = n_train + n_test;
  for (int s = 0; s < total; ++s) {
    Scene scene;
    scene.split = s < n_train ? Split::Train : Split::Test;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04d", split_name(scene.split),
                  scene.split == Split::Train ? s : s - n_train);
    scene.id = buf;
    CloudGenParams params = opts.cloud;
    params.seed = static_cast<int64_t>(derive_seed(opts.seed, "cloud", uint64_t(s)));
    scene.field = generate_cloud(opts.grid, params);
    scene.sun = sun;
    scene.cameras = cameras;
    scene.images = render_scene(scene.field, scene.sun, scene.cameras, render);
    (scene.split == Split::Train ? manifest.train_ids : manifest.test_ids).push_back(scene.id);
    emit_scene(std::move(scene), out_dir);
  }
  manifest.stats = compute_stats(manifest, Split::Train);
  save_manifest(manifest, out_dir);
  return manifest;
}

DatasetManifest build_varying_sun_dataset(int base_train, int base_test, int suns_per_scene,
                                          bool perturb, const DatasetBuildOptions& opts,
                                          const std::string& out_dir) {
  if (base_train < 1 || base_test < 1 || suns_per_scene < 1)
    throw ConfigError("scene counts must be >= 1");
  opts.grid.validate();
  RenderOptions render = effective_render(opts);
  fs::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.name = perturb ? "varying-sun-perturbed" : "varying-sun";
  manifest.render = render;
  manifest.root = out_dir;
  manifest.config["seed"] = std::to_string(opts.seed);
  manifest.config["sun_protocol"] = "uniform azimuth=[0,360) zenith=[0,90]";
  manifest.config["suns_per_scene"] = std::to_string(suns_per_scene);
  manifest.config["perturb_poses"] = perturb ? "1" : "0";
  manifest.config["n_cam"] = std::to_string(opts.n_cam);

  CameraArray nominal = nominal_formation(opts);
  int total_base = base_train + base_test;
  for (int b = 0; b < total_base; ++b) {
    Split split = b < base_train ? Split::Train : Split::Test;
    CloudGenParams params = opts.cloud;
    params.seed = static_cast<int64_t>(derive_seed(opts.seed, "cloud", uint64_t(b)));
    ExtinctionField field = generate_cloud(opts.grid, params);
    for (int s = 0; s < suns_per_scene; ++s) {
      uint64_t scene_index = uint64_t(b) * uint64_t(suns_per_scene) + uint64_t(s);
      Scene scene;
      scene.split = split;
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%s_b%04d_s%02d", split_name(split),
                    split == Split::Train ? b : b - base_train, s);
      scene.id = buf;
      scene.field = field;
      scene.sun = sample_sun(derive_seed(opts.seed, "sun", scene_index));
      scene.cameras = perturb
                          ? perturb_poses(nominal, derive_seed(opts.seed, "perturb", scene_index))
                          : nominal;
      scene.images = render_scene(scene.field, scene.sun, scene.cameras, render);
      (split == Split::Train ? manifest.train_ids : manifest.test_ids).push_back(scene.id);
      emit_scene(std::move(scene), out_dir);
    }
  }
  manifest.stats = compute_stats(manifest, Split::Train);
  save_manifest(manifest, out_dir);
  return manifest;
}

Vec2 encode_sun_input(const SunDirection& sun) {
  long az = std::lround(sun.azimuth);
  az = ((az % 360) + 360) % 360;  // 360 wraps to 0
  long zen = std::lround(sun.zenith);
  double a = std::clamp(double(az) / 360.0, 0.0, 1.0);
  double z = std::clamp(double(zen) / 90.0, 0.0, 1.0);
  return {a, z};
}

NormalizationStats compute_stats(const DatasetManifest& manifest, Split split) {
  double sum = 0.0, sumsq = 0.0;
  int64_t n = 0;
  for (const auto& id : manifest.ids(split)) {
    MultiviewImages images = load_images(manifest.scene_dir(id) + "/images.img");
    for (float v : images.data) {
      sum += v;
      sumsq += double(v) * v;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("cannot compute stats over an empty split");
  NormalizationStats stats;
  stats.mean = sum / double(n);
  double var = sumsq / double(n) - stats.mean * stats.mean;
  stats.std = std::sqrt(std::max(var, 0.0));
  if (!(stats.std > 0.0)) throw ValidationError("degenerate corpus: zero std");
  return stats;
}

MultiviewImages normalize_images(const MultiviewImages& images, const NormalizationStats& stats) {
  if (!(stats.std > 0.0)) throw ValidationError("normalization std must be > 0");
  MultiviewImages out = images;
  for (float& v : out.data) v = static_cast<float>((double(v) - stats.mean) / stats.std);
  return out;
}

}  // namespace cloudtomo
