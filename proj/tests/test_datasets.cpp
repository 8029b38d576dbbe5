// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "cloudtomo/config.hpp"
#include "cloudtomo/datasets.hpp"
#include "cloudtomo/io.hpp"

using namespace cloudtomo;
namespace fs = std::filesystem;

namespace {

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

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("sun input encoding") {
  Vec2 e = encode_sun_input(SunDirection(135, 30));
  CHECK(e[0] == doctest::Approx(0.375));
  CHECK(e[1] == doctest::Approx(1.0 / 3.0));
  e = encode_sun_input(SunDirection(0, 0));
  CHECK(e[0] == 0.0);
  CHECK(e[1] == 0.0);
  // 359.7 rounds to 360, wraps to 0.
  e = encode_sun_input(SunDirection(359.7, 90));
  CHECK(e[0] == 0.0);
  CHECK(e[1] == 1.0);
  // Adding 360 degrees of azimuth changes nothing.
  CHECK(encode_sun_input(SunDirection(495, 30)) == encode_sun_input(SunDirection(135, 30)));
}

TEST_CASE("normalization statistics use the population convention") {
  MultiviewImages imgs;
  imgs.n_cam = 1;
  imgs.height = 1;
  imgs.width = 2;
  imgs.data = {0.0f, 2.0f};
  // corpus {0, 2}: mean 1, population std 1
  NormalizationStats stats{1.0, 1.0};
  MultiviewImages norm = normalize_images(imgs, stats);
  CHECK(norm.data[0] == doctest::Approx(-1.0));
  CHECK(norm.data[1] == doctest::Approx(1.0));
}

TEST_CASE("fixed-sun dataset build") {
  TempDir tmp("cloudtomo_test_fixed_ds");
  DatasetBuildOptions opts = micro_options(4);
  DatasetManifest m = build_fixed_sun_dataset(4, 2, opts, tmp.path.string());
  CHECK(m.train_ids.size() == 4);
  CHECK(m.test_ids.size() == 2);
  std::set<std::string> ids(m.train_ids.begin(), m.train_ids.end());
  ids.insert(m.test_ids.begin(), m.test_ids.end());
  CHECK(ids.size() == 6);

  for (const auto& id : m.train_ids) {
    Scene s = load_scene(m.scene_dir(id));
    CHECK(s.sun.azimuth == doctest::Approx(135.0));
    CHECK(s.sun.zenith == doctest::Approx(30.0));
    CHECK(s.cameras.size() == 3);
    CHECK(s.split == Split::Train);
    s.validate();
  }

  // Stats recompute from the train split.
  DatasetManifest loaded = load_manifest(tmp.path.string());
  NormalizationStats st = compute_stats(loaded);
  CHECK(st.mean == doctest::Approx(loaded.stats.mean).epsilon(1e-12));
  CHECK(st.std == doctest::Approx(loaded.stats.std).epsilon(1e-12));
  CHECK(st.std > 0.0);

  // Normalizing the stats' own corpus re-centers it.
  double sum = 0.0, count = 0.0;
  for (const auto& id : loaded.train_ids) {
    Scene s = load_scene(loaded.scene_dir(id));
    MultiviewImages n = normalize_images(s.images, st);
    for (float v : n.data) sum += v;
    count += double(n.data.size());
  }
  CHECK(std::abs(sum / count) < 1e-6);
}

TEST_CASE("dataset rebuilds are byte-identical") {
  TempDir a("cloudtomo_test_ds_a"), b("cloudtomo_test_ds_b");
  DatasetBuildOptions opts = micro_options(9);
  build_fixed_sun_dataset(2, 1, opts, a.path.string());
  build_fixed_sun_dataset(2, 1, opts, b.path.string());
  for (auto it = fs::recursive_directory_iterator(a.path);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    fs::path rel = fs::relative(it->path(), a.path);
    CHECK(io::file_hash(it->path().string()) == io::file_hash((b.path / rel).string()));
  }
}

TEST_CASE("varying-sun dataset structure") {
  TempDir tmp("cloudtomo_test_sun_ds");
  DatasetBuildOptions opts = micro_options(5);
  DatasetManifest m = build_varying_sun_dataset(3, 1, 4, false, opts, tmp.path.string());
  CHECK(m.train_ids.size() == 12);
  CHECK(m.test_ids.size() == 4);

  // Same base cloud across sun draws, distinct suns, shared nominal formation.
  Scene s0 = load_scene(m.scene_dir(m.train_ids[0]));
  Scene s1 = load_scene(m.scene_dir(m.train_ids[1]));
  CHECK(s0.field.beta == s1.field.beta);
  CHECK((s0.sun.azimuth != s1.sun.azimuth || s0.sun.zenith != s1.sun.zenith));
  CHECK(s0.cameras[0].position == s1.cameras[0].position);
  Scene other_base = load_scene(m.scene_dir(m.train_ids[4]));
  CHECK(s0.field.beta != other_base.field.beta);
}

TEST_CASE("perturbed poses stay within 50 km of nominal") {
  TempDir tmp("cloudtomo_test_pert_ds");
  DatasetBuildOptions opts = micro_options(6);
  DatasetManifest m = build_varying_sun_dataset(2, 1, 2, true, opts, tmp.path.string());
  CameraArray nominal =
      formation_poses(opts.grid.center(), opts.altitude_km, opts.spacing_km, opts.n_cam,
                      opts.image_size, opts.image_size);
  bool any_moved = false;
  for (const auto& id : m.train_ids) {
    Scene s = load_scene(m.scene_dir(id));
    for (size_t c = 0; c < s.cameras.size(); ++c) {
      Vec3 d = s.cameras[c].position - nominal[c].position;
      CHECK(std::abs(d.x()) <= 50.0);
      CHECK(std::abs(d.y()) <= 50.0);
      CHECK(std::abs(d.z()) <= 50.0);
      any_moved = any_moved || d.norm() > 1e-9;
    }
  }
  CHECK(any_moved);
}

TEST_CASE("scene file round-trip and corruption") {
  TempDir tmp("cloudtomo_test_scene_io");
  DatasetBuildOptions opts = micro_options(8);
  DatasetManifest m = build_fixed_sun_dataset(2, 1, opts, tmp.path.string());
  std::string dir = m.scene_dir(m.train_ids[0]);
  Scene s = load_scene(dir);

  std::string copy = (tmp.path / "copy").string();
  save_scene(s, copy);
  Scene r = load_scene(copy);
  CHECK(r.id == s.id);
  CHECK(r.field.beta == s.field.beta);
  CHECK(r.images.data == s.images.data);
  CHECK(r.sun.azimuth == s.sun.azimuth);
  CHECK(r.cameras.size() == s.cameras.size());
  // save -> load -> save is byte-stable
  std::string copy2 = (tmp.path / "copy2").string();
  save_scene(r, copy2);
  for (const char* f : {"volume.vol", "images.img", "scene.json"})
    CHECK(io::file_hash(copy + "/" + f) == io::file_hash(copy2 + "/" + f));

  // Truncated image payload must be a structured error.
  {
    fs::path img = fs::path(copy) / "images.img";
    auto size = fs::file_size(img);
    fs::resize_file(img, size / 2);
  }
  CHECK_THROWS_AS(load_scene(copy), IoError);
}

TEST_CASE("zero-std corpus is rejected") {
  TempDir tmp("cloudtomo_test_const_ds");
  DatasetBuildOptions opts = micro_options(1);
  DatasetManifest m = build_fixed_sun_dataset(2, 1, opts, tmp.path.string());
  // Overwrite every training image with a constant.
  for (const auto& id : m.train_ids) {
    Scene s = load_scene(m.scene_dir(id));
    std::fill(s.images.data.begin(), s.images.data.end(), 5.0f);
    save_scene(s, m.scene_dir(id));
  }
  CHECK_THROWS_AS(compute_stats(m), ValidationError);
}

TEST_CASE("data root resolution") {
  TempDir tmp("cloudtomo_test_root");
  fs::create_directories(tmp.path / "sets" / "alpha");
  setenv("CLOUDTOMO_DATA_ROOT", (tmp.path / "sets").string().c_str(), 1);
  CHECK(resolve_data_path("alpha") == (tmp.path / "sets" / "alpha").string());
  // Absolute and existing paths pass through untouched.
  CHECK(resolve_data_path(tmp.path.string()) == tmp.path.string());
  unsetenv("CLOUDTOMO_DATA_ROOT");
  CHECK(resolve_data_path("alpha") == "alpha");
}
