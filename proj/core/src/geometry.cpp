// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/geometry.hpp"

#include <cmath>

#include "cloudtomo/rng.hpp"

namespace cloudtomo {

namespace {
constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
}  // namespace

SunDirection::SunDirection(double azimuth_deg, double zenith_deg) {
  azimuth = std::fmod(azimuth_deg, 360.0);
  if (azimuth < 0) azimuth += 360.0;
  if (!(zenith_deg >= 0.0 && zenith_deg <= 90.0))
    throw ValidationError("sun zenith must be in [0, 90] degrees");
  zenith = zenith_deg;
}

void CameraPose::validate() const {
  if (position == look_at) throw ValidationError("camera position equals look_at");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ValidationError("fov must be in (0, 180)");
  if (width < 1 || height < 1) throw ValidationError("image dims must be >= 1");
}

CameraArray formation_poses(const Vec3& domain_center, double altitude_km, double spacing_km,
                            int n_cam, int image_width, int image_height, double domain_span_km) {
  if (n_cam < 1) throw ConfigError("n_cam must be >= 1");
  if (altitude_km <= 0 || spacing_km <= 0) throw ConfigError("altitude and spacing must be > 0");
  CameraArray array;
  array.cameras.reserve(static_cast<size_t>(n_cam));
  for (int c = 0; c < n_cam; ++c) {
    CameraPose cam;
    double offset = (c - 0.5 * (n_cam - 1)) * spacing_km;
    cam.position = domain_center + Vec3(offset, 0.0, altitude_km);
    cam.look_at = domain_center;
    cam.up_hint = Vec3(0, 1, 0);
    cam.width = image_width;
    cam.height = image_height;
    double dist = (cam.position - cam.look_at).norm();
    cam.fov_deg = 2.0 * std::atan((domain_span_km / 0.8) * 0.5 / dist) * 180.0 / kPi;
    cam.validate();
    array.cameras.push_back(cam);
  }
  return array;
}

CameraArray perturb_poses(const CameraArray& array, uint64_t seed, double half_range_km) {
  if (half_range_km < 0) throw ConfigError("half_range_km must be >= 0");
  Rng rng(seed);
  CameraArray out = array;
  for (auto& cam : out.cameras)
    for (int a = 0; a < 3; ++a)
      cam.position[a] += rng.uniform(-half_range_km, half_range_km);
  return out;
}

SunDirection sample_sun(uint64_t seed) {
  Rng rng(seed);
  double azimuth = rng.uniform(0.0, 360.0);
  double zenith = rng.uniform() * 90.0;
  return SunDirection(azimuth, zenith);
}

Vec3 sun_unit_vector(const SunDirection& sun) {
  double z = deg2rad(sun.zenith), a = deg2rad(sun.azimuth);
  return {std::sin(z) * std::cos(a), std::sin(z) * std::sin(a), std::cos(z)};
}

void camera_frame(const CameraPose& camera, Vec3& right, Vec3& up, Vec3& forward) {
  forward = (camera.look_at - camera.position).normalized();
  Vec3 hint = camera.up_hint;
  if (std::abs(forward.dot(hint.normalized())) > 0.999) hint = Vec3(1, 0, 0);
  right = forward.cross(hint).normalized();
  up = right.cross(forward);
}

PixelCoord project(const CameraPose& camera, const Vec3& X) {
  camera.validate();
  Vec3 right, up, forward;
  camera_frame(camera, right, up, forward);
  Vec3 rel = X - camera.position;
  double zc = rel.dot(forward);
  PixelCoord pc;
  if (!(zc > 1e-12)) return pc;  // behind the camera or coincident
  double focal = (camera.width * 0.5) / std::tan(deg2rad(camera.fov_deg) * 0.5);
  pc.u = camera.width * 0.5 + rel.dot(right) / zc * focal;
  pc.v = camera.height * 0.5 - rel.dot(up) / zc * focal;
  pc.valid = pc.u >= 0.0 && pc.u < camera.width && pc.v >= 0.0 && pc.v < camera.height;
  return pc;
}

Vec3 pixel_ray_direction(const CameraPose& camera, double u, double v) {
  Vec3 right, up, forward;
  camera_frame(camera, right, up, forward);
  double focal = (camera.width * 0.5) / std::tan(deg2rad(camera.fov_deg) * 0.5);
  Vec3 d = forward + (u - camera.width * 0.5) / focal * right -
           (v - camera.height * 0.5) / focal * up;
  return d.normalized();
}

}  // namespace cloudtomo
