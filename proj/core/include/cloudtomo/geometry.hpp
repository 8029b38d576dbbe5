// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cloudtomo/common.hpp"

namespace cloudtomo {

// Axis convention: z up, x east, y north. Azimuth is measured from +x toward
// +y; zenith from the vertical.

/// Sun direction as an (azimuth, zenith) pair in degrees.
struct SunDirection {
  double azimuth = 0.0;  // [0, 360), wraps at construction
  double zenith = 0.0;   // [0, 90]

  SunDirection() = default;
  SunDirection(double azimuth_deg, double zenith_deg);
};

/// Pinhole camera with look-at orientation.
struct CameraPose {
  Vec3 position = Vec3::Zero();   // km
  Vec3 look_at = Vec3::Zero();    // km
  Vec3 up_hint = Vec3(0, 1, 0);
  double fov_deg = 60.0;          // full horizontal field of view
  int width = 32, height = 32;

  void validate() const;
};

struct CameraArray {
  std::vector<CameraPose> cameras;  // ordered by along-track index

  size_t size() const { return cameras.size(); }
  const CameraPose& operator[](size_t i) const { return cameras[i]; }
};

struct PixelCoord {
  double u = 0.0, v = 0.0;
  bool valid = false;
};

/// String-of-pearls formation: n_cam cameras on an along-track (+x) line at
/// `altitude_km` above the domain center, all aimed at the domain center.
/// Field of view is set per camera so `domain_span_km` covers ~80% of the
/// image width.
CameraArray formation_poses(const Vec3& domain_center, double altitude_km = 500.0,
                            double spacing_km = 100.0, int n_cam = 10,
                            int image_width = 32, int image_height = 32,
                            double domain_span_km = 1.6 * 1.4142135623730951);

/// Independent U[-half_range, +half_range] shift of every position coordinate;
/// look_at stays fixed (cameras re-aim at the domain center).
CameraArray perturb_poses(const CameraArray& array, uint64_t seed, double half_range_km = 50.0);

/// Azimuth ~ U[0,360), zenith ~ U[0,90].
SunDirection sample_sun(uint64_t seed);

/// Unit vector from the domain toward the sun.
Vec3 sun_unit_vector(const SunDirection& sun);

/// Pinhole projection of world point X into the camera image.
PixelCoord project(const CameraPose& camera, const Vec3& X);

/// Orthonormal camera frame (right, up, forward) from the look-at pose.
void camera_frame(const CameraPose& camera, Vec3& right, Vec3& up, Vec3& forward);

/// World-space direction of the ray through continuous image coordinate
/// (u, v); pass (px + 0.5, py + 0.5) for the center of pixel (px, py).
Vec3 pixel_ray_direction(const CameraPose& camera, double u, double v);

}  // namespace cloudtomo
