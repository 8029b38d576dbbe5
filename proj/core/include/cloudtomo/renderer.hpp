// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cloudtomo/geometry.hpp"
#include "cloudtomo/volumes.hpp"

namespace cloudtomo {

struct RenderOptions {
  double step_km = 0.025;      // camera-ray march step
  double sun_step_km = 0.05;   // sun transmittance quadrature step
  double irradiance = 1.0;     // incident solar flux scale (arbitrary units)
  double background = 0.0;     // radiance of cloud-free pixels

  void validate() const;
  /// step = min voxel edge / 2, sun_step = min voxel edge.
  static RenderOptions defaults_for(const GridSpec& grid);
};

/// Radiance images for one scene, camera ordering matches the CameraArray.
struct MultiviewImages {
  int n_cam = 0, height = 0, width = 0;
  std::vector<float> data;  // n_cam * height * width, view-major

  float at(int c, int y, int x) const {
    return data[(size_t(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
  size_t pixels_per_view() const { return size_t(height) * width; }
  void validate() const;
};

/// Beer-Lambert transmittance exp(-integral of beta) from X to the domain
/// boundary along `direction` (unit), composite-midpoint quadrature at
/// sun_step_km. Returns 1 when X is outside the domain.
double transmittance(const ExtinctionField& field, const Vec3& X, const Vec3& direction,
                     const RenderOptions& opts);

/// Henyey-Greenstein phase function, normalized over the sphere.
double phase_hg(double cos_theta, double g);

/// Single-scatter image for one camera. Throws when the camera is inside the
/// domain (unsupported configuration).
std::vector<float> render_view(const ExtinctionField& field, const SunDirection& sun,
                               const CameraPose& camera, const RenderOptions& opts);

MultiviewImages render_scene(const ExtinctionField& field, const SunDirection& sun,
                             const CameraArray& cameras, const RenderOptions& opts);

// Images file: magic "CTIMG001", n_cam/height/width, little-endian float32.
void save_images(const MultiviewImages& images, const std::string& path);
MultiviewImages load_images(const std::string& path);

}  // namespace cloudtomo
