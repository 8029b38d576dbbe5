// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cloudtomo/common.hpp"

namespace cloudtomo {

/// Voxel grid layout of the atmospheric domain. Distances in km.
struct GridSpec {
  int nx = 32, ny = 32, nz = 32;
  double dx = 0.05, dy = 0.05, dz = 0.0375;
  Vec3 origin = Vec3::Zero();

  // 32x32x32 voxels spanning 1.6 x 1.6 x 1.2 km.
  static GridSpec default_domain() { return GridSpec{}; }

  void validate() const;
  int64_t num_voxels() const { return int64_t(nx) * ny * nz; }
  Vec3 extent() const { return {nx * dx, ny * dy, nz * dz}; }
  Vec3 max_corner() const { return origin + extent(); }
  bool contains(const Vec3& p) const {
    Vec3 hi = max_corner();
    return p.x() >= origin.x() && p.y() >= origin.y() && p.z() >= origin.z() &&
           p.x() < hi.x() && p.y() < hi.y() && p.z() < hi.z();
  }
  Vec3 center() const { return origin + 0.5 * extent(); }
  /// Center of voxel (i,j,k).
  Vec3 voxel_center(int i, int j, int k) const {
    return origin + Vec3((i + 0.5) * dx, (j + 0.5) * dy, (k + 0.5) * dz);
  }
  /// Storage index; x-fastest ordering.
  int64_t index(int i, int j, int k) const { return i + int64_t(nx) * (j + int64_t(ny) * k); }

  bool operator==(const GridSpec& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz && dx == o.dx && dy == o.dy && dz == o.dz &&
           origin == o.origin;
  }
};

/// Extinction coefficient field (1/km) with scattering parameters.
struct ExtinctionField {
  GridSpec grid;
  std::vector<float> beta;  // x-fastest, size nx*ny*nz
  double albedo = 0.99;     // single-scattering albedo
  double phase_g = 0.85;    // Henyey-Greenstein asymmetry
  int64_t seed = 0;         // generator seed, carried for provenance

  void validate() const;
  float at(int i, int j, int k) const { return beta[static_cast<size_t>(grid.index(i, j, k))]; }
  float& at(int i, int j, int k) { return beta[static_cast<size_t>(grid.index(i, j, k))]; }

  /// Trilinear interpolation between voxel centers, clamped at the outermost
  /// centers; 0 outside the domain box.
  double sample(const Vec3& p) const;

  /// Fraction of voxels with beta > 0.
  double cloudy_fraction() const;
};

struct CloudGenParams {
  int n_blobs_min = 2, n_blobs_max = 4;
  double blob_scale_min = 0.12, blob_scale_max = 0.25;  // km, per-axis Gaussian sigma
  double beta_peak_min = 20.0, beta_peak_max = 100.0;   // 1/km
  double cloud_base_height = 0.2;                       // km above domain origin
  int64_t seed = 0;

  void validate() const;
};

/// Procedural cloud: sum of truncated anisotropic Gaussian blobs, smoothed,
/// clipped at 0, zeroed below cloud_base_height. Deterministic per seed.
ExtinctionField generate_cloud(const GridSpec& spec, const CloudGenParams& params);

/// Voxel centers in storage (x-fastest) order.
std::vector<Vec3> voxel_centers(const GridSpec& spec);

// Volume file: magic "CTVOL001", header, beta as little-endian float32 in
// x-fastest order. See docs/FORMATS.md.
void save_volume(const ExtinctionField& field, const std::string& path);
ExtinctionField load_volume(const std::string& path);

}  // namespace cloudtomo
