// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/volumes.hpp"

#include <algorithm>
#include <cmath>

#include "cloudtomo/io.hpp"
#include "cloudtomo/rng.hpp"

namespace cloudtomo {

void GridSpec::validate() const {
  if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("grid counts must be >= 1");
  if (dx <= 0 || dy <= 0 || dz <= 0) throw ConfigError("voxel edge lengths must be > 0");
}

void ExtinctionField::validate() const {
  grid.validate();
  if (beta.size() != static_cast<size_t>(grid.num_voxels()))
    throw ValidationError("beta array size does not match grid dims");
  for (float b : beta)
    if (!(b >= 0.0f) || !std::isfinite(b)) throw ValidationError("beta must be finite and >= 0");
  if (!(albedo >= 0.0 && albedo <= 1.0)) throw ValidationError("albedo must be in [0,1]");
  if (!(phase_g > -1.0 && phase_g < 1.0)) throw ValidationError("phase_g must be in (-1,1)");
}

double ExtinctionField::sample(const Vec3& p) const {
  if (!grid.contains(p)) return 0.0;
  // Continuous coordinates in units of voxels, relative to voxel centers.
  double fx = (p.x() - grid.origin.x()) / grid.dx - 0.5;
  double fy = (p.y() - grid.origin.y()) / grid.dy - 0.5;
  double fz = (p.z() - grid.origin.z()) / grid.dz - 0.5;
  fx = std::clamp(fx, 0.0, double(grid.nx - 1));
  fy = std::clamp(fy, 0.0, double(grid.ny - 1));
  fz = std::clamp(fz, 0.0, double(grid.nz - 1));
  int i0 = std::min(int(fx), grid.nx - 1), i1 = std::min(i0 + 1, grid.nx - 1);
  int j0 = std::min(int(fy), grid.ny - 1), j1 = std::min(j0 + 1, grid.ny - 1);
  int k0 = std::min(int(fz), grid.nz - 1), k1 = std::min(k0 + 1, grid.nz - 1);
  double tx = fx - i0, ty = fy - j0, tz = fz - k0;
  auto v = [&](int i, int j, int k) { return double(at(i, j, k)); };
  double c00 = v(i0, j0, k0) * (1 - tx) + v(i1, j0, k0) * tx;
  double c10 = v(i0, j1, k0) * (1 - tx) + v(i1, j1, k0) * tx;
  double c01 = v(i0, j0, k1) * (1 - tx) + v(i1, j0, k1) * tx;
  double c11 = v(i0, j1, k1) * (1 - tx) + v(i1, j1, k1) * tx;
  double c0 = c00 * (1 - ty) + c10 * ty;
  double c1 = c01 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

double ExtinctionField::cloudy_fraction() const {
  if (beta.empty()) return 0.0;
  size_t n = 0;
  for (float b : beta)
    if (b > 0.0f) ++n;
  return double(n) / double(beta.size());
}

void CloudGenParams::validate() const {
  if (n_blobs_min > n_blobs_max || n_blobs_min < 0) throw ConfigError("empty n_blobs range");
  if (blob_scale_min > blob_scale_max || blob_scale_min <= 0)
    throw ConfigError("invalid blob_scale range");
  if (beta_peak_min > beta_peak_max || beta_peak_min < 0)
    throw ConfigError("beta_peak range must be nonempty and nonnegative");
}

namespace {

// Separable 3-tap smoothing [1/4, 1/2, 1/4] along one axis, edges clamped.
void smooth_axis(std::vector<float>& data, const GridSpec& g, int axis) {
  std::vector<float> out(data.size());
  int n[3] = {g.nx, g.ny, g.nz};
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        int idx[3] = {i, j, k};
        int lo[3] = {i, j, k}, hi[3] = {i, j, k};
        lo[axis] = std::max(idx[axis] - 1, 0);
        hi[axis] = std::min(idx[axis] + 1, n[axis] - 1);
        float c = data[size_t(g.index(i, j, k))];
        float l = data[size_t(g.index(lo[0], lo[1], lo[2]))];
        float h = data[size_t(g.index(hi[0], hi[1], hi[2]))];
        out[size_t(g.index(i, j, k))] = 0.25f * l + 0.5f * c + 0.25f * h;
      }
  data.swap(out);
}

}  // namespace

ExtinctionField generate_cloud(const GridSpec& spec, const CloudGenParams& params) {
  spec.validate();
  params.validate();
  Rng rng(static_cast<uint64_t>(params.seed));

  struct Blob {
    Vec3 center;
    Vec3 sigma;
    double amp;
  };
  int n_blobs = static_cast<int>(rng.uniform_int(params.n_blobs_min, params.n_blobs_max));
  Vec3 ext = spec.extent();
  double z_lo = spec.origin.z() + params.cloud_base_height;
  double z_hi = spec.origin.z() + 0.85 * ext.z();
  if (z_lo > z_hi) z_lo = z_hi;
  std::vector<Blob> blobs;
  blobs.reserve(static_cast<size_t>(n_blobs));
  for (int b = 0; b < n_blobs; ++b) {
    Blob blob;
    blob.center.x() = spec.origin.x() + rng.uniform(0.15, 0.85) * ext.x();
    blob.center.y() = spec.origin.y() + rng.uniform(0.15, 0.85) * ext.y();
    blob.center.z() = rng.uniform(z_lo, z_hi);
    for (int a = 0; a < 3; ++a)
      blob.sigma[a] = rng.uniform(params.blob_scale_min, params.blob_scale_max);
    blob.amp = rng.uniform(params.beta_peak_min, params.beta_peak_max);
    blobs.push_back(blob);
  }

  ExtinctionField field;
  field.grid = spec;
  field.seed = params.seed;
  field.beta.assign(static_cast<size_t>(spec.num_voxels()), 0.0f);

  // Blobs are truncated at 2 sigma so fields have compact support.
  constexpr double kCutoff = 2.0;
  const double floor_val = std::exp(-0.5 * kCutoff * kCutoff);
  for (int k = 0; k < spec.nz; ++k)
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i) {
        Vec3 p = spec.voxel_center(i, j, k);
        double val = 0.0;
        for (const Blob& b : blobs) {
          double q = 0.0;
          for (int a = 0; a < 3; ++a) {
            double d = (p[a] - b.center[a]) / b.sigma[a];
            q += d * d;
          }
          if (q < kCutoff * kCutoff) val += b.amp * (std::exp(-0.5 * q) - floor_val);
        }
        field.at(i, j, k) = static_cast<float>(std::max(val, 0.0));
      }

  for (int axis = 0; axis < 3; ++axis) smooth_axis(field.beta, spec, axis);

  for (int k = 0; k < spec.nz; ++k) {
    double zc = spec.origin.z() + (k + 0.5) * spec.dz;
    if (zc >= spec.origin.z() + params.cloud_base_height) continue;
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i) field.at(i, j, k) = 0.0f;
  }
  return field;
}

std::vector<Vec3> voxel_centers(const GridSpec& spec) {
  spec.validate();
  std::vector<Vec3> pts;
  pts.reserve(static_cast<size_t>(spec.num_voxels()));
  for (int k = 0; k < spec.nz; ++k)
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i) pts.push_back(spec.voxel_center(i, j, k));
  return pts;
}

static const char kVolMagic[8] = {'C', 'T', 'V', 'O', 'L', '0', '0', '1'};

void save_volume(const ExtinctionField& field, const std::string& path) {
  field.validate();
  auto os = io::open_out(path);
  io::write_magic(os, kVolMagic);
  io::write_pod<int32_t>(os, field.grid.nx);
  io::write_pod<int32_t>(os, field.grid.ny);
  io::write_pod<int32_t>(os, field.grid.nz);
  io::write_pod<double>(os, field.grid.dx);
  io::write_pod<double>(os, field.grid.dy);
  io::write_pod<double>(os, field.grid.dz);
  for (int a = 0; a < 3; ++a) io::write_pod<double>(os, field.grid.origin[a]);
  io::write_pod<double>(os, field.albedo);
  io::write_pod<double>(os, field.phase_g);
  io::write_pod<int64_t>(os, field.seed);
  io::write_array(os, field.beta.data(), field.beta.size());
  if (!os) throw IoError("write failed: " + path);
}

ExtinctionField load_volume(const std::string& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kVolMagic, "volume file");
  ExtinctionField field;
  field.grid.nx = io::read_pod<int32_t>(is, "volume header");
  field.grid.ny = io::read_pod<int32_t>(is, "volume header");
  field.grid.nz = io::read_pod<int32_t>(is, "volume header");
  field.grid.dx = io::read_pod<double>(is, "volume header");
  field.grid.dy = io::read_pod<double>(is, "volume header");
  field.grid.dz = io::read_pod<double>(is, "volume header");
  for (int a = 0; a < 3; ++a) field.grid.origin[a] = io::read_pod<double>(is, "volume header");
  field.albedo = io::read_pod<double>(is, "volume header");
  field.phase_g = io::read_pod<double>(is, "volume header");
  field.seed = io::read_pod<int64_t>(is, "volume header");
  field.grid.validate();
  if (field.grid.num_voxels() > (int64_t(1) << 30)) throw IoError("implausible grid size");
  field.beta.resize(static_cast<size_t>(field.grid.num_voxels()));
  io::read_array(is, field.beta.data(), field.beta.size(), "beta array");
  field.validate();
  return field;
}

}  // namespace cloudtomo
