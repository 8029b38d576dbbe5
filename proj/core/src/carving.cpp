// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/carving.hpp"

#include <algorithm>
#include <cmath>

#include "cloudtomo/io.hpp"

namespace cloudtomo {

int64_t Hull::count() const {
  int64_t n = 0;
  for (uint8_t v : occupied) n += v;
  return n;
}

std::vector<CloudMask> make_masks(const MultiviewImages& images, double threshold) {
  std::vector<CloudMask> masks(static_cast<size_t>(images.n_cam));
  for (int c = 0; c < images.n_cam; ++c) {
    CloudMask& m = masks[size_t(c)];
    m.height = images.height;
    m.width = images.width;
    m.data.assign(images.pixels_per_view(), 0);
    for (int y = 0; y < images.height; ++y)
      for (int x = 0; x < images.width; ++x)
        m.set(y, x, images.at(c, y, x) > threshold);
  }
  return masks;
}

namespace {

CloudMask dilate(const CloudMask& m, int r) {
  if (r <= 0) return m;
  CloudMask out = m;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool v = false;
      for (int dy = -r; dy <= r && !v; ++dy)
        for (int dx = -r; dx <= r && !v; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < m.height && xx >= 0 && xx < m.width && m.at(yy, xx)) v = true;
        }
      out.set(y, x, v);
    }
  return out;
}

}  // namespace

Hull space_carve(const std::vector<CloudMask>& masks, const CameraArray& cameras,
                 const GridSpec& spec, int dilation_voxels) {
  if (cameras.size() == 0) throw ConfigError("space_carve needs at least one camera");
  if (masks.size() != cameras.size())
    throw ValidationError("mask count must equal camera count");
  spec.validate();

  std::vector<CloudMask> dilated;
  dilated.reserve(masks.size());
  for (const auto& m : masks) dilated.push_back(dilate(m, dilation_voxels));

  Hull hull;
  hull.grid = spec;
  hull.dilation_voxels = dilation_voxels;
  hull.occupied.assign(static_cast<size_t>(spec.num_voxels()), 0);

  parallel_for(spec.nz, [&](int k) {
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i) {
        Vec3 p = spec.voxel_center(i, j, k);
        bool seen = false, kept = true;
        for (size_t c = 0; c < cameras.size(); ++c) {
          PixelCoord pc = project(cameras[c], p);
          if (!pc.valid) continue;
          seen = true;
          int px = std::clamp(int(std::floor(pc.u)), 0, dilated[c].width - 1);
          int py = std::clamp(int(std::floor(pc.v)), 0, dilated[c].height - 1);
          if (!dilated[c].at(py, px)) {
            kept = false;
            break;
          }
        }
        hull.occupied[size_t(spec.index(i, j, k))] = (seen && kept) ? 1 : 0;
      }
  });
  return hull;
}

std::vector<Vec3> hull_query_points(const Hull& hull, const GridSpec& spec) {
  std::vector<Vec3> pts;
  for (int k = 0; k < spec.nz; ++k)
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i)
        if (hull.at(i, j, k)) pts.push_back(spec.voxel_center(i, j, k));
  return pts;
}

static const char kHullMagic[8] = {'C', 'T', 'H', 'U', 'L', '0', '0', '1'};

void save_hull(const Hull& hull, const std::string& path) {
  auto os = io::open_out(path);
  io::write_magic(os, kHullMagic);
  io::write_pod<int32_t>(os, hull.grid.nx);
  io::write_pod<int32_t>(os, hull.grid.ny);
  io::write_pod<int32_t>(os, hull.grid.nz);
  io::write_pod<int32_t>(os, hull.dilation_voxels);
  std::vector<uint8_t> packed((hull.occupied.size() + 7) / 8, 0);
  for (size_t n = 0; n < hull.occupied.size(); ++n)
    if (hull.occupied[n]) packed[n / 8] |= uint8_t(1u << (n % 8));
  io::write_array(os, packed.data(), packed.size());
  if (!os) throw IoError("write failed: " + path);
}

Hull load_hull(const std::string& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kHullMagic, "hull file");
  Hull hull;
  hull.grid.nx = io::read_pod<int32_t>(is, "hull header");
  hull.grid.ny = io::read_pod<int32_t>(is, "hull header");
  hull.grid.nz = io::read_pod<int32_t>(is, "hull header");
  hull.dilation_voxels = io::read_pod<int32_t>(is, "hull header");
  hull.grid.validate();
  size_t n = static_cast<size_t>(hull.grid.num_voxels());
  std::vector<uint8_t> packed((n + 7) / 8);
  io::read_array(is, packed.data(), packed.size(), "hull bits");
  hull.occupied.assign(n, 0);
  for (size_t b = 0; b < n; ++b)
    hull.occupied[b] = (packed[b / 8] >> (b % 8)) & 1u;
  return hull;
}

}  // namespace cloudtomo
