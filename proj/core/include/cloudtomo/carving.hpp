// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cloudtomo/renderer.hpp"

namespace cloudtomo {

/// Per-view boolean cloud silhouette.
struct CloudMask {
  int height = 0, width = 0;
  std::vector<uint8_t> data;  // row-major, 0/1

  bool at(int y, int x) const { return data[size_t(y) * width + x] != 0; }
  void set(int y, int x, bool v) { data[size_t(y) * width + x] = v ? 1 : 0; }
};

/// Visual-hull occupancy over the voxel grid.
struct Hull {
  GridSpec grid;
  std::vector<uint8_t> occupied;  // x-fastest, 0/1
  int dilation_voxels = 0;

  bool at(int i, int j, int k) const { return occupied[size_t(grid.index(i, j, k))] != 0; }
  int64_t count() const;
};

/// Pixel true iff radiance > threshold.
std::vector<CloudMask> make_masks(const MultiviewImages& images, double threshold);

/// Keeps a voxel iff every camera that sees its center finds the projection
/// inside the mask dilated by `dilation_voxels` pixels (Chebyshev). Voxels
/// invisible to all cameras are discarded.
Hull space_carve(const std::vector<CloudMask>& masks, const CameraArray& cameras,
                 const GridSpec& spec, int dilation_voxels);

/// Centers of occupied voxels in storage (x-fastest) order.
std::vector<Vec3> hull_query_points(const Hull& hull, const GridSpec& spec);

// Hull cache file: magic "CTHUL001", grid dims, bit-packed occupancy.
void save_hull(const Hull& hull, const std::string& path);
Hull load_hull(const std::string& path);

}  // namespace cloudtomo
