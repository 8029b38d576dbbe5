// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "cloudtomo/io.hpp"

namespace cloudtomo {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Ray / axis-aligned box intersection. Returns false on miss; otherwise
// [t0, t1] is the parameter interval inside the box.
bool intersect_box(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi,
                   double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
      continue;
    }
    double inv = 1.0 / dir[a];
    double ta = (lo[a] - origin[a]) * inv;
    double tb = (hi[a] - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}
}  // namespace

void RenderOptions::validate() const {
  if (step_km <= 0 || sun_step_km <= 0) throw ConfigError("ray-march steps must be > 0");
  if (irradiance < 0 || background < 0) throw ConfigError("irradiance/background must be >= 0");
}

RenderOptions RenderOptions::defaults_for(const GridSpec& grid) {
  RenderOptions opts;
  double edge = std::min({grid.dx, grid.dy, grid.dz});
  opts.step_km = edge * 0.5;
  opts.sun_step_km = edge;
  return opts;
}

void MultiviewImages::validate() const {
  if (n_cam < 0 || height < 0 || width < 0 ||
      data.size() != size_t(n_cam) * size_t(height) * size_t(width))
    throw ValidationError("image array size does not match header");
  for (float v : data)
    if (!std::isfinite(v) || v < 0.0f) throw ValidationError("image values must be finite, >= 0");
}

double transmittance(const ExtinctionField& field, const Vec3& X, const Vec3& direction,
                     const RenderOptions& opts) {
  opts.validate();
  if (std::abs(direction.norm() - 1.0) > 1e-9)
    throw ValidationError("transmittance direction must be a unit vector");
  if (!field.grid.contains(X)) return 1.0;
  double t0, t1;
  if (!intersect_box(X, direction, field.grid.origin, field.grid.max_corner(), t0, t1)) return 1.0;
  double len = t1;  // X inside the box, so t0 == 0
  int n = std::max(1, int(std::ceil(len / opts.sun_step_km)));
  double h = len / n;
  double tau = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec3 p = X + (i + 0.5) * h * direction;
    tau += field.sample(p) * h;
  }
  return std::exp(-tau);
}

double phase_hg(double cos_theta, double g) {
  double denom = 1.0 + g * g - 2.0 * g * cos_theta;
  return (1.0 - g * g) / (4.0 * kPi * std::pow(denom, 1.5));
}

std::vector<float> render_view(const ExtinctionField& field, const SunDirection& sun,
                               const CameraPose& camera, const RenderOptions& opts) {
  opts.validate();
  camera.validate();
  field.grid.validate();
  if (field.grid.contains(camera.position))
    throw ValidationError("camera inside the domain is unsupported");

  Vec3 sun_dir = sun_unit_vector(sun);
  Vec3 lo = field.grid.origin, hi = field.grid.max_corner();
  std::vector<float> img(size_t(camera.width) * camera.height, 0.0f);

  parallel_for(camera.height, [&](int py) {
    for (int px = 0; px < camera.width; ++px) {
      Vec3 dir = pixel_ray_direction(camera, px + 0.5, py + 0.5);
      double t0, t1;
      double radiance = 0.0;
      if (!intersect_box(camera.position, dir, lo, hi, t0, t1) || t1 <= t0) {
        radiance = opts.background;
      } else {
        double len = t1 - t0;
        int n = std::max(1, int(std::ceil(len / opts.step_km)));
        double h = len / n;
        double cos_theta = sun_dir.dot(dir);  // sun->photon->camera scattering angle
        double ph = phase_hg(cos_theta, field.phase_g);
        double tau_cam = 0.0;
        for (int i = 0; i < n; ++i) {
          Vec3 p = camera.position + (t0 + (i + 0.5) * h) * dir;
          double beta = field.sample(p);
          if (beta > 0.0) {
            double t_sun = transmittance(field, p, sun_dir, opts);
            double t_to_cam = std::exp(-(tau_cam + 0.5 * beta * h));
            radiance += opts.irradiance * field.albedo * beta * ph * t_sun * t_to_cam * h;
          }
          tau_cam += beta * h;
        }
        radiance += opts.background * std::exp(-tau_cam);
      }
      img[size_t(py) * camera.width + px] = static_cast<float>(radiance);
    }
  });
  return img;
}

MultiviewImages render_scene(const ExtinctionField& field, const SunDirection& sun,
                             const CameraArray& cameras, const RenderOptions& opts) {
  if (cameras.size() == 0) throw ConfigError("render_scene needs at least one camera");
  MultiviewImages out;
  out.n_cam = static_cast<int>(cameras.size());
  out.height = cameras[0].height;
  out.width = cameras[0].width;
  out.data.resize(size_t(out.n_cam) * out.pixels_per_view());
  for (int c = 0; c < out.n_cam; ++c) {
    const CameraPose& cam = cameras[size_t(c)];
    if (cam.width != out.width || cam.height != out.height)
      throw ValidationError("all cameras in a scene must share the image size");
    auto img = render_view(field, sun, cam, opts);
    std::copy(img.begin(), img.end(), out.data.begin() + size_t(c) * out.pixels_per_view());
  }
  return out;
}

static const char kImgMagic[8] = {'C', 'T', 'I', 'M', 'G', '0', '0', '1'};

void save_images(const MultiviewImages& images, const std::string& path) {
  images.validate();
  auto os = io::open_out(path);
  io::write_magic(os, kImgMagic);
  io::write_pod<int32_t>(os, images.n_cam);
  io::write_pod<int32_t>(os, images.height);
  io::write_pod<int32_t>(os, images.width);
  io::write_array(os, images.data.data(), images.data.size());
  if (!os) throw IoError("write failed: " + path);
}

MultiviewImages load_images(const std::string& path) {
  auto is = io::open_in(path);
  io::expect_magic(is, kImgMagic, "images file");
  MultiviewImages images;
  images.n_cam = io::read_pod<int32_t>(is, "images header");
  images.height = io::read_pod<int32_t>(is, "images header");
  images.width = io::read_pod<int32_t>(is, "images header");
  if (images.n_cam < 0 || images.height < 0 || images.width < 0 ||
      size_t(images.n_cam) * images.height * images.width > (1ULL << 30))
    throw IoError("implausible image dims");
  images.data.resize(size_t(images.n_cam) * images.height * images.width);
  io::read_array(is, images.data.data(), images.data.size(), "image data");
  images.validate();
  return images;
}

}  // namespace cloudtomo
