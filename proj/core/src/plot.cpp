// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal raster plots (binary PPM, P6). Enough for the sweep and scatter
// artifacts; no external plotting dependency.
#include <algorithm>
#include <cmath>
#include <fstream>

#include "cloudtomo/eval.hpp"
#include "cloudtomo/io.hpp"

namespace cloudtomo {

namespace {

struct Canvas {
  int w, h;
  std::vector<uint8_t> rgb;

  Canvas(int w_, int h_) : w(w_), h(h_), rgb(size_t(w_) * h_ * 3, 255) {}

  void put(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    size_t i = (size_t(y) * w + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) put(x, y, r, g, b);
  }

  void line(double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b) {
    int steps = std::max(2, int(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) * 2);
    for (int s = 0; s <= steps; ++s) {
      double t = double(s) / steps;
      put(int(std::lround(x0 + t * (x1 - x0))), int(std::lround(y0 + t * (y1 - y0))), r, g, b);
    }
  }

  void save_ppm(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write plot: " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb.data()), std::streamsize(rgb.size()));
    if (!os) throw IoError("write failed: " + path);
  }
};

struct Axes {
  int x0, y0, x1, y1;  // pixel box, y grows down
  double xmin, xmax, ymin, ymax;
  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0); }
  double py(double y) const { return y1 - (y - ymin) / (ymax - ymin) * (y1 - y0); }
};

void draw_frame(Canvas& c, const Axes& a) {
  c.line(a.x0, a.y1, a.x1, a.y1, 0, 0, 0);
  c.line(a.x0, a.y0, a.x0, a.y1, 0, 0, 0);
}

}  // namespace

void plot_sweep(const ZenithSweep& sweep, const std::string& path) {
  Canvas canvas(480, 320);
  double ymax = 0.1;
  for (size_t b = 0; b < sweep.counts.size(); ++b)
    if (sweep.counts[b] > 0) ymax = std::max(ymax, sweep.mean_eps[b] + sweep.std_eps[b]);
  Axes a{50, 20, 460, 290, 0.0, 50.0, 0.0, ymax * 1.1};
  // std band per populated bin
  for (size_t b = 0; b < sweep.counts.size(); ++b) {
    if (sweep.counts[b] == 0) continue;
    int px0 = int(a.px(sweep.bin_lo[b]));
    int px1 = int(a.px(sweep.bin_hi[b]));
    int plo = int(a.py(std::max(0.0, sweep.mean_eps[b] - sweep.std_eps[b])));
    int phi = int(a.py(sweep.mean_eps[b] + sweep.std_eps[b]));
    canvas.fill_rect(px0, phi, px1, plo, 200, 220, 250);
  }
  // mean curve across bin centers
  double prev_x = 0, prev_y = 0;
  bool have_prev = false;
  for (size_t b = 0; b < sweep.counts.size(); ++b) {
    if (sweep.counts[b] == 0) continue;
    double cx = a.px(0.5 * (sweep.bin_lo[b] + sweep.bin_hi[b]));
    double cy = a.py(sweep.mean_eps[b]);
    canvas.fill_rect(int(cx) - 2, int(cy) - 2, int(cx) + 2, int(cy) + 2, 30, 60, 180);
    if (have_prev) canvas.line(prev_x, prev_y, cx, cy, 30, 60, 180);
    prev_x = cx;
    prev_y = cy;
    have_prev = true;
  }
  draw_frame(canvas, a);
  canvas.save_ppm(path);
}

void plot_scatter(const std::vector<std::pair<double, double>>& pairs, const std::string& path) {
  Canvas canvas(400, 400);
  double vmax = 1.0;
  for (const auto& [t, p] : pairs) vmax = std::max({vmax, t, p});
  Axes a{50, 20, 380, 350, 0.0, vmax * 1.05, 0.0, vmax * 1.05};
  for (const auto& [t, p] : pairs)
    canvas.put(int(std::lround(a.px(t))), int(std::lround(a.py(p))), 40, 40, 160);
  // identity line (optimal recovery)
  canvas.line(a.px(0), a.py(0), a.px(vmax), a.py(vmax), 200, 40, 40);
  draw_frame(canvas, a);
  canvas.save_ppm(path);
}

}  // namespace cloudtomo
