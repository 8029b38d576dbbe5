// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "cloudtomo/io.hpp"

namespace cloudtomo::nn {

void Linear::init(Rng& rng) {
  double bound = std::sqrt(6.0 / double(in_dim()));
  for (int j = 0; j < W.cols(); ++j)
    for (int i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
  b.setZero();
  zero_grad();
}

Mlp::Mlp(const std::vector<int>& widths, bool relu_after_last) : relu_last(relu_after_last) {
  if (widths.size() < 2) throw ConfigError("MLP needs at least input and output widths");
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] < 1 || widths[i + 1] < 1) throw ConfigError("MLP widths must be >= 1");
    layers.emplace_back(widths[i + 1], widths[i]);
  }
}

Mat Mlp::forward(const Mat& x, Cache* cache) const {
  if (x.rows() != in_dim()) throw ValidationError("MLP input width mismatch");
  Mat h = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    if (cache) cache->inputs.push_back(h);
    Mat pre = layers[l].forward(h);
    if (cache) cache->pre.push_back(pre);
    bool act = (l + 1 < layers.size()) || relu_last;
    h = act ? relu(pre) : std::move(pre);
  }
  return h;
}

Mat Mlp::backward(const Mat& grad_out, const Cache& cache) {
  Mat g = grad_out;
  for (size_t li = layers.size(); li-- > 0;) {
    bool act = (li + 1 < layers.size()) || relu_last;
    if (act) g = relu_backward(g, cache.pre[li]);
    g = layers[li].backward(g, cache.inputs[li]);
  }
  return g;
}

void Mlp::init(Rng& rng) {
  for (auto& l : layers) l.init(rng);
}
void Mlp::zero_grad() {
  for (auto& l : layers) l.zero_grad();
}

Conv2d::Conv2d(int cin_, int cout_, int k_, int stride_, int pad_)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_),
      W(cout_, cin_ * k_ * k_), b(Vec::Zero(cout_)),
      gW(Mat::Zero(cout_, cin_ * k_ * k_)), gb(Vec::Zero(cout_)) {}

Mat Conv2d::im2col(const Mat& x, int h, int w) const {
  int ho = out_h(h), wo = out_w(w);
  Mat col = Mat::Zero(int64_t(cin) * k * k, int64_t(ho) * wo);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int64_t oc = int64_t(oy) * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          int64_t pix = int64_t(iy) * w + ix;
          for (int c = 0; c < cin; ++c)
            col((int64_t(c) * k + ky) * k + kx, oc) = x(c, pix);
        }
      }
    }
  return col;
}

Mat Conv2d::forward(const Mat& x, int h, int w, Mat* col_cache) const {
  if (x.rows() != cin || x.cols() != int64_t(h) * w)
    throw ValidationError("conv input shape mismatch");
  Mat col = im2col(x, h, w);
  Mat y = (W * col).colwise() + b;
  if (col_cache) *col_cache = std::move(col);
  return y;
}

Mat Conv2d::backward(const Mat& grad_out, const Mat& col_cached, int h, int w) {
  gW.noalias() += grad_out * col_cached.transpose();
  gb.noalias() += grad_out.rowwise().sum();
  Mat gcol = W.transpose() * grad_out;
  // col2im scatter-add
  Mat gx = Mat::Zero(cin, int64_t(h) * w);
  int ho = out_h(h), wo = out_w(w);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int64_t oc = int64_t(oy) * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          int64_t pix = int64_t(iy) * w + ix;
          for (int c = 0; c < cin; ++c)
            gx(c, pix) += gcol((int64_t(c) * k + ky) * k + kx, oc);
        }
      }
    }
  return gx;
}

void Conv2d::init(Rng& rng) {
  double bound = std::sqrt(6.0 / double(cin * k * k));
  for (int j = 0; j < W.cols(); ++j)
    for (int i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
  b.setZero();
  zero_grad();
}
void Conv2d::zero_grad() {
  gW.setZero();
  gb.setZero();
}

ConvNet::ConvNet(int in_channels, const std::vector<int>& channels,
                 const std::vector<int>& strides) {
  if (channels.empty() || channels.size() != strides.size())
    throw ConfigError("conv channels/strides must be nonempty and equal length");
  int cin = in_channels;
  for (size_t i = 0; i < channels.size(); ++i) {
    layers.emplace_back(cin, channels[i], 3, strides[i], 1);
    cin = channels[i];
  }
}

int ConvNet::scale_denominator() const {
  int d = 1;
  for (const auto& l : layers) d *= l.stride;
  return d;
}

Mat ConvNet::forward(const Mat& x, int h, int w, Cache* cache) const {
  Mat cur = x;
  int ch = h, cw = w;
  for (size_t l = 0; l < layers.size(); ++l) {
    Mat col;
    if (cache) {
      cache->inputs.push_back(cur);
      cache->dims.emplace_back(ch, cw);
    }
    Mat pre = layers[l].forward(cur, ch, cw, cache ? &col : nullptr);
    if (cache) {
      cache->cols.push_back(std::move(col));
      cache->pre.push_back(pre);
    }
    bool act = l + 1 < layers.size();
    cur = act ? relu(pre) : std::move(pre);
    ch = layers[l].out_h(ch);
    cw = layers[l].out_w(cw);
  }
  return cur;
}

Mat ConvNet::backward(const Mat& grad_out, const Cache& cache) {
  Mat g = grad_out;
  for (size_t li = layers.size(); li-- > 0;) {
    if (li + 1 < layers.size()) g = relu_backward(g, cache.pre[li]);
    g = layers[li].backward(g, cache.cols[li], cache.dims[li].first, cache.dims[li].second);
  }
  return g;
}

void ConvNet::init(Rng& rng) {
  for (auto& l : layers) l.init(rng);
}
void ConvNet::zero_grad() {
  for (auto& l : layers) l.zero_grad();
}

void visit_tensors(Linear& l, const TensorVisitor& fn) {
  fn(l.W.data(), l.gW.data(), l.W.size());
  fn(l.b.data(), l.gb.data(), l.b.size());
}
void visit_tensors(Mlp& m, const TensorVisitor& fn) {
  for (auto& l : m.layers) visit_tensors(l, fn);
}
void visit_tensors(Conv2d& c, const TensorVisitor& fn) {
  fn(c.W.data(), c.gW.data(), c.W.size());
  fn(c.b.data(), c.gb.data(), c.b.size());
}
void visit_tensors(ConvNet& n, const TensorVisitor& fn) {
  for (auto& l : n.layers) visit_tensors(l, fn);
}

int64_t param_count(Mlp& m) {
  int64_t n = 0;
  visit_tensors(m, [&](double*, double*, int64_t c) { n += c; });
  return n;
}
int64_t param_count(ConvNet& net) {
  int64_t n = 0;
  visit_tensors(net, [&](double*, double*, int64_t c) { n += c; });
  return n;
}

void write_mat(std::ostream& os, const Mat& m) {
  io::write_pod<int64_t>(os, m.rows());
  io::write_pod<int64_t>(os, m.cols());
  io::write_array(os, m.data(), static_cast<size_t>(m.size()));
}
Mat read_mat(std::istream& is, const char* what) {
  auto r = io::read_pod<int64_t>(is, what);
  auto c = io::read_pod<int64_t>(is, what);
  if (r < 0 || c < 0 || r * c > (int64_t(1) << 28)) throw IoError("implausible tensor dims");
  Mat m(r, c);
  io::read_array(is, m.data(), static_cast<size_t>(m.size()), what);
  return m;
}
void write_vec(std::ostream& os, const Vec& v) {
  io::write_pod<int64_t>(os, v.size());
  io::write_array(os, v.data(), static_cast<size_t>(v.size()));
}
Vec read_vec(std::istream& is, const char* what) {
  auto n = io::read_pod<int64_t>(is, what);
  if (n < 0 || n > (int64_t(1) << 28)) throw IoError("implausible vector size");
  Vec v(n);
  io::read_array(is, v.data(), static_cast<size_t>(v.size()), what);
  return v;
}

}  // namespace cloudtomo::nn
