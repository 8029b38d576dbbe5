// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "cloudtomo/common.hpp"
#include "cloudtomo/rng.hpp"

namespace cloudtomo::nn {

// Activations are stored one column per sample. All math is double precision
// so analytic gradients can be checked against central finite differences.

struct Linear {
  Mat W;   // out x in
  Vec b;   // out
  Mat gW;
  Vec gb;

  Linear() = default;
  Linear(int out, int in) : W(out, in), b(Vec::Zero(out)), gW(Mat::Zero(out, in)), gb(Vec::Zero(out)) {}

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }

  // Each column is computed as an independent matrix-vector product so a
  // sample's output is bit-identical no matter how the batch is partitioned.
  Mat forward(const Mat& x) const {
    Mat y(W.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) y.col(c).noalias() = W * x.col(c) + b;
    return y;
  }
  // Accumulates gW/gb from (grad_out, cached input); returns grad wrt input.
  Mat backward(const Mat& grad_out, const Mat& x_cached) {
    gW.noalias() += grad_out * x_cached.transpose();
    gb.noalias() += grad_out.rowwise().sum();
    return W.transpose() * grad_out;
  }
  void init(Rng& rng);
  void zero_grad() {
    gW.setZero();
    gb.setZero();
  }
};

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }
inline Mat relu_backward(const Mat& grad, const Mat& pre) {
  return (pre.array() > 0.0).select(grad, Mat::Zero(grad.rows(), grad.cols()));
}

/// Fully connected stack. ReLU between layers; `relu_last` adds one after the
/// final layer as well (the sun encoder uses this).
struct Mlp {
  std::vector<Linear> layers;
  bool relu_last = false;

  Mlp() = default;
  Mlp(const std::vector<int>& widths, bool relu_after_last = false);

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }

  struct Cache {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
  };

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  /// Accumulates parameter grads; returns grad wrt the input.
  Mat backward(const Mat& grad_out, const Cache& cache);
  void init(Rng& rng);
  void zero_grad();
};

/// 3x3-style conv layer over a single image stored as (Cin, H*W); im2col +
/// GEMM. Padding preserves H/stride rounding: Hout = (H + 2*pad - k)/stride + 1.
struct Conv2d {
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
  Mat W;  // cout x (cin*k*k)
  Vec b;
  Mat gW;
  Vec gb;

  Conv2d() = default;
  Conv2d(int cin_, int cout_, int k_, int stride_, int pad_);

  int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad - k) / stride + 1; }

  Mat im2col(const Mat& x, int h, int w) const;
  Mat forward(const Mat& x, int h, int w, Mat* col_cache = nullptr) const;
  /// grad_out: (cout, Hout*Wout). Returns grad wrt input (cin, H*W).
  Mat backward(const Mat& grad_out, const Mat& col_cached, int h, int w);
  void init(Rng& rng);
  void zero_grad();
};

/// Shared-weight per-view convolutional stack, ReLU between stages, linear
/// final stage.
struct ConvNet {
  std::vector<Conv2d> layers;

  ConvNet() = default;
  ConvNet(int in_channels, const std::vector<int>& channels, const std::vector<int>& strides);

  int scale_denominator() const;  // product of strides
  int out_channels() const { return layers.empty() ? 0 : layers.back().cout; }

  struct Cache {
    std::vector<Mat> inputs;
    std::vector<Mat> cols;
    std::vector<Mat> pre;
    std::vector<std::pair<int, int>> dims;  // input (h, w) per layer
  };

  Mat forward(const Mat& x, int h, int w, Cache* cache = nullptr) const;
  Mat backward(const Mat& grad_out, const Cache& cache);
  void init(Rng& rng);
  void zero_grad();
};

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
inline double softplus_grad(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Applies fn(param_data, grad_data, count) over every tensor of the block.
using TensorVisitor = std::function<void(double*, double*, int64_t)>;
void visit_tensors(Linear& l, const TensorVisitor& fn);
void visit_tensors(Mlp& m, const TensorVisitor& fn);
void visit_tensors(Conv2d& c, const TensorVisitor& fn);
void visit_tensors(ConvNet& n, const TensorVisitor& fn);

int64_t param_count(Mlp& m);
int64_t param_count(ConvNet& n);

/// Adam with decoupled weight decay over one parameter block.
struct AdamW {
  double lr = 1e-5, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-5;
  Vec m, v;
  int64_t t = 0;

  void ensure_size(int64_t n) {
    if (m.size() != n) {
      m = Vec::Zero(n);
      v = Vec::Zero(n);
      t = 0;
    }
  }
  /// One update over the concatenation of the block's tensors.
  template <typename Block>
  void step(Block& block) {
    int64_t n = 0;
    visit_tensors(block, [&](double*, double*, int64_t c) { n += c; });
    ensure_size(n);
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    int64_t off = 0;
    visit_tensors(block, [&](double* p, double* g, int64_t c) {
      for (int64_t i = 0; i < c; ++i) {
        double& mi = m[off + i];
        double& vi = v[off + i];
        mi = beta1 * mi + (1.0 - beta1) * g[i];
        vi = beta2 * vi + (1.0 - beta2) * g[i] * g[i];
        double mhat = mi / bc1, vhat = vi / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
      }
      off += c;
    });
  }
};

// Tensor (de)serialization used by checkpoints.
void write_mat(std::ostream& os, const Mat& m);
Mat read_mat(std::istream& is, const char* what);
void write_vec(std::ostream& os, const Vec& v);
Vec read_vec(std::istream& is, const char* what);

}  // namespace cloudtomo::nn
