// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/model.hpp"

#include <cmath>
#include <sstream>

#include "cloudtomo/io.hpp"

namespace cloudtomo {

void ModelConfig::validate() const {
  if (n_cam < 1) throw ConfigError("n_cam must be >= 1");
  if (conv_channels.empty() || conv_channels.size() != conv_strides.size())
    throw ConfigError("conv_channels/conv_strides must be nonempty, equal length");
  if (conv_channels.back() != feature_channels)
    throw ConfigError("feature_channels must equal the last conv stage width");
  for (int c : conv_channels)
    if (c < 1) throw ConfigError("conv widths must be >= 1");
  if (encoder_width < 1 || encoder_depth < 1) throw ConfigError("encoder dims must be >= 1");
  if (sun_encoder_depth != 5) throw ConfigError("sun encoder depth is fixed at 5");
  for (int w : decoder_hidden)
    if (w < 1) throw ConfigError("decoder widths must be >= 1");
  if (cam_position_scale <= 0) throw ConfigError("cam_position_scale must be > 0");
  if (output_scale <= 0) throw ConfigError("output_scale must be > 0");
}

uint64_t ModelConfig::hash() const {
  std::ostringstream os;
  os << n_cam << '|' << feature_channels << '|';
  for (int c : conv_channels) os << c << ',';
  os << '|';
  for (int s : conv_strides) os << s << ',';
  os << '|' << encoder_width << '|' << encoder_depth << '|' << sun_encoder_depth << '|';
  for (int w : decoder_hidden) os << w << ',';
  os << '|' << cam_position_scale << '|' << output_scale;
  return fnv1a64(os.str());
}

ModelParams ModelParams::create(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ModelParams p;
  p.extractor = nn::ConvNet(1, config.conv_channels, config.conv_strides);
  std::vector<int> enc_widths{3};
  for (int i = 0; i < config.encoder_depth; ++i) enc_widths.push_back(config.encoder_width);
  p.domain_enc = nn::Mlp(enc_widths);
  p.cam_enc = nn::Mlp(enc_widths);
  std::vector<int> sun_widths{2};
  for (int i = 0; i < config.sun_encoder_depth; ++i) sun_widths.push_back(config.encoder_width);
  p.sun_enc = nn::Mlp(sun_widths, /*relu_after_last=*/true);
  std::vector<int> dec_widths{config.decoder_input_dim()};
  for (int w : config.decoder_hidden) dec_widths.push_back(w);
  dec_widths.push_back(1);
  p.decoder = nn::Mlp(dec_widths);

  Rng r_ext(derive_seed(seed, "init/extractor"));
  p.extractor.init(r_ext);
  Rng r_dom(derive_seed(seed, "init/domain_enc"));
  p.domain_enc.init(r_dom);
  Rng r_cam(derive_seed(seed, "init/cam_enc"));
  p.cam_enc.init(r_cam);
  Rng r_sun(derive_seed(seed, "init/sun_enc"));
  p.sun_enc.init(r_sun);
  // The sun encoder stays frozen through stage 1 and only activates in
  // stage 2. A small final layer keeps g_sun near zero at that hand-off, so
  // stage 2 starts close to the stage-1 function instead of jumping to a
  // random sun perturbation it first has to unlearn.
  p.sun_enc.layers.back().W *= 0.1;
  Rng r_dec(derive_seed(seed, "init/decoder"));
  p.decoder.init(r_dec);
  return p;
}

void ModelParams::zero_grad() {
  extractor.zero_grad();
  domain_enc.zero_grad();
  cam_enc.zero_grad();
  sun_enc.zero_grad();
  decoder.zero_grad();
}

void ModelParams::visit_block(Block b, const nn::TensorVisitor& fn) {
  switch (b) {
    case Block::Extractor: nn::visit_tensors(extractor, fn); break;
    case Block::DomainEnc: nn::visit_tensors(domain_enc, fn); break;
    case Block::CamEnc: nn::visit_tensors(cam_enc, fn); break;
    case Block::SunEnc: nn::visit_tensors(sun_enc, fn); break;
    case Block::Decoder: nn::visit_tensors(decoder, fn); break;
  }
}

FeatureMaps extract_features(const MultiviewImages& images, const ModelParams& params,
                             const ModelConfig& config, std::vector<nn::ConvNet::Cache>* caches) {
  if (images.n_cam != config.n_cam) throw ValidationError("image view count != config n_cam");
  FeatureMaps fm;
  fm.n_cam = images.n_cam;
  fm.channels = config.feature_channels;
  fm.scale_denominator = params.extractor.scale_denominator();
  fm.height = images.height;
  fm.width = images.width;
  for (const auto& l : params.extractor.layers) {
    fm.height = l.out_h(fm.height);
    fm.width = l.out_w(fm.width);
  }
  fm.maps.resize(static_cast<size_t>(fm.n_cam));
  if (caches) caches->assign(static_cast<size_t>(fm.n_cam), {});
  for (int c = 0; c < fm.n_cam; ++c) {
    Mat x(1, images.pixels_per_view());
    for (size_t p = 0; p < images.pixels_per_view(); ++p)
      x(0, static_cast<int64_t>(p)) = images.data[size_t(c) * images.pixels_per_view() + p];
    fm.maps[size_t(c)] = params.extractor.forward(x, images.height, images.width,
                                                  caches ? &(*caches)[size_t(c)] : nullptr);
  }
  return fm;
}

SampleTap feature_tap(const FeatureMaps& maps, const PixelCoord& pc) {
  SampleTap tap;
  if (!pc.valid) return tap;
  double d = double(maps.scale_denominator);
  // Feature node o sits at image coordinate (o + 0.5) * d.
  double fu = pc.u / d - 0.5;
  double fv = pc.v / d - 0.5;
  fu = std::clamp(fu, 0.0, double(maps.width - 1));
  fv = std::clamp(fv, 0.0, double(maps.height - 1));
  int u0 = std::min(int(fu), maps.width - 1), u1 = std::min(u0 + 1, maps.width - 1);
  int v0 = std::min(int(fv), maps.height - 1), v1 = std::min(v0 + 1, maps.height - 1);
  double tu = fu - u0, tv = fv - v0;
  tap.idx[0] = v0 * maps.width + u0;
  tap.idx[1] = v0 * maps.width + u1;
  tap.idx[2] = v1 * maps.width + u0;
  tap.idx[3] = v1 * maps.width + u1;
  tap.w[0] = (1 - tu) * (1 - tv);
  tap.w[1] = tu * (1 - tv);
  tap.w[2] = (1 - tu) * tv;
  tap.w[3] = tu * tv;
  tap.valid = true;
  return tap;
}

Vec sample_features(const FeatureMaps& maps, const std::vector<PixelCoord>& pixels) {
  if (pixels.size() != static_cast<size_t>(maps.n_cam))
    throw ValidationError("one pixel coordinate per view is required");
  int c_dim = maps.channels;
  Vec out = Vec::Zero(int64_t(maps.n_cam) * (c_dim + 1));
  for (int c = 0; c < maps.n_cam; ++c) {
    SampleTap tap = feature_tap(maps, pixels[size_t(c)]);
    int64_t off = int64_t(c) * (c_dim + 1);
    if (!tap.valid) continue;
    for (int t = 0; t < 4; ++t)
      out.segment(off, c_dim) += tap.w[t] * maps.maps[size_t(c)].col(tap.idx[t]);
    out[off + c_dim] = 1.0;
  }
  return out;
}

Vec3 normalize_domain_point(const GridSpec& grid, const Vec3& X) {
  Vec3 ext = grid.extent();
  return {2.0 * (X.x() - grid.origin.x()) / ext.x() - 1.0,
          2.0 * (X.y() - grid.origin.y()) / ext.y() - 1.0,
          2.0 * (X.z() - grid.origin.z()) / ext.z() - 1.0};
}

Vec encode_domain(const ModelParams& params, const GridSpec& grid, const Vec3& X) {
  Mat x(3, 1);
  x.col(0) = normalize_domain_point(grid, X);
  return params.domain_enc.forward(x).col(0);
}

Vec encode_cam(const ModelParams& params, const ModelConfig& config, const Vec3& X_c) {
  Mat x(3, 1);
  x.col(0) = X_c * config.cam_position_scale;
  return params.cam_enc.forward(x).col(0);
}

Vec encode_sun(const ModelParams& params, const Vec2& sun_input, SunMode mode) {
  if (mode == SunMode::Zeroed) return Vec::Zero(params.sun_enc.out_dim());
  Mat x(2, 1);
  x.col(0) = sun_input;
  return params.sun_enc.forward(x).col(0);
}

Vec model_forward_with_features(const ModelParams& params, const ModelConfig& config,
                                const SceneInput& scene, const FeatureMaps& features,
                                const std::vector<Vec3>& queries, SunMode mode,
                                ForwardTrace* trace) {
  config.validate();
  if (!scene.cameras || scene.cameras->size() != static_cast<size_t>(config.n_cam))
    throw ValidationError("camera count != config n_cam");
  const int B = static_cast<int>(queries.size());
  const int C = config.feature_channels;
  const int W = config.encoder_width;
  const int block = C + 1 + W;

  // Per-camera geometry encodings, shared across queries.
  Mat cam_in(3, config.n_cam);
  for (int c = 0; c < config.n_cam; ++c)
    cam_in.col(c) = (*scene.cameras)[size_t(c)].position * config.cam_position_scale;
  nn::Mlp::Cache cam_cache;
  Mat g_cam = params.cam_enc.forward(cam_in, trace ? &cam_cache : nullptr);

  Vec g_sun;
  nn::Mlp::Cache sun_cache;
  if (mode == SunMode::Active) {
    Mat sun_in(2, 1);
    sun_in.col(0) = scene.sun_input;
    g_sun = params.sun_enc.forward(sun_in, trace ? &sun_cache : nullptr).col(0);
  } else {
    g_sun = Vec::Zero(W);
  }

  Mat dom_in(3, B);
  for (int b = 0; b < B; ++b) dom_in.col(b) = normalize_domain_point(scene.grid, queries[size_t(b)]);
  nn::Mlp::Cache dom_cache;
  Mat g_dom = params.domain_enc.forward(dom_in, trace ? &dom_cache : nullptr);

  Mat dec_in = Mat::Zero(config.decoder_input_dim(), B);
  std::vector<std::vector<SampleTap>> taps(static_cast<size_t>(B),
                                           std::vector<SampleTap>(static_cast<size_t>(config.n_cam)));
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < config.n_cam; ++c) {
      PixelCoord pc = project((*scene.cameras)[size_t(c)], queries[size_t(b)]);
      SampleTap tap = feature_tap(features, pc);
      taps[size_t(b)][size_t(c)] = tap;
      int64_t off = int64_t(c) * block;
      if (tap.valid) {
        for (int t = 0; t < 4; ++t)
          dec_in.col(b).segment(off, C) += tap.w[t] * features.maps[size_t(c)].col(tap.idx[t]);
        dec_in(off + C, b) = 1.0;
      }
      dec_in.col(b).segment(off + C + 1, W) = g_cam.col(c);
    }
    dec_in.col(b).segment(int64_t(config.n_cam) * block, W) = g_dom.col(b);
    dec_in.col(b).segment(int64_t(config.n_cam) * block + W, W) = g_sun;
  }

  nn::Mlp::Cache dec_cache;
  Mat z = params.decoder.forward(dec_in, trace ? &dec_cache : nullptr);
  Vec beta_hat(B);
  for (int b = 0; b < B; ++b) beta_hat[b] = config.output_scale * nn::softplus(z(0, b));

  if (trace) {
    trace->z = z.row(0).transpose();
    trace->decoder_input = std::move(dec_in);
    trace->decoder_cache = std::move(dec_cache);
    trace->domain_cache = std::move(dom_cache);
    trace->cam_cache = std::move(cam_cache);
    trace->sun_cache = std::move(sun_cache);
    trace->taps = std::move(taps);
    trace->g_cam = std::move(g_cam);
    trace->g_sun = std::move(g_sun);
    trace->mode = mode;
  }
  return beta_hat;
}

Vec model_forward(const ModelParams& params, const ModelConfig& config, const SceneInput& scene,
                  const std::vector<Vec3>& queries, SunMode mode, ForwardTrace* trace) {
  if (!scene.images) throw ValidationError("scene images missing");
  bool want_conv_grads = trace && params.is_trainable(Block::Extractor);
  std::vector<nn::ConvNet::Cache> conv_caches;
  FeatureMaps features =
      extract_features(*scene.images, params, config, want_conv_grads ? &conv_caches : nullptr);
  Vec beta_hat = model_forward_with_features(params, config, scene, features, queries, mode, trace);
  if (trace) {
    trace->features = std::move(features);
    trace->conv_caches = std::move(conv_caches);
    trace->extractor_grads = want_conv_grads;
  }
  return beta_hat;
}

void model_backward(ModelParams& params, const ModelConfig& config, const SceneInput& scene,
                    const std::vector<Vec3>& queries, const Vec& grad_beta_hat,
                    ForwardTrace& trace) {
  const int B = static_cast<int>(queries.size());
  if (grad_beta_hat.size() != B) throw ValidationError("gradient length != query count");
  const int C = config.feature_channels;
  const int W = config.encoder_width;
  const int block = C + 1 + W;

  Mat dz(1, B);
  for (int b = 0; b < B; ++b)
    dz(0, b) = grad_beta_hat[b] * config.output_scale * nn::softplus_grad(trace.z[b]);

  Mat g_in = params.decoder.backward(dz, trace.decoder_cache);

  // Image-feature path.
  if (trace.extractor_grads) {
    std::vector<Mat> fgrad(static_cast<size_t>(config.n_cam));
    for (int c = 0; c < config.n_cam; ++c)
      fgrad[size_t(c)] = Mat::Zero(C, trace.features.maps[size_t(c)].cols());
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < config.n_cam; ++c) {
        const SampleTap& tap = trace.taps[size_t(b)][size_t(c)];
        if (!tap.valid) continue;
        for (int t = 0; t < 4; ++t)
          fgrad[size_t(c)].col(tap.idx[t]) += tap.w[t] * g_in.col(b).segment(int64_t(c) * block, C);
      }
    for (int c = 0; c < config.n_cam; ++c)
      params.extractor.backward(fgrad[size_t(c)], trace.conv_caches[size_t(c)]);
  }

  Mat gcam = Mat::Zero(W, config.n_cam);
  for (int c = 0; c < config.n_cam; ++c)
    gcam.col(c) = g_in.middleRows(int64_t(c) * block + C + 1, W).rowwise().sum();
  params.cam_enc.backward(gcam, trace.cam_cache);

  Mat gdom = g_in.middleRows(int64_t(config.n_cam) * block, W);
  params.domain_enc.backward(gdom, trace.domain_cache);

  if (trace.mode == SunMode::Active) {
    Mat gsun = g_in.middleRows(int64_t(config.n_cam) * block + W, W).rowwise().sum();
    params.sun_enc.backward(gsun, trace.sun_cache);
  }
  (void)scene;
}

namespace {

static const char kCkptMagic[8] = {'C', 'T', 'C', 'K', 'P', '0', '0', '1'};

void write_mlp(std::ostream& os, const nn::Mlp& m) {
  io::write_pod<int32_t>(os, static_cast<int32_t>(m.layers.size()));
  io::write_pod<uint8_t>(os, m.relu_last ? 1 : 0);
  for (const auto& l : m.layers) {
    nn::write_mat(os, l.W);
    nn::write_vec(os, l.b);
  }
}

nn::Mlp read_mlp(std::istream& is) {
  nn::Mlp m;
  auto n = io::read_pod<int32_t>(is, "mlp header");
  m.relu_last = io::read_pod<uint8_t>(is, "mlp header") != 0;
  if (n < 1 || n > 64) throw IoError("implausible mlp depth");
  for (int32_t i = 0; i < n; ++i) {
    nn::Linear l;
    l.W = nn::read_mat(is, "mlp weights");
    l.b = nn::read_vec(is, "mlp bias");
    l.gW = Mat::Zero(l.W.rows(), l.W.cols());
    l.gb = Vec::Zero(l.b.size());
    m.layers.push_back(std::move(l));
  }
  return m;
}

void write_convnet(std::ostream& os, const nn::ConvNet& net) {
  io::write_pod<int32_t>(os, static_cast<int32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    io::write_pod<int32_t>(os, l.cin);
    io::write_pod<int32_t>(os, l.cout);
    io::write_pod<int32_t>(os, l.k);
    io::write_pod<int32_t>(os, l.stride);
    io::write_pod<int32_t>(os, l.pad);
    nn::write_mat(os, l.W);
    nn::write_vec(os, l.b);
  }
}

nn::ConvNet read_convnet(std::istream& is) {
  nn::ConvNet net;
  auto n = io::read_pod<int32_t>(is, "convnet header");
  if (n < 1 || n > 64) throw IoError("implausible convnet depth");
  for (int32_t i = 0; i < n; ++i) {
    nn::Conv2d l;
    l.cin = io::read_pod<int32_t>(is, "conv header");
    l.cout = io::read_pod<int32_t>(is, "conv header");
    l.k = io::read_pod<int32_t>(is, "conv header");
    l.stride = io::read_pod<int32_t>(is, "conv header");
    l.pad = io::read_pod<int32_t>(is, "conv header");
    l.W = nn::read_mat(is, "conv weights");
    l.b = nn::read_vec(is, "conv bias");
    l.gW = Mat::Zero(l.W.rows(), l.W.cols());
    l.gb = Vec::Zero(l.b.size());
    net.layers.push_back(std::move(l));
  }
  return net;
}

void write_int_vec(std::ostream& os, const std::vector<int>& v) {
  io::write_pod<int32_t>(os, static_cast<int32_t>(v.size()));
  for (int x : v) io::write_pod<int32_t>(os, x);
}

std::vector<int> read_int_vec(std::istream& is, const char* what) {
  auto n = io::read_pod<int32_t>(is, what);
  if (n < 0 || n > 1024) throw IoError("implausible vector length");
  std::vector<int> v(static_cast<size_t>(n));
  for (auto& x : v) x = io::read_pod<int32_t>(is, what);
  return v;
}

}  // namespace

void write_checkpoint_stream(const Checkpoint& ckpt, std::ostream& os) {
  io::write_magic(os, kCkptMagic);
  io::write_pod<int32_t>(os, 1);  // format version
  io::write_pod<int32_t>(os, ckpt.stage);
  io::write_pod<uint64_t>(os, ckpt.config_hash);
  io::write_pod<double>(os, ckpt.stats_mean);
  io::write_pod<double>(os, ckpt.stats_std);
  const ModelConfig& c = ckpt.config;
  io::write_pod<int32_t>(os, c.n_cam);
  io::write_pod<int32_t>(os, c.feature_channels);
  write_int_vec(os, c.conv_channels);
  write_int_vec(os, c.conv_strides);
  io::write_pod<int32_t>(os, c.encoder_width);
  io::write_pod<int32_t>(os, c.encoder_depth);
  io::write_pod<int32_t>(os, c.sun_encoder_depth);
  write_int_vec(os, c.decoder_hidden);
  io::write_pod<double>(os, c.cam_position_scale);
  io::write_pod<double>(os, c.output_scale);
  write_convnet(os, ckpt.params.extractor);
  write_mlp(os, ckpt.params.domain_enc);
  write_mlp(os, ckpt.params.cam_enc);
  write_mlp(os, ckpt.params.sun_enc);
  write_mlp(os, ckpt.params.decoder);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  auto os = io::open_out(path);
  write_checkpoint_stream(ckpt, os);
  if (!os) throw IoError("write failed: " + path);
}

Checkpoint read_checkpoint_stream(std::istream& is) {
  io::expect_magic(is, kCkptMagic, "checkpoint");
  auto version = io::read_pod<int32_t>(is, "checkpoint header");
  if (version != 1) throw IoError("unknown checkpoint version");
  Checkpoint ckpt;
  ckpt.stage = io::read_pod<int32_t>(is, "checkpoint header");
  ckpt.config_hash = io::read_pod<uint64_t>(is, "checkpoint header");
  ckpt.stats_mean = io::read_pod<double>(is, "checkpoint header");
  ckpt.stats_std = io::read_pod<double>(is, "checkpoint header");
  ModelConfig& c = ckpt.config;
  c.n_cam = io::read_pod<int32_t>(is, "model config");
  c.feature_channels = io::read_pod<int32_t>(is, "model config");
  c.conv_channels = read_int_vec(is, "model config");
  c.conv_strides = read_int_vec(is, "model config");
  c.encoder_width = io::read_pod<int32_t>(is, "model config");
  c.encoder_depth = io::read_pod<int32_t>(is, "model config");
  c.sun_encoder_depth = io::read_pod<int32_t>(is, "model config");
  c.decoder_hidden = read_int_vec(is, "model config");
  c.cam_position_scale = io::read_pod<double>(is, "model config");
  c.output_scale = io::read_pod<double>(is, "model config");
  c.validate();
  ckpt.params.extractor = read_convnet(is);
  ckpt.params.domain_enc = read_mlp(is);
  ckpt.params.cam_enc = read_mlp(is);
  ckpt.params.sun_enc = read_mlp(is);
  ckpt.params.decoder = read_mlp(is);
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  auto is = io::open_in(path);
  return read_checkpoint_stream(is);
}

}  // namespace cloudtomo
