// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cloudtomo/carving.hpp"
#include "cloudtomo/geometry.hpp"
#include "cloudtomo/nn.hpp"
#include "cloudtomo/renderer.hpp"
#include "cloudtomo/volumes.hpp"

namespace cloudtomo {

struct ModelConfig {
  int n_cam = 10;
  int feature_channels = 64;                         // C, equals conv_channels.back()
  std::vector<int> conv_channels = {16, 32, 64, 64};
  std::vector<int> conv_strides = {2, 1, 1, 1};
  int encoder_width = 64;   // width of g^domain, g^cam, g^sun
  int encoder_depth = 3;    // FC layers in the domain/camera encoders
  int sun_encoder_depth = 5;  // fixed by the architecture
  std::vector<int> decoder_hidden = {256, 128, 64};
  double cam_position_scale = 1e-3;  // km -> encoder input units
  double output_scale = 1.0;         // beta_hat = output_scale * softplus(z)

  void validate() const;
  /// Per-view block is [features | validity | g^cam]; blocks concatenate in
  /// camera order, then g^domain and g^sun.
  int decoder_input_dim() const {
    return n_cam * (feature_channels + 1 + encoder_width) + 2 * encoder_width;
  }
  uint64_t hash() const;
};

enum class Block { Extractor = 0, DomainEnc = 1, CamEnc = 2, SunEnc = 3, Decoder = 4 };
inline const char* block_name(Block b) {
  switch (b) {
    case Block::Extractor: return "extractor";
    case Block::DomainEnc: return "domain_enc";
    case Block::CamEnc: return "cam_enc";
    case Block::SunEnc: return "sun_enc";
    case Block::Decoder: return "decoder";
  }
  return "?";
}
constexpr std::array<Block, 5> kAllBlocks = {Block::Extractor, Block::DomainEnc, Block::CamEnc,
                                             Block::SunEnc, Block::Decoder};

struct ModelParams {
  nn::ConvNet extractor;
  nn::Mlp domain_enc, cam_enc, sun_enc, decoder;
  std::array<bool, 5> trainable = {true, true, true, true, true};

  static ModelParams create(const ModelConfig& config, uint64_t seed);
  void zero_grad();
  void visit_block(Block b, const nn::TensorVisitor& fn);
  bool is_trainable(Block b) const { return trainable[static_cast<size_t>(b)]; }
  void set_trainable(Block b, bool v) { trainable[static_cast<size_t>(b)] = v; }
};

/// Per-view feature grids produced by the shared extractor.
struct FeatureMaps {
  int n_cam = 0, channels = 0, height = 0, width = 0;
  int scale_denominator = 1;  // image px per feature px
  std::vector<Mat> maps;      // per view: (channels, height*width), row-major pixels
};

/// g^sun == 0 during stage-1 training and for stage-1 checkpoints.
enum class SunMode { Zeroed, Active };

struct SceneInput {
  const MultiviewImages* images = nullptr;  // normalized
  const CameraArray* cameras = nullptr;
  Vec2 sun_input = Vec2::Zero();            // from encode_sun_input
  GridSpec grid;
};

FeatureMaps extract_features(const MultiviewImages& images, const ModelParams& params,
                             const ModelConfig& config,
                             std::vector<nn::ConvNet::Cache>* caches = nullptr);

/// Bilinear feature sample at image-space pixel coordinates (pixel centers at
/// half-integers). Invalid projections give a zero feature block with the
/// validity flag off. Output: (channels+1) x n_cam stacked per view.
struct SampleTap {
  int idx[4] = {0, 0, 0, 0};
  double w[4] = {0, 0, 0, 0};
  bool valid = false;
};
SampleTap feature_tap(const FeatureMaps& maps, const PixelCoord& pc);
Vec sample_features(const FeatureMaps& maps, const std::vector<PixelCoord>& pixels);

/// Affine map of domain coordinates to [-1,1]^3.
Vec3 normalize_domain_point(const GridSpec& grid, const Vec3& X);

Vec encode_domain(const ModelParams& params, const GridSpec& grid, const Vec3& X);
Vec encode_cam(const ModelParams& params, const ModelConfig& config, const Vec3& X_c);
Vec encode_sun(const ModelParams& params, const Vec2& sun_input, SunMode mode);

// Caches retained by the forward pass so backward can run without recompute.
struct ForwardTrace {
  Vec z;  // decoder pre-activation, one per query
  Mat decoder_input;
  nn::Mlp::Cache decoder_cache, domain_cache, cam_cache, sun_cache;
  std::vector<nn::ConvNet::Cache> conv_caches;  // per view, only when extractor grads are needed
  FeatureMaps features;
  std::vector<std::vector<SampleTap>> taps;  // [query][view]
  Mat g_cam;                                 // encoder_width x n_cam
  Vec g_sun;
  SunMode mode = SunMode::Zeroed;
  bool extractor_grads = false;
};

/// Full composition: extract -> project -> sample -> encode -> decode.
/// Returns beta_hat >= 0 per query.
Vec model_forward(const ModelParams& params, const ModelConfig& config, const SceneInput& scene,
                  const std::vector<Vec3>& queries, SunMode mode, ForwardTrace* trace = nullptr);

/// Same composition when features were already extracted (extractor frozen).
Vec model_forward_with_features(const ModelParams& params, const ModelConfig& config,
                                const SceneInput& scene, const FeatureMaps& features,
                                const std::vector<Vec3>& queries, SunMode mode,
                                ForwardTrace* trace = nullptr);

/// Backpropagates d(loss)/d(beta_hat) through the trace, accumulating grads
/// in every block (extractor only when the trace carries conv caches).
void model_backward(ModelParams& params, const ModelConfig& config, const SceneInput& scene,
                    const std::vector<Vec3>& queries, const Vec& grad_beta_hat,
                    ForwardTrace& trace);

/// Versioned checkpoint: parameter blocks + config + normalization stats +
/// training-stage tag. Stage 3 marks the single-stage baseline.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  double stats_mean = 0.0, stats_std = 1.0;
  int stage = 0;
  uint64_t config_hash = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
void write_checkpoint_stream(const Checkpoint& ckpt, std::ostream& os);
Checkpoint read_checkpoint_stream(std::istream& is);

}  // namespace cloudtomo
