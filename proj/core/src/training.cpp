// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "cloudtomo/io.hpp"

namespace cloudtomo {

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2, or 3");
  if (learning_rate <= 0 || weight_decay < 0) throw ConfigError("invalid optimizer settings");
  if (queries_per_iteration < 1) throw ConfigError("queries_per_iteration must be >= 1");
  if (max_iterations < 1 || validation_interval < 1) throw ConfigError("invalid iteration counts");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (loss_delta <= 0) throw ConfigError("loss_delta must be > 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction in [0,1)");
  if (mask_threshold_frac < 0) throw ConfigError("mask_threshold_frac must be >= 0");
  if (hull_dilation < 0) throw ConfigError("hull_dilation must be >= 0");
}

double loss_relative_l2(const Vec& beta_hat, const Vec& beta_true, double delta) {
  if (beta_hat.size() == 0 || beta_hat.size() != beta_true.size())
    throw ValidationError("loss operands must be nonempty, equal length");
  if (delta < 0) throw ConfigError("delta must be >= 0");
  return (beta_hat - beta_true).norm() / (beta_true.norm() + delta);
}

double loss_relative_l2_grad(const Vec& beta_hat, const Vec& beta_true, double delta, Vec& grad) {
  if (beta_hat.size() == 0 || beta_hat.size() != beta_true.size())
    throw ValidationError("loss operands must be nonempty, equal length");
  Vec r = beta_hat - beta_true;
  double rn = r.norm();
  double denom = beta_true.norm() + delta;
  if (rn == 0.0) {
    grad = Vec::Zero(beta_hat.size());
    return 0.0;
  }
  grad = r / (rn * denom);
  return rn / denom;
}

TrainScene prepare_train_scene(Scene&& scene, const NormalizationStats& stats,
                               const TrainConfig& config) {
  TrainScene ts;
  ts.scene = std::move(scene);
  ts.normalized = normalize_images(ts.scene.images, stats);

  float max_radiance = 0.0f;
  for (float v : ts.scene.images.data) max_radiance = std::max(max_radiance, v);
  double threshold = config.mask_threshold_frac * double(max_radiance);
  auto masks = make_masks(ts.scene.images, threshold);
  Hull hull = space_carve(masks, ts.scene.cameras, ts.scene.field.grid, config.hull_dilation);

  const GridSpec& g = ts.scene.field.grid;
  std::vector<double> beta;
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (hull.at(i, j, k)) {
          ts.hull_points.push_back(g.voxel_center(i, j, k));
          beta.push_back(double(ts.scene.field.at(i, j, k)));
        }
  ts.hull_beta = Eigen::Map<Vec>(beta.data(), static_cast<int64_t>(beta.size()));
  return ts;
}

TrainState TrainState::create(const ModelConfig& config, const TrainConfig& train,
                              uint64_t init_seed, SunMode mode) {
  train.validate();
  TrainState state;
  state.config = config;
  state.params = ModelParams::create(config, init_seed);
  state.sun_mode = mode;
  state.rng = Rng(derive_seed(train.seed, "train"));
  for (auto& o : state.opt) {
    o.lr = train.learning_rate;
    o.weight_decay = train.weight_decay;
  }
  return state;
}

namespace {

void sample_queries(const TrainScene& scene, int count, Rng& rng, std::vector<Vec3>& queries,
                    Vec& targets) {
  int n = static_cast<int>(scene.hull_points.size());
  queries.clear();
  targets.resize(count);
  if (n >= count) {
    // Partial Fisher-Yates: first `count` entries of a random permutation.
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[size_t(i)] = i;
    for (int i = 0; i < count; ++i) {
      int j = static_cast<int>(rng.uniform_int(i, n - 1));
      std::swap(idx[size_t(i)], idx[size_t(j)]);
      queries.push_back(scene.hull_points[size_t(idx[size_t(i)])]);
      targets[i] = scene.hull_beta[idx[size_t(i)]];
    }
  } else {
    for (int i = 0; i < count; ++i) {
      int j = static_cast<int>(rng.uniform_int(0, n - 1));
      queries.push_back(scene.hull_points[size_t(j)]);
      targets[i] = scene.hull_beta[j];
    }
  }
}

void optimizer_step(TrainState& state) {
  for (Block b : kAllBlocks) {
    if (!state.params.is_trainable(b)) continue;
    auto& o = state.opt[static_cast<size_t>(b)];
    int64_t n = 0;
    state.params.visit_block(b, [&](double*, double*, int64_t c) { n += c; });
    o.ensure_size(n);
    ++o.t;
    double bc1 = 1.0 - std::pow(o.beta1, double(o.t));
    double bc2 = 1.0 - std::pow(o.beta2, double(o.t));
    int64_t off = 0;
    state.params.visit_block(b, [&](double* p, double* g, int64_t c) {
      for (int64_t i = 0; i < c; ++i) {
        double& mi = o.m[off + i];
        double& vi = o.v[off + i];
        mi = o.beta1 * mi + (1.0 - o.beta1) * g[i];
        vi = o.beta2 * vi + (1.0 - o.beta2) * g[i] * g[i];
        double mhat = mi / bc1, vhat = vi / bc2;
        p[i] -= o.lr * (mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * p[i]);
      }
      off += c;
    });
  }
}

}  // namespace

double training_step(TrainState& state, const TrainScene& scene, const TrainConfig& config) {
  if (scene.hull_points.empty()) {
    std::cerr << "warning: empty hull in scene " << scene.scene.id << ", skipped\n";
    return -1.0;
  }
  std::vector<Vec3> queries;
  Vec targets;
  sample_queries(scene, config.queries_per_iteration, state.rng, queries, targets);

  state.params.zero_grad();
  ForwardTrace trace;
  SceneInput input = scene.input();
  Vec beta_hat = model_forward(state.params, state.config, input, queries, state.sun_mode, &trace);
  Vec grad;
  double loss = loss_relative_l2_grad(beta_hat, targets, config.loss_delta, grad);
  model_backward(state.params, state.config, input, queries, grad, trace);
  optimizer_step(state);
  ++state.iteration;
  return loss;
}

namespace {

struct ValSet {
  const TrainScene* scene;
  std::vector<Vec3> queries;
  Vec targets;
};

double validation_loss(const TrainState& state, const std::vector<ValSet>& vals,
                       const TrainConfig& config) {
  if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  int counted = 0;
  for (const auto& v : vals) {
    if (v.queries.empty()) continue;
    Vec beta_hat = model_forward(state.params, state.config, v.scene->input(), v.queries,
                                 state.sun_mode, nullptr);
    total += loss_relative_l2(beta_hat, v.targets, config.loss_delta);
    ++counted;
  }
  return counted > 0 ? total / counted : std::numeric_limits<double>::quiet_NaN();
}

TrainOutcome run_training(TrainState state, std::vector<TrainScene>& scenes,
                          const TrainConfig& config, double stats_mean, double stats_std,
                          int stage_tag, const std::string& log_path) {
  if (scenes.empty()) throw ConfigError("no training scenes");
  int n_val = std::min(static_cast<int>(scenes.size()) - 1,
                       static_cast<int>(std::lround(config.val_fraction * double(scenes.size()))));
  if (n_val < 1 && scenes.size() > 1) n_val = 1;
  int n_train = static_cast<int>(scenes.size()) - n_val;
  if (n_train < 1) {
    n_train = static_cast<int>(scenes.size());
    n_val = 0;
  }

  std::vector<ValSet> vals;
  for (int v = 0; v < n_val; ++v) {
    ValSet set;
    set.scene = &scenes[size_t(n_train + v)];
    Rng vr(derive_seed(config.seed, "val_queries", uint64_t(v)));
    int count = std::min<int>(static_cast<int>(set.scene->hull_points.size()),
                              std::max(config.queries_per_iteration, 256));
    if (count > 0) sample_queries(*set.scene, count, vr, set.queries, set.targets);
    vals.push_back(std::move(set));
  }
  // No held-out scene: validate on the training scene itself (degenerate
  // micro-datasets only).
  if (vals.empty()) {
    ValSet set;
    set.scene = &scenes[0];
    Rng vr(derive_seed(config.seed, "val_queries", 0));
    int count = std::min<int>(static_cast<int>(set.scene->hull_points.size()),
                              std::max(config.queries_per_iteration, 256));
    if (count > 0) sample_queries(*set.scene, count, vr, set.queries, set.targets);
    vals.push_back(std::move(set));
  }

  TrainOutcome outcome;
  outcome.initial_val = validation_loss(state, vals, config);
  state.best_val = outcome.initial_val;
  state.has_best = true;
  ModelParams best_params = state.params;
  int stale_checks = 0;

  double running_loss = 0.0;
  int64_t running_count = 0;
  while (state.iteration < config.max_iterations) {
    int idx = static_cast<int>(state.rng.uniform_int(0, n_train - 1));
    double loss = training_step(state, scenes[size_t(idx)], config);
    if (loss >= 0.0) {
      running_loss += loss;
      ++running_count;
    } else {
      ++state.iteration;  // skipped scene still consumes the iteration
    }
    if (state.iteration % config.validation_interval == 0) {
      double val = validation_loss(state, vals, config);
      double mean_train = running_count > 0 ? running_loss / double(running_count) : 0.0;
      outcome.log.push_back({state.iteration, mean_train, val});
      running_loss = 0.0;
      running_count = 0;
      if (std::isnan(val) || val < state.best_val) {
        state.best_val = val;
        best_params = state.params;
        stale_checks = 0;
      } else if (++stale_checks >= config.early_stop_patience) {
        break;
      }
    }
  }

  outcome.final_val = state.best_val;
  outcome.checkpoint.config = state.config;
  outcome.checkpoint.params = std::move(best_params);
  outcome.checkpoint.params.trainable = state.params.trainable;
  outcome.checkpoint.stats_mean = stats_mean;
  outcome.checkpoint.stats_std = stats_std;
  outcome.checkpoint.stage = stage_tag;
  outcome.checkpoint.config_hash = state.config.hash();
  if (!log_path.empty()) write_train_log(outcome.log, log_path);
  return outcome;
}

std::vector<TrainScene> load_train_scenes(const std::vector<DatasetManifest>& manifests,
                                          const NormalizationStats& stats,
                                          const TrainConfig& config) {
  std::vector<TrainScene> scenes;
  for (const auto& m : manifests)
    for (const auto& id : m.train_ids)
      scenes.push_back(prepare_train_scene(load_scene(m.scene_dir(id)), stats, config));
  return scenes;
}

}  // namespace

NormalizationStats compute_union_stats(const std::vector<DatasetManifest>& manifests) {
  double sum = 0.0, sumsq = 0.0;
  int64_t n = 0;
  for (const auto& m : manifests)
    for (const auto& id : m.train_ids) {
      MultiviewImages images = load_images(m.scene_dir(id) + "/images.img");
      for (float v : images.data) {
        sum += v;
        sumsq += double(v) * v;
        ++n;
      }
    }
  if (n == 0) throw ConfigError("cannot compute stats over empty manifests");
  NormalizationStats stats;
  stats.mean = sum / double(n);
  stats.std = std::sqrt(std::max(sumsq / double(n) - stats.mean * stats.mean, 0.0));
  if (!(stats.std > 0.0)) throw ValidationError("degenerate corpus: zero std");
  return stats;
}

TrainOutcome train_stage1(const TrainConfig& config, const ModelConfig& model_config,
                          const DatasetManifest& fixed_sun, uint64_t init_seed,
                          const std::string& log_path) {
  config.validate();
  if (fixed_sun.train_ids.empty()) throw ConfigError("fixed-sun dataset has no training scenes");
  NormalizationStats stats = fixed_sun.stats;
  auto scenes = load_train_scenes({fixed_sun}, stats, config);
  TrainState state = TrainState::create(model_config, config, init_seed, SunMode::Zeroed);
  state.params.set_trainable(Block::SunEnc, false);  // frozen and zeroed throughout
  return run_training(std::move(state), scenes, config, stats.mean, stats.std, 1, log_path);
}

TrainOutcome train_stage2(const TrainConfig& config, const Checkpoint& stage1,
                          const std::vector<DatasetManifest>& varying,
                          const std::string& log_path) {
  config.validate();
  if (stage1.stage != 1) throw ConfigError("stage-2 training needs a stage-1 checkpoint");
  if (varying.empty()) throw ConfigError("stage-2 training needs varying-sun data");
  // Normalization follows the extractor: the frozen feature extractor was
  // trained under the stage-1 stats, so those stats stay in force.
  NormalizationStats stats{stage1.stats_mean, stage1.stats_std};
  auto scenes = load_train_scenes(varying, stats, config);
  TrainState state;
  state.config = stage1.config;
  state.params = stage1.params;
  state.sun_mode = SunMode::Active;
  state.rng = Rng(derive_seed(config.seed, "train"));
  for (auto& o : state.opt) {
    o.lr = config.learning_rate;
    o.weight_decay = config.weight_decay;
  }
  for (Block b : kAllBlocks) state.params.set_trainable(b, true);
  state.params.set_trainable(Block::Extractor, false);
  return run_training(std::move(state), scenes, config, stats.mean, stats.std, 2, log_path);
}

TrainOutcome train_single_stage_baseline(const TrainConfig& config,
                                         const ModelConfig& model_config,
                                         const std::vector<DatasetManifest>& varying,
                                         uint64_t init_seed, const std::string& log_path) {
  config.validate();
  if (varying.empty()) throw ConfigError("baseline training needs varying-sun data");
  NormalizationStats stats = compute_union_stats(varying);
  auto scenes = load_train_scenes(varying, stats, config);
  TrainState state = TrainState::create(model_config, config, init_seed, SunMode::Active);
  return run_training(std::move(state), scenes, config, stats.mean, stats.std, 3, log_path);
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write training log: " + path);
  os << "# iteration train_loss val_loss\n";
  os.precision(17);
  for (const auto& e : log) os << e.iteration << " " << e.train_loss << " " << e.val_loss << "\n";
}

static const char kStateMagic[8] = {'C', 'T', 'T', 'S', 'T', '0', '0', '1'};

void save_train_state(const TrainState& state, double stats_mean, double stats_std, int stage,
                      const std::string& path) {
  auto os = io::open_out(path);
  io::write_magic(os, kStateMagic);
  Checkpoint ckpt;
  ckpt.config = state.config;
  ckpt.params = state.params;
  ckpt.stats_mean = stats_mean;
  ckpt.stats_std = stats_std;
  ckpt.stage = stage;
  ckpt.config_hash = state.config.hash();
  write_checkpoint_stream(ckpt, os);
  for (const auto& o : state.opt) {
    io::write_pod<int64_t>(os, o.t);
    nn::write_vec(os, o.m);
    nn::write_vec(os, o.v);
    io::write_pod<double>(os, o.lr);
    io::write_pod<double>(os, o.weight_decay);
  }
  io::write_pod<int64_t>(os, state.iteration);
  io::write_pod<double>(os, state.best_val);
  io::write_pod<uint8_t>(os, state.has_best ? 1 : 0);
  io::write_pod<uint8_t>(os, state.sun_mode == SunMode::Active ? 1 : 0);
  for (bool t : state.params.trainable) io::write_pod<uint8_t>(os, t ? 1 : 0);
  io::write_string(os, state.rng.serialize());
  if (!os) throw IoError("write failed: " + path);
}

TrainState load_train_state(const std::string& path, double* stats_mean, double* stats_std,
                            int* stage) {
  auto is = io::open_in(path);
  io::expect_magic(is, kStateMagic, "train state");
  Checkpoint ckpt = read_checkpoint_stream(is);
  TrainState state;
  state.config = ckpt.config;
  state.params = std::move(ckpt.params);
  if (stats_mean) *stats_mean = ckpt.stats_mean;
  if (stats_std) *stats_std = ckpt.stats_std;
  if (stage) *stage = ckpt.stage;
  for (auto& o : state.opt) {
    o.t = io::read_pod<int64_t>(is, "optimizer state");
    o.m = nn::read_vec(is, "optimizer m");
    o.v = nn::read_vec(is, "optimizer v");
    o.lr = io::read_pod<double>(is, "optimizer state");
    o.weight_decay = io::read_pod<double>(is, "optimizer state");
  }
  state.iteration = io::read_pod<int64_t>(is, "train state");
  state.best_val = io::read_pod<double>(is, "train state");
  state.has_best = io::read_pod<uint8_t>(is, "train state") != 0;
  state.sun_mode = io::read_pod<uint8_t>(is, "train state") != 0 ? SunMode::Active : SunMode::Zeroed;
  for (size_t b = 0; b < state.params.trainable.size(); ++b)
    state.params.trainable[b] = io::read_pod<uint8_t>(is, "train state") != 0;
  state.rng.deserialize(io::read_string(is, "rng state"));
  return state;
}

}  // namespace cloudtomo
