// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cloudtomo {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Invalid user-supplied configuration (bad ranges, missing files named in config).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

/// Failure while reading or writing artifact files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

/// Violated invariant on in-memory data (shape mismatch, corrupt payload).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

// Runs fn(i) for i in [0, n). Work items must be independent; each index is
// written by exactly one invocation, so results do not depend on scheduling.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  int n_threads = static_cast<int>(hw == 0 ? 4 : hw);
  if (n_threads > n) n_threads = n;
  if (n_threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t]() {
      for (int i = t; i < n; i += n_threads) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace cloudtomo
