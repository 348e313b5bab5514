// Copyright 2026 The Slimnet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SLIMNET_OPTIMIZER_HPP
#define SLIMNET_OPTIMIZER_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slimnet/tensor.hpp"

namespace slimnet {

using Rng = std::mt19937_64;

enum class ParamRole { weight, bias, gamma, beta };

/// Non-owning handle to one trainable tensor inside a network. Gradients are
/// read from the tensor's own gradient buffer.
struct ParamRef {
  Tensor* tensor = nullptr;
  ParamRole role = ParamRole::weight;
  std::string name;

  bool decays() const noexcept { return role == ParamRole::weight; }
};

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("sgd: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("sgd: weight decay must be non-negative");
  }
};

/// One velocity buffer per parameter tensor, lazily sized on first step.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// Nesterov SGD without dampening:
///   g <- grad + wd * w   (weights only; biases and BN affine terms exempt)
///   v <- m * v + g
///   w <- w - lr * (g + m * v)
inline void sgd_step(std::span<const ParamRef> params, SgdState& state, const SgdConfig& config) {
  config.validate();
  if (state.velocity.empty()) state.velocity.resize(params.size());
  if (state.velocity.size() != params.size()) {
    throw ConfigError("sgd: optimizer state has " + std::to_string(state.velocity.size()) +
                      " slots for " + std::to_string(params.size()) + " parameters");
  }
  const double lr = config.lr, m = config.momentum;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p].tensor;
    if (!t.has_grad()) continue;
    auto& v = state.velocity[p];
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    const double wd = params[p].decays() ? config.weight_decay : 0.0;
    double* w = t.data();
    const std::span<const double> grad = std::as_const(t).grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = grad[i] + wd * w[i];
      v[i] = m * v[i] + g;
      w[i] -= lr * (g + m * v[i]);
    }
  }
}

/// Step-decay schedule: the rate is divided by 10 at each milestone, where a
/// milestone fraction f of E total epochs falls at epoch ceil(f * E).
struct LrSchedule {
  double initial_lr = 0.1;
  int total_epochs = 1;
  std::vector<double> milestones{0.5, 0.75};

  std::vector<int> milestone_epochs() const {
    std::vector<int> out;
    for (double f : milestones) {
      out.push_back(static_cast<int>(std::ceil(f * total_epochs - 1e-9)));
    }
    return out;
  }
};

inline double lr_at_epoch(const LrSchedule& schedule, int epoch) {
  int reached = 0;
  for (int m : schedule.milestone_epochs()) {
    if (epoch >= m) ++reached;
  }
  return schedule.initial_lr / std::pow(10.0, reached);
}

/// Zero-mean normal samples with standard deviation sqrt(2 / fan_in).
inline Tensor he_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in < 1) throw ConfigError("he_init: fan_in must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace slimnet

#endif  // SLIMNET_OPTIMIZER_HPP
