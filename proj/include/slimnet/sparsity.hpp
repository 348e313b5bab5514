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

#ifndef SLIMNET_SPARSITY_HPP
#define SLIMNET_SPARSITY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slimnet/dataset.hpp"
#include "slimnet/layers.hpp"
#include "slimnet/network.hpp"
#include "slimnet/optimizer.hpp"

namespace slimnet {

enum class PenaltyKind { none, l1, smooth_l1 };

/// Sparsity penalty g applied to every batchnorm scale factor.
struct Penalty {
  PenaltyKind kind = PenaltyKind::l1;
  double delta = 0.1;  // width of the quadratic zone for smooth_l1
};

/// g(s): |s| for L1; s^2/(2 delta) inside [-delta, delta] and |s| - delta/2
/// outside for smooth-L1.
inline double penalty_term(double s, const Penalty& p) {
  switch (p.kind) {
    case PenaltyKind::none: return 0.0;
    case PenaltyKind::l1: return std::abs(s);
    case PenaltyKind::smooth_l1: {
      const double a = std::abs(s);
      return a < p.delta ? 0.5 * s * s / p.delta : a - 0.5 * p.delta;
    }
  }
  return 0.0;
}

/// lambda * sum over every batchnorm gamma of g(gamma).
inline double penalty_value(const NetworkGraph& graph, double lambda, const Penalty& p) {
  double sum = 0.0;
  for (const auto& l : graph.layers()) {
    if (l.kind() != LayerKind::batchnorm) continue;
    for (double g : l.as<BatchNormParams>().gamma.values()) sum += penalty_term(g, p);
  }
  return lambda * sum;
}

/// Subgradient of lambda * g at `gamma`; sign(0) is taken as 0.
inline double penalty_subgradient(double gamma, double lambda, const Penalty& p) {
  switch (p.kind) {
    case PenaltyKind::none: return 0.0;
    case PenaltyKind::l1: return gamma > 0.0 ? lambda : (gamma < 0.0 ? -lambda : 0.0);
    case PenaltyKind::smooth_l1: return lambda * std::clamp(gamma / p.delta, -1.0, 1.0);
  }
  return 0.0;
}

/// Adds the penalty subgradient to the gradient buffer of every gamma.
inline void add_penalty_gradient(NetworkGraph& graph, double lambda, const Penalty& p) {
  if (p.kind == PenaltyKind::none) return;
  for (auto& l : graph.layers()) {
    if (l.kind() != LayerKind::batchnorm) continue;
    auto& gamma = l.as<BatchNormParams>().gamma;
    auto grad = gamma.grad();
    for (std::size_t c = 0; c < gamma.size(); ++c) grad[c] += penalty_subgradient(gamma[c], lambda, p);
  }
}

struct TrainConfig {
  double lambda = 0.0;
  Penalty penalty{};
  int epochs = 1;
  std::size_t batch_size = 64;
  double lr0 = 0.1;
  std::vector<double> milestones{0.5, 0.75};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double gamma_init = 0.5;  // used by initialize_parameters when a run starts from scratch
  std::uint64_t seed = 0;
  std::string snapshot_layer{};  // batchnorm whose gamma trajectory is reported; first one if empty
  ConvAlgo conv_algo = ConvAlgo::direct;
  std::optional<AugmentConfig> augment{};

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (penalty.kind == PenaltyKind::smooth_l1 && !(penalty.delta > 0.0)) {
      throw ConfigError("train: smooth-L1 delta must be positive");
    }
    SgdConfig{lr0, momentum, weight_decay}.validate();
  }

  LrSchedule schedule() const { return {lr0, epochs, milestones}; }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;  // mean task loss over the epoch
  double penalty = 0.0;     // penalty value at the end of the epoch
  std::optional<double> val_error;
};

/// All gamma vectors of a graph, in layer order.
struct GammaSnapshot {
  std::vector<std::string> layers;
  std::vector<std::vector<double>> gammas;

  static GammaSnapshot of(const NetworkGraph& graph) {
    GammaSnapshot s;
    for (const auto& l : graph.layers()) {
      if (l.kind() != LayerKind::batchnorm) continue;
      s.layers.push_back(l.name);
      const auto& g = l.as<BatchNormParams>().gamma.values();
      s.gammas.emplace_back(g.begin(), g.end());
    }
    return s;
  }

  const std::vector<double>& layer(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i] == name) return gammas[i];
    }
    throw ConfigError("no batchnorm layer '" + name + "' in snapshot");
  }
};

struct TrainReport {
  double lambda = 0.0;
  Penalty penalty{};
  std::vector<EpochRecord> epochs;
  std::optional<double> test_error;
  std::string snapshot_layer;
  /// snapshots[0] precedes training; snapshots[e] follows epoch e.
  std::vector<GammaSnapshot> snapshots;
};

/// What a step hook sees: the gradients are final (task + penalty) and the
/// optimizer has not yet been applied.
struct StepContext {
  int epoch = 0;
  std::size_t step = 0;
  const Dataset& batch;
  NetworkGraph& graph;
  double loss = 0.0;
};

using StepHook = std::function<void(const StepContext&)>;

/// Fraction of misclassified samples, eval mode.
inline double evaluate(const NetworkGraph& graph, const Dataset& data, ConvAlgo algo = ConvAlgo::direct,
                       std::size_t chunk = 500) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  std::size_t wrong = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    const Dataset part = data.slice(begin, end);
    const Tensor logits = predict(graph, part.images, algo);
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const double* row = logits.data() + i * classes;
      const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
      if (best != part.labels[i]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

/// In-place Fisher-Yates shuffle driven by `rng`.
inline void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

/// Minimizes mean cross-entropy + lambda * sum g(gamma) with Nesterov SGD,
/// applying the penalty through its subgradient on every gamma.
///
/// The graph must already be initialized (or carry weights from a previous
/// stage). Shuffling uses one RNG stream seeded from config.seed. A trailing
/// batch of fewer than two samples is skipped.
inline TrainReport train(NetworkGraph& graph, const Dataset& train_set, const TrainConfig& config,
                         const Dataset* validation = nullptr, const Dataset* test = nullptr,
                         const StepHook& hook = {}) {
  config.validate();
  if (train_set.size() == 0) throw ConfigError("train: empty dataset");

  TrainReport report;
  report.lambda = config.lambda;
  report.penalty = config.penalty;
  report.snapshots.push_back(GammaSnapshot::of(graph));
  report.snapshot_layer = config.snapshot_layer;
  if (report.snapshot_layer.empty() && !report.snapshots[0].layers.empty()) {
    report.snapshot_layer = report.snapshots[0].layers.front();
  }

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = graph.parameters();
  SgdState state;
  const LrSchedule schedule = config.schedule();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(schedule, epoch);
    const SgdConfig sgd{lr, config.momentum, config.weight_decay};
    fisher_yates(order, rng);
    double loss_sum = 0.0;
    std::size_t seen = 0, step = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      if (end - begin < 2) break;
      Dataset batch = train_set.gather(std::span(order).subspan(begin, end - begin));
      if (config.augment) batch.images = augment(batch.images, *config.augment, rng);

      ForwardPass pass = forward(graph, batch.images, Mode::train, config.conv_algo);
      LossResult loss = softmax_cross_entropy(pass.logits, batch.labels);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + " step " + std::to_string(step));
      }
      backward(graph, pass, loss.grad_logits);
      add_penalty_gradient(graph, config.lambda, config.penalty);
      if (hook) hook(StepContext{epoch, step, batch, graph, loss.loss});
      sgd_step(params, state, sgd);

      loss_sum += loss.loss * static_cast<double>(end - begin);
      seen += end - begin;
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.penalty = penalty_value(graph, config.lambda, config.penalty);
    if (validation && validation->size()) rec.val_error = evaluate(graph, *validation, config.conv_algo);
    report.epochs.push_back(rec);
    report.snapshots.push_back(GammaSnapshot::of(graph));
  }
  graph.drop_grads();
  if (test && test->size()) report.test_error = evaluate(graph, *test, config.conv_algo);
  return report;
}

/// Re-estimates batchnorm running statistics as plain averages of the batch
/// statistics over `batches` passes of `batch_size` samples, in data order.
inline void recalibrate_batchnorm(NetworkGraph& graph, const Dataset& data, std::size_t batch_size = 256,
                                  std::size_t batches = 0, ConvAlgo algo = ConvAlgo::direct) {
  std::vector<BatchNormParams*> bns;
  for (auto& l : graph.layers()) {
    if (l.kind() == LayerKind::batchnorm) bns.push_back(&l.as<BatchNormParams>());
  }
  std::vector<std::vector<double>> mean_sum(bns.size()), var_sum(bns.size());
  for (std::size_t b = 0; b < bns.size(); ++b) {
    mean_sum[b].assign(bns[b]->channels(), 0.0);
    var_sum[b].assign(bns[b]->channels(), 0.0);
  }
  std::size_t used = 0;
  for (std::size_t begin = 0; begin + 2 <= data.size(); begin += batch_size) {
    if (batches && used == batches) break;
    const Dataset part = data.slice(begin, std::min(data.size(), begin + batch_size));
    const ForwardPass pass = forward(graph, part.images, Mode::train, algo);
    std::size_t k = 0;
    for (std::size_t i = 0; i < graph.size(); ++i) {
      if (graph.layer(i).kind() != LayerKind::batchnorm) continue;
      const auto& saved = pass.caches[i].batchnorm;
      for (std::size_t c = 0; c < saved.mean.size(); ++c) {
        mean_sum[k][c] += saved.mean[c];
        var_sum[k][c] += saved.variance[c];
      }
      ++k;
    }
    ++used;
  }
  if (used == 0) throw ConfigError("recalibrate_batchnorm: not enough data");
  for (std::size_t b = 0; b < bns.size(); ++b) {
    for (std::size_t c = 0; c < bns[b]->channels(); ++c) {
      bns[b]->running_mean[c] = mean_sum[b][c] / static_cast<double>(used);
      bns[b]->running_var[c] = var_sum[b][c] / static_cast<double>(used);
    }
  }
}

}  // namespace slimnet

#endif  // SLIMNET_SPARSITY_HPP
