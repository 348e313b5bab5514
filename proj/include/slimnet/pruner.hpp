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

#ifndef SLIMNET_PRUNER_HPP
#define SLIMNET_PRUNER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slimnet/analyzer.hpp"
#include "slimnet/network.hpp"
#include "slimnet/sparsity.hpp"

namespace slimnet {

struct PruneConfig {
  double percentile_t = 0.5;             // global fraction of channels to prune
  std::optional<double> per_layer_cap;   // at most this fraction of any one group
  std::size_t min_keep = 1;              // every group keeps at least this many
  bool magnitude = true;                 // rank by |gamma| rather than signed gamma
  std::optional<double> per_group_ratio; // prune exactly this fraction of every group instead
  bool absorb_bias = false;              // fold pruned channels' constant output into consumer biases

  void validate() const {
    if (!(percentile_t >= 0.0 && percentile_t < 1.0)) throw ConfigError("prune: percentile must lie in [0,1)");
    if (per_layer_cap && !(*per_layer_cap > 0.0 && *per_layer_cap <= 1.0)) {
      throw ConfigError("prune: per-layer cap must lie in (0,1]");
    }
    if (per_group_ratio && !(*per_group_ratio >= 0.0 && *per_group_ratio < 1.0)) {
      throw ConfigError("prune: per-group ratio must lie in [0,1)");
    }
    if (min_keep < 1) throw ConfigError("prune: min_keep must be >= 1");
  }
};

struct GroupPlan {
  std::string bn_layer_name;
  std::string producer_layer_name;
  std::vector<std::uint8_t> keep;  // one flag per channel

  std::size_t width() const noexcept { return keep.size(); }
  std::size_t kept() const noexcept { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1)); }
  std::size_t pruned() const noexcept { return width() - kept(); }
  std::vector<std::size_t> kept_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < keep.size(); ++c) {
      if (keep[c]) out.push_back(c);
    }
    return out;
  }
};

/// Keep masks for every channel group plus the cut that produced them.
struct PrunePlan {
  double threshold = 0.0;
  bool absorb_bias = false;
  std::vector<GroupPlan> groups;
  std::uint64_t predicted_params = 0;         // batchnorm gamma/beta included
  std::uint64_t predicted_params_no_bn = 0;   // batchnorm excluded
  std::uint64_t predicted_flops = 0;

  std::size_t total_channels() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.width();
    return n;
  }
  std::size_t total_pruned() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.pruned();
    return n;
  }
};

namespace detail {

inline std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

/// Indices of `scores` ordered from first-to-prune to last: ascending score,
/// and among equal scores the higher index first (the lower index is kept).
inline std::vector<std::size_t> prune_order(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a > b;
  });
  return idx;
}

}  // namespace detail

/// The k-th smallest value for k = floor(t * N), i.e. the largest value that
/// falls in the pruned set. For k = 0 the result lies below every value.
inline double compute_threshold(const std::vector<double>& values, double t) {
  if (values.empty()) throw ConfigError("compute_threshold: empty value set");
  if (!(t >= 0.0 && t < 1.0)) throw ConfigError("compute_threshold: t must lie in [0,1)");
  const std::size_t k = detail::fraction_count(t, values.size());
  if (k == 0) {
    const double lo = *std::min_element(values.begin(), values.end());
    return std::nextafter(lo, -std::numeric_limits<double>::infinity());
  }
  std::vector<double> sorted = values;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

/// Flags the floor(t * N) lowest-ranked values (see prune_order for ties).
inline std::vector<std::uint8_t> select_lowest(const std::vector<double>& values, double t) {
  std::vector<std::uint8_t> marked(values.size(), 0);
  const std::size_t k = detail::fraction_count(t, values.size());
  const auto order = detail::prune_order(values);
  for (std::size_t i = 0; i < k; ++i) marked[order[i]] = 1;
  return marked;
}

/// Parameter and FLOP counts of the network `plan` would produce, derived
/// from the kept-channel counts alone.
inline void predict_counts(const NetworkGraph& graph, PrunePlan& plan) {
  const auto groups = channel_groups(graph);
  std::vector<std::optional<std::size_t>> out_override(graph.size());
  std::vector<bool> feeds_pruned(graph.size(), false);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    out_override[groups[g].producer_index] = plan.groups[g].kept();
    if (plan.groups[g].pruned() > 0) {
      for (auto c : groups[g].consumer_indices) feeds_pruned[c] = true;
    }
  }
  std::uint64_t params = 0, bn_params = 0, flops = 0;
  Shape cur = graph.input_shape();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& l = graph.layer(i);
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& p = l.as<ConvParams>();
        const std::uint64_t in = cur[0];
        const std::uint64_t out = out_override[i].value_or(p.out_channels());
        const std::uint64_t taps = static_cast<std::uint64_t>(p.kernel_h()) * p.kernel_w();
        const bool has_bias = p.bias.has_value() || (plan.absorb_bias && feeds_pruned[i]);
        const std::size_t oh = p.output_extent(cur[1], p.kernel_h()), ow = p.output_extent(cur[2], p.kernel_w());
        params += out * in * taps + (has_bias ? out : 0);
        flops += 2 * out * in * taps * oh * ow;
        cur = {out, oh, ow};
        break;
      }
      case LayerKind::linear: {
        const auto& p = l.as<LinearParams>();
        const std::uint64_t in = cur[0];
        const std::uint64_t out = out_override[i].value_or(p.out_features());
        params += out * in + out;
        flops += 2 * out * in;
        cur = {out};
        break;
      }
      case LayerKind::batchnorm: bn_params += 2 * static_cast<std::uint64_t>(cur[0]); break;
      case LayerKind::maxpool: {
        const auto& p = l.as<MaxPoolParams>();
        cur = {cur[0], p.output_extent(cur[1]), p.output_extent(cur[2])};
        break;
      }
      case LayerKind::avgpool: {
        const auto& p = l.as<AvgPoolParams>();
        cur = {cur[0], p.output_extent(cur[1]), p.output_extent(cur[2])};
        break;
      }
      case LayerKind::flatten: cur = {shape_size(cur)}; break;
      case LayerKind::relu:
      case LayerKind::channel_mask: break;
    }
  }
  plan.predicted_params_no_bn = params;
  plan.predicted_params = params + bn_params;
  plan.predicted_flops = flops;
}

/// Marks channels whose scaling factor falls in the lowest percentile across
/// all groups (or the lowest ratio of each group), then enforces the per-group
/// cap and min_keep by restoring the highest-ranked marked channels.
inline PrunePlan build_prune_plan(const NetworkGraph& graph, const PruneConfig& config) {
  config.validate();
  const auto groups = channel_groups(graph);
  PrunePlan plan;
  plan.absorb_bias = config.absorb_bias;

  std::vector<std::vector<double>> scores;
  std::vector<double> all;
  for (const auto& g : groups) {
    const auto gamma = graph.layer(g.bn_index).as<BatchNormParams>().gamma.values();
    std::vector<double> s(gamma.begin(), gamma.end());
    if (config.magnitude) {
      for (double& v : s) v = std::abs(v);
    }
    all.insert(all.end(), s.begin(), s.end());
    scores.push_back(std::move(s));
  }

  std::vector<std::vector<std::uint8_t>> marked(groups.size());
  if (config.per_group_ratio) {
    plan.threshold = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      marked[g] = select_lowest(scores[g], *config.per_group_ratio);
      for (std::size_t c = 0; c < scores[g].size(); ++c) {
        if (marked[g][c]) plan.threshold = std::max(plan.threshold, scores[g][c]);
      }
    }
  } else if (!all.empty()) {
    plan.threshold = compute_threshold(all, config.percentile_t);
    const auto flat = select_lowest(all, config.percentile_t);
    std::size_t off = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      marked[g].assign(flat.begin() + static_cast<std::ptrdiff_t>(off),
                       flat.begin() + static_cast<std::ptrdiff_t>(off + scores[g].size()));
      off += scores[g].size();
    }
  }

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t size = groups[g].channel_count;
    std::size_t max_prune = size > config.min_keep ? size - config.min_keep : 0;
    if (config.per_layer_cap) max_prune = std::min(max_prune, detail::fraction_count(*config.per_layer_cap, size));
    GroupPlan gp{groups[g].bn_layer_name, groups[g].producer_layer_name, std::vector<std::uint8_t>(size, 1)};
    std::size_t pruned = 0;
    for (std::size_t c : detail::prune_order(scores[g])) {
      if (!marked[g][c]) continue;
      if (pruned == max_prune) break;
      gp.keep[c] = 0;
      ++pruned;
    }
    plan.groups.push_back(std::move(gp));
  }
  predict_counts(graph, plan);
  return plan;
}

namespace detail {

inline void check_plan(const NetworkGraph& graph, const std::vector<ChannelGroup>& groups, const PrunePlan& plan) {
  if (groups.size() != plan.groups.size()) {
    throw ConfigError("prune plan has " + std::to_string(plan.groups.size()) + " groups, network has " +
                      std::to_string(groups.size()));
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].bn_layer_name != plan.groups[g].bn_layer_name ||
        groups[g].channel_count != plan.groups[g].width()) {
      throw ConfigError("prune plan group '" + plan.groups[g].bn_layer_name + "' (" +
                        std::to_string(plan.groups[g].width()) + " channels) does not match network group '" +
                        groups[g].bn_layer_name + "' (" + std::to_string(groups[g].channel_count) + " channels)");
    }
    if (plan.groups[g].kept() == 0) throw ConfigError("prune plan removes every channel of '" + groups[g].bn_layer_name + "'");
  }
  (void)graph;
}

inline Tensor select_axis0(const Tensor& t, const std::vector<std::size_t>& keep) {
  Shape s = t.shape();
  const std::size_t inner = t.size() / s[0];
  s[0] = keep.size();
  Tensor out(s);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(t.data() + keep[i] * inner, inner, out.data() + i * inner);
  }
  return out;
}

/// Keeps blocks of `block` consecutive entries along axis 1.
inline Tensor select_axis1(const Tensor& t, const std::vector<std::size_t>& keep, std::size_t block) {
  Shape s = t.shape();
  const std::size_t rows = s[0];
  const std::size_t inner = t.size() / (s[0] * s[1]);
  const std::size_t old_cols = s[1];
  s[1] = keep.size() * block;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < keep.size(); ++i) {
      std::copy_n(t.data() + (r * old_cols + keep[i] * block) * inner, block * inner,
                  out.data() + (r * s[1] + i * block) * inner);
    }
  }
  return out;
}

}  // namespace detail

/// Builds the narrower network: producers lose pruned filters/rows, batchnorm
/// layers and channel masks lose pruned entries, consumers lose the matching
/// input slices. The source graph is not modified.
inline NetworkGraph apply_prune(const NetworkGraph& graph, const PrunePlan& plan) {
  const auto groups = channel_groups(graph);
  detail::check_plan(graph, groups, plan);
  NetworkGraph out = graph;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    const auto keep = plan.groups[g].kept_indices();

    auto& producer = out.layer(grp.producer_index);
    if (producer.kind() == LayerKind::conv) {
      auto& p = producer.as<ConvParams>();
      p.weights = detail::select_axis0(p.weights, keep);
      if (p.bias) p.bias = detail::select_axis0(*p.bias, keep);
    } else {
      auto& p = producer.as<LinearParams>();
      p.weights = detail::select_axis0(p.weights, keep);
      p.bias = detail::select_axis0(p.bias, keep);
    }

    auto& bn = out.layer(grp.bn_index).as<BatchNormParams>();
    const std::vector<double> beta(bn.beta.values().begin(), bn.beta.values().end());
    std::vector<std::uint8_t> passes(beta.size(), 1);
    bn.gamma = detail::select_axis0(bn.gamma, keep);
    bn.beta = detail::select_axis0(bn.beta, keep);
    bn.running_mean = detail::select_axis0(bn.running_mean, keep);
    bn.running_var = detail::select_axis0(bn.running_var, keep);

    for (auto mi : grp.mask_indices) {
      auto& m = out.layer(mi).as<ChannelMaskParams>();
      for (std::size_t c = 0; c < m.keep.size(); ++c) passes[c] = passes[c] && m.keep[c];
      std::vector<std::uint8_t> kept;
      for (auto c : keep) kept.push_back(m.keep[c]);
      m.keep = std::move(kept);
    }

    for (auto ci : grp.consumer_indices) {
      auto& consumer = out.layer(ci);
      if (plan.absorb_bias && plan.groups[g].pruned() > 0) {
        // A channel with gamma ~ 0 emits relu(beta) everywhere; its share of
        // each consumer output is constant and moves into the bias.
        std::vector<double> level(beta.size(), 0.0);
        for (std::size_t c = 0; c < beta.size(); ++c) {
          if (!plan.groups[g].keep[c] && passes[c]) level[c] = std::max(beta[c], 0.0);
        }
        if (consumer.kind() == LayerKind::conv) {
          auto& p = consumer.as<ConvParams>();
          if (!p.bias) p.bias = Tensor({p.out_channels()});
          const std::size_t taps = p.kernel_h() * p.kernel_w();
          for (std::size_t o = 0; o < p.out_channels(); ++o) {
            for (std::size_t c = 0; c < beta.size(); ++c) {
              if (level[c] == 0.0) continue;
              const double* w = p.weights.data() + (o * p.in_channels() + c) * taps;
              double sum = 0.0;
              for (std::size_t k = 0; k < taps; ++k) sum += w[k];
              (*p.bias)[o] += level[c] * sum;
            }
          }
        } else {
          auto& p = consumer.as<LinearParams>();
          const std::size_t s = grp.consumer_spatial;
          for (std::size_t o = 0; o < p.out_features(); ++o) {
            for (std::size_t c = 0; c < beta.size(); ++c) {
              if (level[c] == 0.0) continue;
              const double* w = p.weights.data() + o * p.in_features() + c * s;
              double sum = 0.0;
              for (std::size_t k = 0; k < s; ++k) sum += w[k];
              p.bias[o] += level[c] * sum;
            }
          }
        }
      }
      if (consumer.kind() == LayerKind::conv) {
        auto& p = consumer.as<ConvParams>();
        p.weights = detail::select_axis1(p.weights, keep, 1);
      } else {
        auto& p = consumer.as<LinearParams>();
        p.weights = detail::select_axis1(p.weights, keep, grp.consumer_spatial);
      }
    }
  }
  out.drop_grads();
  out.validate();
  return out;
}

/// Same-size network in which every pruned channel has gamma = beta = 0, so
/// its post-batchnorm output is identically zero.
inline NetworkGraph mask_from_plan(const NetworkGraph& graph, const PrunePlan& plan) {
  const auto groups = channel_groups(graph);
  detail::check_plan(graph, groups, plan);
  NetworkGraph out = graph;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& bn = out.layer(groups[g].bn_index).as<BatchNormParams>();
    for (std::size_t c = 0; c < plan.groups[g].width(); ++c) {
      if (plan.groups[g].keep[c]) continue;
      bn.gamma[c] = 0.0;
      bn.beta[c] = 0.0;
    }
  }
  return out;
}

/// Retrains a (pruned) network with the training loop and settings of
/// `config`, with the sparsity penalty switched off.
inline TrainReport fine_tune(NetworkGraph& graph, const Dataset& train_set, const TrainConfig& config,
                             const Dataset* validation = nullptr, const Dataset* test = nullptr) {
  TrainConfig ft = config;
  ft.lambda = 0.0;
  return train(graph, train_set, ft, validation, test);
}

// ---------------------------------------------------------------------------
// Plan files

inline nlohmann::ordered_json plan_to_json(const PrunePlan& plan) {
  nlohmann::ordered_json j;
  j["threshold"] = plan.threshold;
  j["absorb_bias"] = plan.absorb_bias;
  j["total_channels"] = plan.total_channels();
  j["total_pruned"] = plan.total_pruned();
  j["predicted_params"] = plan.predicted_params;
  j["predicted_params_no_bn"] = plan.predicted_params_no_bn;
  j["predicted_flops"] = plan.predicted_flops;
  auto& arr = j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : plan.groups) {
    nlohmann::ordered_json e;
    e["bn_layer"] = g.bn_layer_name;
    e["producer_layer"] = g.producer_layer_name;
    e["width"] = g.width();
    e["kept"] = g.kept();
    e["pruned"] = g.pruned();
    e["kept_indices"] = g.kept_indices();
    arr.push_back(std::move(e));
  }
  return j;
}

inline PrunePlan plan_from_json(const nlohmann::json& j) {
  PrunePlan plan;
  try {
    plan.threshold = j.at("threshold").get<double>();
    plan.absorb_bias = j.value("absorb_bias", false);
    plan.predicted_params = j.at("predicted_params").get<std::uint64_t>();
    plan.predicted_params_no_bn = j.value("predicted_params_no_bn", std::uint64_t{0});
    plan.predicted_flops = j.at("predicted_flops").get<std::uint64_t>();
    for (const auto& e : j.at("groups")) {
      GroupPlan g;
      g.bn_layer_name = e.at("bn_layer").get<std::string>();
      g.producer_layer_name = e.at("producer_layer").get<std::string>();
      g.keep.assign(e.at("width").get<std::size_t>(), 0);
      for (auto idx : e.at("kept_indices").get<std::vector<std::size_t>>()) {
        if (idx >= g.keep.size()) throw ConfigError("plan: kept index out of range in '" + g.bn_layer_name + "'");
        g.keep[idx] = 1;
      }
      plan.groups.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed plan file: ") + e.what());
  }
  return plan;
}

}  // namespace slimnet

#endif  // SLIMNET_PRUNER_HPP
