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

#ifndef SLIMNET_ANALYZER_HPP
#define SLIMNET_ANALYZER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "slimnet/network.hpp"
#include "slimnet/sparsity.hpp"

namespace slimnet {

/// Counting conventions. FLOPs count one multiply-accumulate as two
/// operations, per single input sample, for conv and linear layers only.
struct CountOptions {
  bool include_batchnorm = true;  // count gamma and beta as parameters
};

struct LayerResources {
  std::string name;
  LayerKind kind{};
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct ResourceReport {
  std::vector<LayerResources> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;

  const LayerResources& layer(const std::string& name) const {
    for (const auto& l : layers) {
      if (l.name == name) return l;
    }
    throw ConfigError("no layer '" + name + "' in resource report");
  }
};

/// Parameter and FLOP counts read from the actual tensor shapes of `graph`
/// at per-sample input shape `input_shape`.
inline ResourceReport analyze_resources(const NetworkGraph& graph, const Shape& input_shape,
                                        const CountOptions& options = {}) {
  ResourceReport r;
  Shape cur = input_shape;
  for (const auto& l : graph.layers()) {
    LayerResources e{l.name, l.kind(), 0, 0};
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& p = l.as<ConvParams>();
        const std::uint64_t k = p.out_channels() * p.in_channels() * p.kernel_h() * p.kernel_w();
        e.params = k + (p.bias ? p.out_channels() : 0);
        const std::size_t oh = p.output_extent(cur.at(1), p.kernel_h());
        const std::size_t ow = p.output_extent(cur.at(2), p.kernel_w());
        e.flops = 2 * k * oh * ow;
        cur = {p.out_channels(), oh, ow};
        break;
      }
      case LayerKind::linear: {
        const auto& p = l.as<LinearParams>();
        e.params = p.out_features() * p.in_features() + p.out_features();
        e.flops = 2 * static_cast<std::uint64_t>(p.out_features()) * p.in_features();
        cur = {p.out_features()};
        break;
      }
      case LayerKind::batchnorm:
        if (options.include_batchnorm) e.params = 2 * l.as<BatchNormParams>().channels();
        break;
      case LayerKind::maxpool: {
        const auto& p = l.as<MaxPoolParams>();
        cur = {cur.at(0), p.output_extent(cur.at(1)), p.output_extent(cur.at(2))};
        break;
      }
      case LayerKind::avgpool: {
        const auto& p = l.as<AvgPoolParams>();
        cur = {cur.at(0), p.output_extent(cur.at(1)), p.output_extent(cur.at(2))};
        break;
      }
      case LayerKind::flatten: cur = {shape_size(cur)}; break;
      case LayerKind::relu:
      case LayerKind::channel_mask: break;
    }
    r.total_params += e.params;
    r.total_flops += e.flops;
    r.layers.push_back(std::move(e));
  }
  return r;
}

inline std::uint64_t count_params(const NetworkGraph& graph, const CountOptions& options = {}) {
  return analyze_resources(graph, graph.input_shape(), options).total_params;
}

inline std::uint64_t count_flops(const NetworkGraph& graph, const Shape& input_shape) {
  return analyze_resources(graph, input_shape).total_flops;
}

inline std::uint64_t count_flops(const NetworkGraph& graph) { return count_flops(graph, graph.input_shape()); }

/// 1 - pruned/baseline, or 0 for an empty baseline.
inline double pruned_fraction(std::uint64_t baseline, std::uint64_t pruned) {
  if (baseline == 0) return 0.0;
  return 1.0 - static_cast<double>(pruned) / static_cast<double>(baseline);
}

// ---------------------------------------------------------------------------
// Per-layer width report

struct WidthRow {
  std::string layer;  // producer layer name
  std::size_t width = 0;
  std::size_t width_pruned = 0;
  double channels_pruned = 0.0;
  double params_pruned = 0.0;
  double flops_pruned = 0.0;
};

struct WidthReport {
  std::vector<WidthRow> rows;
  WidthRow total;
};

/// Compares every prunable layer of `baseline` with the same-named layer of
/// `pruned`. Totals cover the whole network.
inline WidthReport width_report(const NetworkGraph& baseline, const NetworkGraph& pruned,
                                const CountOptions& options = {}) {
  const auto base_res = analyze_resources(baseline, baseline.input_shape(), options);
  const auto pr_res = analyze_resources(pruned, pruned.input_shape(), options);
  const auto base_groups = channel_groups(baseline);
  const auto pr_groups = channel_groups(pruned);
  WidthReport rep;
  rep.total.layer = "Total";
  for (const auto& g : base_groups) {
    const auto it = std::find_if(pr_groups.begin(), pr_groups.end(),
                                 [&](const ChannelGroup& p) { return p.producer_layer_name == g.producer_layer_name; });
    if (it == pr_groups.end()) throw ConfigError("pruned network lacks layer '" + g.producer_layer_name + "'");
    WidthRow row;
    row.layer = g.producer_layer_name;
    row.width = g.channel_count;
    row.width_pruned = it->channel_count;
    row.channels_pruned = pruned_fraction(row.width, row.width_pruned);
    const auto& b = base_res.layer(g.producer_layer_name);
    const auto& p = pr_res.layer(g.producer_layer_name);
    row.params_pruned = pruned_fraction(b.params, p.params);
    row.flops_pruned = pruned_fraction(b.flops, p.flops);
    rep.total.width += row.width;
    rep.total.width_pruned += row.width_pruned;
    rep.rows.push_back(row);
  }
  rep.total.channels_pruned = pruned_fraction(rep.total.width, rep.total.width_pruned);
  rep.total.params_pruned = pruned_fraction(base_res.total_params, pr_res.total_params);
  rep.total.flops_pruned = pruned_fraction(base_res.total_flops, pr_res.total_flops);
  return rep;
}

inline void write_width_csv(std::ostream& os, const WidthReport& rep) {
  os << "layer,width,width_pruned,pruned_pct,params_pruned_pct,flops_pruned_pct\n";
  auto line = [&](const WidthRow& r) {
    os << r.layer << ',' << r.width << ',' << r.width_pruned << ',' << std::fixed << std::setprecision(1)
       << 100.0 * r.channels_pruned << ',' << 100.0 * r.params_pruned << ',' << 100.0 * r.flops_pruned << '\n';
    os.unsetf(std::ios::floatfield);
  };
  for (const auto& r : rep.rows) line(r);
  line(rep.total);
}

inline void write_resource_csv(std::ostream& os, const ResourceReport& rep) {
  os << "layer,kind,params,flops\n";
  for (const auto& l : rep.layers) os << l.name << ',' << kind_name(l.kind) << ',' << l.params << ',' << l.flops << '\n';
  os << "Total,," << rep.total_params << ',' << rep.total_flops << '\n';
}

// ---------------------------------------------------------------------------
// Scale-factor distributions

struct Histogram {
  double min = 0.0;
  double max = 0.0;
  std::vector<std::size_t> counts;

  double bin_width() const { return counts.empty() ? 0.0 : (max - min) / static_cast<double>(counts.size()); }
  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

/// Uniform bins over [min, max] of `values`; the last bin is closed.
inline Histogram histogram_of(const std::vector<double>& values, std::size_t bins) {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  h.min = *lo;
  h.max = *hi;
  const double width = h.max - h.min;
  for (double v : values) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>((v - h.min) / width * static_cast<double>(bins));
      b = std::min(b, bins - 1);
    }
    ++h.counts[b];
  }
  return h;
}

inline std::vector<double> all_gammas(const NetworkGraph& graph) {
  std::vector<double> out;
  for (const auto& l : graph.layers()) {
    if (l.kind() != LayerKind::batchnorm) continue;
    const auto v = l.as<BatchNormParams>().gamma.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline Histogram gamma_histogram(const NetworkGraph& graph, std::size_t bins) {
  return histogram_of(all_gammas(graph), bins);
}

/// Fraction of all gammas with |gamma| below `cutoff`.
inline double near_zero_fraction(const NetworkGraph& graph, double cutoff = 0.01) {
  const auto g = all_gammas(graph);
  if (g.empty()) return 0.0;
  const auto n = std::count_if(g.begin(), g.end(), [&](double v) { return std::abs(v) < cutoff; });
  return static_cast<double>(n) / static_cast<double>(g.size());
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin,lower,upper,count\n";
  os << std::setprecision(10);
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double lo = h.min + h.bin_width() * static_cast<double>(b);
    os << b << ',' << lo << ',' << lo + h.bin_width() << ',' << h.counts[b] << '\n';
  }
}

/// |gamma| of one layer across snapshots: one row per snapshot, one column per
/// channel.
inline std::vector<std::vector<double>> gamma_trajectory(const std::vector<GammaSnapshot>& snapshots,
                                                         const std::string& layer) {
  std::vector<std::vector<double>> m;
  m.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    std::vector<double> row = s.layer(layer);
    for (double& v : row) v = std::abs(v);
    if (!m.empty() && row.size() != m.front().size()) throw ShapeError("trajectory: channel count changed");
    m.push_back(std::move(row));
  }
  return m;
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<std::vector<double>>& m) {
  os << "epoch";
  if (!m.empty()) {
    for (std::size_t c = 0; c < m.front().size(); ++c) os << ",ch" << c;
  }
  os << '\n' << std::setprecision(17);
  for (std::size_t e = 0; e < m.size(); ++e) {
    os << e;
    for (double v : m[e]) os << ',' << v;
    os << '\n';
  }
}

/// Per-epoch training log: epoch, lr, train_loss, penalty, val_error.
inline void write_epoch_csv(std::ostream& os, const TrainReport& report) {
  os << "epoch,lr,train_loss,penalty,val_error\n" << std::setprecision(17);
  for (const auto& e : report.epochs) {
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.penalty << ',';
    if (e.val_error) os << *e.val_error;
    os << '\n';
  }
}

/// Every snapshot flattened: snapshot index, layer, channel, gamma.
inline void write_snapshot_csv(std::ostream& os, const std::vector<GammaSnapshot>& snapshots) {
  os << "epoch,layer,channel,gamma\n" << std::setprecision(17);
  for (std::size_t e = 0; e < snapshots.size(); ++e) {
    const auto& s = snapshots[e];
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      for (std::size_t c = 0; c < s.gammas[l].size(); ++c) {
        os << e << ',' << s.layers[l] << ',' << c << ',' << s.gammas[l][c] << '\n';
      }
    }
  }
}

/// Inverse of write_snapshot_csv.
inline std::vector<GammaSnapshot> read_snapshot_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "epoch,layer,channel,gamma") {
    throw ConfigError("snapshot file: missing 'epoch,layer,channel,gamma' header");
  }
  std::vector<GammaSnapshot> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string e, layer, c, g;
    std::getline(ss, e, ',');
    std::getline(ss, layer, ',');
    std::getline(ss, c, ',');
    std::getline(ss, g);
    std::size_t epoch = 0, channel = 0;
    double gamma = 0.0;
    try {
      epoch = std::stoul(e);
      channel = std::stoul(c);
      gamma = std::stod(g);
    } catch (const std::exception&) {
      throw ConfigError("snapshot file: bad row at line " + std::to_string(lineno));
    }
    if (epoch > out.size()) throw ConfigError("snapshot file: epochs out of order at line " + std::to_string(lineno));
    if (epoch == out.size()) out.emplace_back();
    auto& s = out[epoch];
    if (s.layers.empty() || s.layers.back() != layer) {
      s.layers.push_back(layer);
      s.gammas.emplace_back();
    }
    if (channel != s.gammas.back().size()) {
      throw ConfigError("snapshot file: channels out of order at line " + std::to_string(lineno));
    }
    s.gammas.back().push_back(gamma);
  }
  return out;
}

}  // namespace slimnet

#endif  // SLIMNET_ANALYZER_HPP
