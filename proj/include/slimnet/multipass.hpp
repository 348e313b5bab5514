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

#ifndef SLIMNET_MULTIPASS_HPP
#define SLIMNET_MULTIPASS_HPP

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "slimnet/analyzer.hpp"
#include "slimnet/model_io.hpp"
#include "slimnet/pruner.hpp"
#include "slimnet/sparsity.hpp"

namespace slimnet {

struct MultipassConfig {
  int iterations = 1;
  PruneConfig prune = [] {
    PruneConfig p;
    p.percentile_t = 0.5;
    p.per_layer_cap = 0.5;
    return p;
  }();
  TrainConfig train{};                 // sparsity training for every iteration
  std::optional<TrainConfig> finetune; // defaults to `train` with lambda = 0
  std::optional<double> stop_on_error_rise;  // stop once fine-tuned error exceeds baseline by this much
  std::optional<double> baseline_error;      // reference for the early stop; else iteration 1's trained error
  bool recalibrate_after_prune = false;      // re-estimate running statistics of the pruned model
  CountOptions counts{};

  void validate() const {
    if (iterations < 1) throw ConfigError("multipass: iterations must be >= 1");
    prune.validate();
    train.validate();
    if (finetune) finetune->validate();
    if (stop_on_error_rise && !(*stop_on_error_rise >= 0.0)) throw ConfigError("multipass: error margin must be >= 0");
  }

  TrainConfig finetune_config() const {
    TrainConfig ft = finetune.value_or(train);
    ft.lambda = 0.0;
    return ft;
  }
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  double trained_error = 0.0;    // after sparsity training, before pruning
  double pruned_error = 0.0;     // after pruning, before fine-tuning
  double finetuned_error = 0.0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  double params_pruned = 0.0;    // cumulative, against the iteration-0 model
  double flops_pruned = 0.0;
  std::size_t channels = 0;
};

struct MultipassResult {
  NetworkGraph baseline;
  std::uint64_t baseline_params = 0;
  std::uint64_t baseline_flops = 0;
  std::vector<IterationRecord> records;
  std::vector<NetworkGraph> graphs;  // fine-tuned model of every iteration
  std::vector<PrunePlan> plans;
  std::vector<TrainReport> train_reports;
  std::vector<TrainReport> finetune_reports;
  bool stopped_early = false;

  const NetworkGraph& final_graph() const { return graphs.empty() ? baseline : graphs.back(); }
};

/// Raised when an iteration fails; carries the 1-based iteration index.
class MultipassError : public Error {
 public:
  MultipassError(int iteration, const std::string& what)
      : Error("multipass iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

using IterationCallback = std::function<void(const IterationRecord&, const NetworkGraph&, const PrunePlan&)>;

/// Repeats sparsity training, pruning and fine-tuning, each iteration warm
/// starting from the previous fine-tuned model. Errors are measured on
/// `eval_set`. Training seeds advance by one per iteration.
inline MultipassResult run_multipass(const NetworkGraph& initial, const Dataset& train_set, const Dataset& eval_set,
                                     const MultipassConfig& config, const IterationCallback& on_iteration = {}) {
  config.validate();
  MultipassResult res{initial, count_params(initial, config.counts), count_flops(initial), {}, {}, {}, {}, {}, false};
  NetworkGraph current = initial;
  std::optional<double> baseline_error = config.baseline_error;

  for (int it = 1; it <= config.iterations; ++it) {
    try {
      TrainConfig tc = config.train;
      tc.seed = config.train.seed + static_cast<std::uint64_t>(it - 1);
      res.train_reports.push_back(train(current, train_set, tc));

      IterationRecord rec;
      rec.iteration = it;
      rec.trained_error = evaluate(current, eval_set, tc.conv_algo);
      if (!baseline_error) baseline_error = rec.trained_error;

      PrunePlan plan = build_prune_plan(current, config.prune);
      NetworkGraph pruned = apply_prune(current, plan);
      if (config.recalibrate_after_prune) recalibrate_batchnorm(pruned, train_set, tc.batch_size, 0, tc.conv_algo);
      rec.pruned_error = evaluate(pruned, eval_set, tc.conv_algo);

      TrainConfig ft = config.finetune_config();
      ft.seed = ft.seed + static_cast<std::uint64_t>(it - 1);
      res.finetune_reports.push_back(fine_tune(pruned, train_set, ft));
      rec.finetuned_error = evaluate(pruned, eval_set, ft.conv_algo);

      rec.params = count_params(pruned, config.counts);
      rec.flops = count_flops(pruned);
      rec.params_pruned = pruned_fraction(res.baseline_params, rec.params);
      rec.flops_pruned = pruned_fraction(res.baseline_flops, rec.flops);
      for (const auto& g : channel_groups(pruned)) rec.channels += g.channel_count;

      if (on_iteration) on_iteration(rec, pruned, plan);
      res.records.push_back(rec);
      res.plans.push_back(std::move(plan));
      res.graphs.push_back(pruned);
      current = std::move(pruned);

      if (config.stop_on_error_rise && rec.finetuned_error > *baseline_error + *config.stop_on_error_rise) {
        res.stopped_early = it < config.iterations;
        break;
      }
    } catch (const MultipassError&) {
      throw;
    } catch (const std::exception& e) {
      throw MultipassError(it, e.what());
    }
  }
  return res;
}

/// Summary with the columns trained / pruned / fine-tuned error and
/// cumulative params / FLOPs pruned.
inline void write_multipass_csv(std::ostream& os, const MultipassResult& res) {
  os << "iteration,trained_error,pruned_error,finetuned_error,params,flops,params_pruned,flops_pruned,channels\n"
     << std::setprecision(17);
  for (const auto& r : res.records) {
    os << r.iteration << ',' << r.trained_error << ',' << r.pruned_error << ',' << r.finetuned_error << ',' << r.params
       << ',' << r.flops << ',' << r.params_pruned << ',' << r.flops_pruned << ',' << r.channels << '\n';
  }
}

/// One model and one plan file per iteration plus summary.csv.
inline void write_multipass_outputs(const std::filesystem::path& dir, const MultipassResult& res) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < res.graphs.size(); ++i) {
    const std::string stem = "iter" + std::to_string(i + 1);
    save_model(res.graphs[i], dir / (stem + ".nslm"));
    std::ofstream plan(dir / (stem + "_plan.json"));
    plan << plan_to_json(res.plans[i]).dump(2) << '\n';
  }
  std::ofstream csv(dir / "summary.csv");
  write_multipass_csv(csv, res);
}

}  // namespace slimnet

#endif  // SLIMNET_MULTIPASS_HPP
