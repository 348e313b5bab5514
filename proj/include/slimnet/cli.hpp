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

#ifndef SLIMNET_CLI_HPP
#define SLIMNET_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "slimnet/analyzer.hpp"
#include "slimnet/dataset.hpp"
#include "slimnet/model_io.hpp"
#include "slimnet/multipass.hpp"
#include "slimnet/network.hpp"
#include "slimnet/pruner.hpp"
#include "slimnet/sparsity.hpp"

namespace slimnet {

inline constexpr const char* kSlimnetVersion = "0.1.0";

/// Dataset selection shared by every command that touches data.
struct DataOptions {
  std::string source = "mnist";  // mnist | synthetic
  std::string dir;               // MNIST directory; falls back to $SLIMNET_DATA_DIR
  std::size_t val_size = 0;      // held out of the training split
  std::uint64_t split_seed = 0;
  std::size_t downscale = 1;
  std::size_t train_limit = 0;   // 0 = all
  std::size_t test_limit = 0;
  std::size_t synthetic_classes = 4;
  std::size_t synthetic_per_class = 64;
  std::string synthetic_shape = "1x8x8";
  std::uint64_t synthetic_seed = 0;
  double synthetic_margin = 4.0;
};

struct DataBundle {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Parses "1x28x28" or "784".
inline Shape parse_shape(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, 'x')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      throw ConfigError("bad shape '" + text + "'");
    }
    if (pos != tok.size() || v == 0) throw ConfigError("bad shape '" + text + "'");
    s.push_back(v);
  }
  if (s.empty()) throw ConfigError("bad shape '" + text + "'");
  return s;
}

/// Loads the train/validation/test splits described by `opt`.
inline DataBundle load_data(const DataOptions& opt) {
  DataBundle b;
  Dataset full_train;
  if (opt.source == "mnist") {
    const MnistFiles files(resolve_data_dir(opt.dir));
    full_train = load_idx(files.train_images, files.train_labels, kMnistNormalization);
    b.test = load_idx(files.test_images, files.test_labels, kMnistNormalization);
  } else if (opt.source == "synthetic") {
    const std::size_t test_per_class = std::max<std::size_t>(1, opt.synthetic_per_class / 4);
    const Dataset all = synthetic_blobs(opt.synthetic_classes, opt.synthetic_per_class + test_per_class,
                                        parse_shape(opt.synthetic_shape), opt.synthetic_seed, opt.synthetic_margin);
    auto [tr, te] = split_validation(all, test_per_class * opt.synthetic_classes, opt.synthetic_seed + 1);
    full_train = std::move(tr);
    b.test = std::move(te);
  } else {
    throw ConfigError("unknown data source '" + opt.source + "'");
  }
  if (opt.downscale > 1) {
    full_train = downscale(full_train, opt.downscale);
    b.test = downscale(b.test, opt.downscale);
  }
  if (opt.val_size > 0) {
    auto [tr, va] = split_validation(full_train, opt.val_size, opt.split_seed);
    b.train = std::move(tr);
    b.val = std::move(va);
  } else {
    b.train = std::move(full_train);
  }
  if (opt.train_limit && opt.train_limit < b.train.size()) b.train = b.train.slice(0, opt.train_limit);
  if (opt.test_limit && opt.test_limit < b.test.size()) b.test = b.test.slice(0, opt.test_limit);
  return b;
}

/// Builds and initializes the network named by `arch` for data of
/// `sample_shape` and `classes`; the CLI train command does exactly this.
inline NetworkGraph make_initialized(const std::string& arch, const Shape& sample_shape, std::size_t classes,
                                     std::uint64_t seed, double gamma_init) {
  NetworkGraph g = parse_architecture(arch, sample_shape, classes);
  Rng rng(seed);
  initialize_parameters(g, rng, gamma_init);
  return g;
}

namespace cli_detail {

struct TrainFlags {
  double lambda = 0.0;
  std::string penalty = "l1";
  double delta = 0.1;
  int epochs = 1;
  std::size_t batch_size = 64;
  double lr = 0.1;
  std::vector<double> milestones{0.5, 0.75};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double gamma_init = 0.5;
  std::uint64_t seed = 0;
  std::string conv_algo = "im2col";
  std::size_t augment_pad = 0;
  bool mirror = false;

  TrainConfig config() const {
    TrainConfig c;
    c.lambda = lambda;
    if (penalty == "l1") {
      c.penalty.kind = PenaltyKind::l1;
    } else if (penalty == "smooth-l1") {
      c.penalty.kind = PenaltyKind::smooth_l1;
    } else if (penalty == "none") {
      c.penalty.kind = PenaltyKind::none;
    } else {
      throw ConfigError("unknown penalty '" + penalty + "'");
    }
    c.penalty.delta = delta;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.lr0 = lr;
    c.milestones = milestones;
    c.momentum = momentum;
    c.weight_decay = weight_decay;
    c.gamma_init = gamma_init;
    c.seed = seed;
    c.conv_algo = conv_algo == "direct" ? ConvAlgo::direct : ConvAlgo::im2col;
    if (augment_pad > 0 || mirror) c.augment = AugmentConfig{augment_pad, mirror};
    c.validate();
    return c;
  }

  nlohmann::ordered_json to_json() const {
    return {{"lambda", lambda},         {"penalty", penalty},   {"delta", delta},
            {"epochs", epochs},         {"batch_size", batch_size}, {"lr", lr},
            {"milestones", milestones}, {"momentum", momentum}, {"weight_decay", weight_decay},
            {"gamma_init", gamma_init}, {"seed", seed},         {"conv_algo", conv_algo},
            {"augment_pad", augment_pad}, {"mirror", mirror}};
  }
};

struct PruneFlags {
  double percent = 0.5;
  std::optional<double> per_layer_cap;
  std::optional<double> per_group_ratio;
  std::size_t min_keep = 1;
  bool signed_gamma = false;
  bool absorb_bias = false;

  PruneConfig config() const {
    PruneConfig c;
    c.percentile_t = percent;
    c.per_layer_cap = per_layer_cap;
    c.per_group_ratio = per_group_ratio;
    c.min_keep = min_keep;
    c.magnitude = !signed_gamma;
    c.absorb_bias = absorb_bias;
    c.validate();
    return c;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j{{"percent", percent}, {"min_keep", min_keep}, {"signed", signed_gamma},
                             {"absorb_bias", absorb_bias}};
    j["per_layer_cap"] = per_layer_cap ? nlohmann::ordered_json(*per_layer_cap) : nlohmann::ordered_json(nullptr);
    j["per_group_ratio"] = per_group_ratio ? nlohmann::ordered_json(*per_group_ratio) : nlohmann::ordered_json(nullptr);
    return j;
  }
};

inline nlohmann::ordered_json data_json(const DataOptions& d) {
  nlohmann::ordered_json j{{"source", d.source}, {"val_size", d.val_size}, {"split_seed", d.split_seed},
                           {"downscale", d.downscale}, {"train_limit", d.train_limit}, {"test_limit", d.test_limit}};
  if (d.source == "mnist") {
    j["dir"] = resolve_data_dir(d.dir).string();
  } else {
    j["classes"] = d.synthetic_classes;
    j["per_class"] = d.synthetic_per_class;
    j["shape"] = d.synthetic_shape;
    j["seed"] = d.synthetic_seed;
    j["margin"] = d.synthetic_margin;
  }
  return j;
}

inline void add_data_flags(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.source, "Dataset: mnist or synthetic")->check(CLI::IsMember({"mnist", "synthetic"}));
  cmd->add_option("--data-dir", d.dir, "MNIST directory (default $SLIMNET_DATA_DIR)");
  cmd->add_option("--val-size", d.val_size, "Examples held out of training for validation");
  cmd->add_option("--split-seed", d.split_seed, "Seed of the validation split");
  cmd->add_option("--downscale", d.downscale, "Average-pool images by this factor")->check(CLI::PositiveNumber);
  cmd->add_option("--train-limit", d.train_limit, "Use only the first N training examples");
  cmd->add_option("--test-limit", d.test_limit, "Use only the first N test examples");
  cmd->add_option("--synthetic-classes", d.synthetic_classes, "Synthetic: class count");
  cmd->add_option("--synthetic-per-class", d.synthetic_per_class, "Synthetic: training examples per class");
  cmd->add_option("--synthetic-shape", d.synthetic_shape, "Synthetic: sample shape CxHxW");
  cmd->add_option("--synthetic-seed", d.synthetic_seed, "Synthetic: generator seed");
  cmd->add_option("--synthetic-margin", d.synthetic_margin, "Synthetic: class separation");
}

inline void add_train_flags(CLI::App* cmd, TrainFlags& t, bool with_lambda) {
  if (with_lambda) {
    cmd->add_option("--lambda", t.lambda, "Sparsity penalty weight");
    cmd->add_option("--penalty", t.penalty, "Penalty: l1, smooth-l1 or none")
        ->check(CLI::IsMember({"l1", "smooth-l1", "none"}));
    cmd->add_option("--delta", t.delta, "Smooth-L1 transition width");
  }
  cmd->add_option("--epochs", t.epochs, "Training epochs");
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size");
  cmd->add_option("--lr", t.lr, "Initial learning rate");
  cmd->add_option("--milestones", t.milestones, "Fractions of the epochs at which lr drops 10x")->delimiter(',');
  cmd->add_option("--momentum", t.momentum, "Nesterov momentum");
  cmd->add_option("--weight-decay", t.weight_decay, "Weight decay on conv/linear weights");
  cmd->add_option("--seed", t.seed, "Seed for initialization and shuffling");
  cmd->add_option("--conv-algo", t.conv_algo, "Convolution kernel: direct or im2col")
      ->check(CLI::IsMember({"direct", "im2col"}));
  cmd->add_option("--augment-pad", t.augment_pad, "Random-shift padding");
  cmd->add_flag("--mirror", t.mirror, "Random horizontal mirroring");
}

inline void add_prune_flags(CLI::App* cmd, PruneFlags& p) {
  cmd->add_option("--percent", p.percent, "Global fraction of channels to prune");
  cmd->add_option("--per-layer-cap", p.per_layer_cap, "Prune at most this fraction of any layer");
  cmd->add_option("--per-group-ratio", p.per_group_ratio, "Prune exactly this fraction of every layer");
  cmd->add_option("--min-keep", p.min_keep, "Channels every layer keeps")->check(CLI::PositiveNumber);
  cmd->add_flag("--signed", p.signed_gamma, "Rank by signed gamma instead of |gamma|");
  cmd->add_flag("--absorb-bias", p.absorb_bias, "Fold pruned channels' constant output into consumer biases");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ModelFormatError(ModelFormatError::Kind::io, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ModelFormatError(ModelFormatError::Kind::io, "cannot write '" + path.string() + "'");
  return out;
}

inline void save_with_dirs(const NetworkGraph& g, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_model(g, path);
}

inline std::filesystem::path manifest_path(const std::filesystem::path& out) {
  return std::filesystem::path(out.string() + ".manifest.json");
}

inline nlohmann::ordered_json manifest(const std::string& command, const std::vector<std::string>& args) {
  return {{"tool", "slimnet"}, {"version", kSlimnetVersion}, {"command", command}, {"argv", args}};
}

inline std::string error_kind(const std::exception& e) {
  if (const auto* m = dynamic_cast<const ModelFormatError*>(&e)) {
    switch (m->kind()) {
      case ModelFormatError::Kind::io: return "io";
      case ModelFormatError::Kind::checksum: return "model-checksum";
      case ModelFormatError::Kind::bad_magic: return "model-magic";
      case ModelFormatError::Kind::version: return "model-version";
      case ModelFormatError::Kind::unknown_kind: return "model-kind";
      case ModelFormatError::Kind::malformed: return "model-malformed";
    }
  }
  if (const auto* d = dynamic_cast<const DataFormatError*>(&e)) {
    switch (d->kind()) {
      case DataFormatError::Kind::io: return "io";
      case DataFormatError::Kind::bad_magic: return "data-magic";
      case DataFormatError::Kind::truncated: return "data-truncated";
      case DataFormatError::Kind::count_mismatch: return "data-count";
    }
  }
  if (dynamic_cast<const MultipassError*>(&e)) return "multipass";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "io";
  return "internal";
}

inline std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace cli_detail

/// Runs one pipeline stage. `args` excludes the program name. Returns 0 on
/// success, 1 on a runtime failure (one "error: <kind>: <message>" line on
/// `err`) and 2 on a usage error.
inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  using namespace cli_detail;
  namespace fs = std::filesystem;

  CLI::App app{"slimnet: train, prune, fine-tune and analyze channel-slimmed networks", "slimnet"};
  app.require_subcommand(1, 1);

  DataOptions data;
  TrainFlags tf;
  PruneFlags pf;
  std::string arch, model, out_path, plan_out, log_path, snapshots_path, out_dir, baseline_path, input_shape,
      report_path, hist_path, trajectory_path, layer_name, split = "test";
  int iterations = 1;
  std::optional<int> finetune_epochs;
  std::optional<double> stop_rise;
  std::size_t bins = 20;
  bool exclude_bn = false, recalibrate = false;

  auto* train_cmd = app.add_subcommand("train", "Train from scratch with the sparsity penalty");
  train_cmd->add_option("--arch", arch, "Architecture, e.g. mlp:784-500-300-10 or conv:16,P,32")->required();
  train_cmd->add_option("--gamma-init", tf.gamma_init, "Initial batchnorm scale");
  train_cmd->add_option("--out", out_path, "Output model file")->required();
  train_cmd->add_option("--log", log_path, "Per-epoch CSV log");
  train_cmd->add_option("--snapshots", snapshots_path, "Per-epoch gamma snapshot CSV");
  add_train_flags(train_cmd, tf, true);
  add_data_flags(train_cmd, data);

  auto* prune_cmd = app.add_subcommand("prune", "Prune channels by batchnorm scale");
  prune_cmd->add_option("--model", model, "Input model file")->required();
  prune_cmd->add_option("--plan-out", plan_out, "Write the prune plan as JSON");
  prune_cmd->add_option("--out", out_path, "Output model file")->required();
  prune_cmd->add_flag("--recalibrate", recalibrate, "Re-estimate batchnorm running statistics on training data");
  add_prune_flags(prune_cmd, pf);
  add_data_flags(prune_cmd, data);

  auto* ft_cmd = app.add_subcommand("finetune", "Retrain a model without the sparsity penalty");
  ft_cmd->add_option("--model", model, "Input model file")->required();
  ft_cmd->add_option("--out", out_path, "Output model file")->required();
  ft_cmd->add_option("--log", log_path, "Per-epoch CSV log");
  add_train_flags(ft_cmd, tf, false);
  add_data_flags(ft_cmd, data);

  auto* mp_cmd = app.add_subcommand("multipass", "Iterate train / prune / fine-tune");
  auto* mp_arch = mp_cmd->add_option("--arch", arch, "Architecture for a fresh start");
  auto* mp_model = mp_cmd->add_option("--model", model, "Start from this model");
  mp_arch->excludes(mp_model);
  mp_cmd->add_option("--iterations", iterations, "Iterations")->check(CLI::PositiveNumber);
  mp_cmd->add_option("--finetune-epochs", finetune_epochs, "Fine-tuning epochs per iteration (default --epochs)");
  mp_cmd->add_option("--stop-on-error-rise", stop_rise, "Stop once fine-tuned error exceeds baseline by this much");
  mp_cmd->add_option("--gamma-init", tf.gamma_init, "Initial batchnorm scale");
  mp_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  add_train_flags(mp_cmd, tf, true);
  add_prune_flags(mp_cmd, pf);
  add_data_flags(mp_cmd, data);

  auto* an_cmd = app.add_subcommand("analyze", "Parameter/FLOP report and gamma exports");
  an_cmd->add_option("--model", model, "Model file")->required();
  an_cmd->add_option("--baseline", baseline_path, "Unpruned model for the per-layer width report");
  an_cmd->add_option("--input-shape", input_shape, "Per-sample input shape, e.g. 1x28x28");
  an_cmd->add_flag("--exclude-bn", exclude_bn, "Do not count batchnorm gamma/beta as parameters");
  an_cmd->add_option("--report", report_path, "Write the resource (or width) CSV here");
  an_cmd->add_option("--hist", hist_path, "Write a gamma histogram CSV here");
  an_cmd->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);
  an_cmd->add_option("--trajectory", trajectory_path, "Write a |gamma| epoch-by-channel CSV here");
  an_cmd->add_option("--snapshots", snapshots_path, "Snapshot CSV written by train (for --trajectory)");
  an_cmd->add_option("--layer", layer_name, "Batchnorm layer for --trajectory (default: first)");

  auto* ev_cmd = app.add_subcommand("eval", "Classification error of a model");
  ev_cmd->add_option("--model", model, "Model file")->required();
  ev_cmd->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev_cmd->add_option("--conv-algo", tf.conv_algo, "Convolution kernel: direct or im2col")
      ->check(CLI::IsMember({"direct", "im2col"}));
  add_data_flags(ev_cmd, data);

  std::vector<const char*> argv{"slimnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n' << app.help();
    return 2;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    auto man = manifest(command, args);

    if (command == "train") {
      const TrainConfig cfg = tf.config();
      const DataBundle d = load_data(data);
      NetworkGraph g = make_initialized(arch, d.train.sample_shape(), d.train.classes, tf.seed, tf.gamma_init);
      const auto rep = train(g, d.train, cfg, d.val.size() ? &d.val : nullptr, &d.test);
      save_with_dirs(g, out_path);
      if (!log_path.empty()) {
        auto os = open_out(log_path);
        write_epoch_csv(os, rep);
      }
      if (!snapshots_path.empty()) {
        auto os = open_out(snapshots_path);
        write_snapshot_csv(os, rep.snapshots);
      }
      man["arch"] = arch;
      man["train"] = tf.to_json();
      man["data"] = data_json(data);
      man["result"] = {{"test_error", rep.test_error.value_or(-1.0)},
                       {"val_error", rep.epochs.empty() || !rep.epochs.back().val_error ? -1.0
                                                                                         : *rep.epochs.back().val_error}};
      write_json(manifest_path(out_path), man);
      out << "test_error=" << rep.test_error.value_or(-1.0) << " params=" << count_params(g) << '\n';
    } else if (command == "prune") {
      const PruneConfig cfg = pf.config();
      const NetworkGraph g = load_model(model);
      const PrunePlan plan = build_prune_plan(g, cfg);
      NetworkGraph pruned = apply_prune(g, plan);
      if (recalibrate) {
        const DataBundle d = load_data(data);
        recalibrate_batchnorm(pruned, d.train, 256, 0, ConvAlgo::im2col);
        man["data"] = data_json(data);
      }
      save_with_dirs(pruned, out_path);
      if (!plan_out.empty()) write_json(plan_out, plan_to_json(plan));
      man["model"] = model;
      man["prune"] = pf.to_json();
      man["recalibrate"] = recalibrate;
      man["result"] = plan_to_json(plan);
      write_json(manifest_path(out_path), man);
      out << "pruned_channels=" << plan.total_pruned() << '/' << plan.total_channels()
          << " params=" << count_params(pruned) << " flops=" << count_flops(pruned) << '\n';
    } else if (command == "finetune") {
      TrainFlags ft = tf;
      ft.lambda = 0.0;
      const TrainConfig cfg = ft.config();
      const DataBundle d = load_data(data);
      NetworkGraph g = load_model(model);
      const auto rep = fine_tune(g, d.train, cfg, d.val.size() ? &d.val : nullptr, &d.test);
      save_with_dirs(g, out_path);
      if (!log_path.empty()) {
        auto os = open_out(log_path);
        write_epoch_csv(os, rep);
      }
      man["model"] = model;
      man["train"] = ft.to_json();
      man["data"] = data_json(data);
      man["result"] = {{"test_error", rep.test_error.value_or(-1.0)}};
      write_json(manifest_path(out_path), man);
      out << "test_error=" << rep.test_error.value_or(-1.0) << '\n';
    } else if (command == "multipass") {
      if (arch.empty() && model.empty()) throw ConfigError("multipass needs --arch or --model");
      MultipassConfig mc;
      mc.iterations = iterations;
      mc.train = tf.config();
      PruneFlags mpf = pf;
      if (mp_cmd->count("--per-layer-cap") == 0) mpf.per_layer_cap = 0.5;
      mc.prune = mpf.config();
      if (finetune_epochs) {
        TrainConfig ftc = mc.train;
        ftc.epochs = *finetune_epochs;
        mc.finetune = ftc;
      }
      mc.stop_on_error_rise = stop_rise;
      const DataBundle d = load_data(data);
      const NetworkGraph start = model.empty()
                                     ? make_initialized(arch, d.train.sample_shape(), d.train.classes, tf.seed,
                                                        tf.gamma_init)
                                     : load_model(model);
      const Dataset& eval_set = d.val.size() ? d.val : d.test;
      const auto res = run_multipass(start, d.train, eval_set, mc);
      write_multipass_outputs(out_dir, res);
      man["arch"] = arch;
      man["model"] = model;
      man["iterations"] = iterations;
      man["train"] = tf.to_json();
      man["prune"] = mpf.to_json();
      man["finetune_epochs"] = finetune_epochs.value_or(tf.epochs);
      man["data"] = data_json(data);
      man["eval_split"] = d.val.size() ? "val" : "test";
      write_json(fs::path(out_dir) / "manifest.json", man);
      for (const auto& r : res.records) {
        out << "iteration=" << r.iteration << " trained_error=" << r.trained_error
            << " finetuned_error=" << r.finetuned_error << " params_pruned=" << r.params_pruned
            << " flops_pruned=" << r.flops_pruned << '\n';
      }
    } else if (command == "analyze") {
      const NetworkGraph g = load_model(model);
      const CountOptions co{!exclude_bn};
      const Shape shape = input_shape.empty() ? g.input_shape() : parse_shape(input_shape);
      const auto res = analyze_resources(g, shape, co);
      if (!report_path.empty()) {
        auto os = open_out(report_path);
        if (baseline_path.empty()) {
          write_resource_csv(os, res);
        } else {
          write_width_csv(os, width_report(load_model(baseline_path), g, co));
        }
      }
      if (!hist_path.empty()) {
        auto os = open_out(hist_path);
        write_histogram_csv(os, gamma_histogram(g, bins));
      }
      if (!trajectory_path.empty()) {
        if (snapshots_path.empty()) throw ConfigError("--trajectory needs --snapshots");
        std::ifstream is(snapshots_path);
        if (!is) throw ModelFormatError(ModelFormatError::Kind::io, "cannot open '" + snapshots_path + "'");
        const auto snaps = read_snapshot_csv(is);
        if (snaps.empty()) throw ConfigError("snapshot file is empty");
        const std::string layer = layer_name.empty() ? snaps.front().layers.at(0) : layer_name;
        auto os = open_out(trajectory_path);
        write_trajectory_csv(os, gamma_trajectory(snaps, layer));
      }
      out << "params=" << res.total_params << " flops=" << res.total_flops
          << " near_zero_gamma=" << near_zero_fraction(g) << '\n';
    } else if (command == "eval") {
      const NetworkGraph g = load_model(model);
      const DataBundle d = load_data(data);
      const Dataset& ds = split == "train" ? d.train : split == "val" ? d.val : d.test;
      if (ds.size() == 0) throw ConfigError("split '" + split + "' is empty (set --val-size for val)");
      out << "error=" << evaluate(g, ds, tf.conv_algo == "direct" ? ConvAlgo::direct : ConvAlgo::im2col) << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << error_kind(e) << ": " << one_line(e.what()) << '\n';
    return 1;
  }
}

}  // namespace slimnet

#endif  // SLIMNET_CLI_HPP
