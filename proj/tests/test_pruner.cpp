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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "slimnet/slimnet.hpp"

namespace slimnet {
namespace {

using testing::parameter_bytes;
using testing::random_input;
using testing::randomize_parameters;

/// Sets the gammas of group g (in layer order) to `values`.
void set_gammas(NetworkGraph& graph, std::size_t group, const std::vector<double>& values) {
  const auto groups = channel_groups(graph);
  auto& gamma = graph.layer(groups.at(group).bn_index).as<BatchNormParams>().gamma;
  ASSERT_EQ(gamma.size(), values.size());
  for (std::size_t c = 0; c < values.size(); ++c) gamma[c] = values[c];
}

double max_relative_difference(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale > 0.0 ? diff / scale : diff;
}

void expect_counts_match(const NetworkGraph& source, const PrunePlan& plan) {
  const NetworkGraph pruned = apply_prune(source, plan);
  EXPECT_EQ(plan.predicted_params, count_params(pruned));
  EXPECT_EQ(plan.predicted_params_no_bn, count_params(pruned, {.include_batchnorm = false}));
  EXPECT_EQ(plan.predicted_flops, count_flops(pruned));
}

// ---------------------------------------------------------------- threshold

TEST(ComputeThreshold, MedianSplitOfFourValues) {
  const std::vector<double> v{0.3, 0.1, 0.4, 0.2};
  EXPECT_EQ(compute_threshold(v, 0.5), 0.2);
  EXPECT_EQ(select_lowest(v, 0.5), (std::vector<std::uint8_t>{0, 1, 0, 1}));
}

TEST(ComputeThreshold, ZeroPercentileMarksNothing) {
  const std::vector<double> v{0.3, 0.1, 0.4};
  EXPECT_LT(compute_threshold(v, 0.0), 0.1);
  const auto m = select_lowest(v, 0.0);
  EXPECT_EQ(std::count(m.begin(), m.end(), 1), 0);
}

TEST(ComputeThreshold, SortAndCountOracleOnRandomValues) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor t = testing::random_tensor({1000}, rng, 0.0, 1.0);
    const std::vector<double> v(t.values().begin(), t.values().end());
    const double thr = compute_threshold(v, 0.7);
    const auto marked = select_lowest(v, 0.7);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(thr, sorted[699]);
    EXPECT_EQ(std::count(marked.begin(), marked.end(), 1), 700);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(marked[i] == 1, v[i] <= thr);
  }
}

TEST(ComputeThreshold, TiesKeepTheLowerIndex) {
  const std::vector<double> v(10, 0.5);
  const auto m = select_lowest(v, 0.3);
  EXPECT_EQ(m, (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 1, 1, 1}));
}

TEST(ComputeThreshold, RejectsEmptyInputAndBadPercentile) {
  EXPECT_THROW(compute_threshold({}, 0.5), ConfigError);
  EXPECT_THROW(compute_threshold({1.0}, 1.0), ConfigError);
  EXPECT_THROW(compute_threshold({1.0}, -0.1), ConfigError);
}

// ---------------------------------------------------------------- planning

TEST(BuildPrunePlan, ZeroPercentileGivesIdentityPlanWithCurrentCounts) {
  Rng rng(2);
  NetworkGraph g = testing::random_graph(rng, 2);
  randomize_parameters(g, rng);
  PruneConfig cfg;
  cfg.percentile_t = 0.0;
  const PrunePlan plan = build_prune_plan(g, cfg);
  EXPECT_EQ(plan.total_pruned(), 0u);
  EXPECT_EQ(plan.predicted_params, count_params(g));
  EXPECT_EQ(plan.predicted_flops, count_flops(g));
}

TEST(BuildPrunePlan, PerGroupRatioOnTableFourMlpKeepsOneHundredAndSixty) {
  NetworkGraph g = build_mlp({784, 500, 300, 10});
  Rng rng(3);
  initialize_parameters(g, rng);
  randomize_parameters(g, rng);
  PruneConfig cfg;
  cfg.per_group_ratio = 0.8;
  const PrunePlan plan = build_prune_plan(g, cfg);
  ASSERT_EQ(plan.groups.size(), 2u);
  EXPECT_EQ(plan.groups[0].kept(), 100u);
  EXPECT_EQ(plan.groups[1].kept(), 60u);
  const NetworkGraph pruned = apply_prune(g, plan);
  EXPECT_EQ(pruned.layer(0).as<LinearParams>().weights.shape(), (Shape{100, 784}));
  EXPECT_EQ(pruned.layer(3).as<LinearParams>().weights.shape(), (Shape{60, 100}));
  EXPECT_EQ(pruned.layer(6).as<LinearParams>().weights.shape(), (Shape{10, 60}));
  const auto base = count_params(g, {.include_batchnorm = false});
  const auto after = count_params(pruned, {.include_batchnorm = false});
  EXPECT_EQ(base, 545'810u);
  EXPECT_EQ(after, 85'170u);
  EXPECT_EQ(plan.predicted_params_no_bn, 85'170u);
  EXPECT_EQ(std::round(pruned_fraction(base, after) * 1000.0) / 10.0, 84.4);
}

TEST(BuildPrunePlan, PerGroupRatioPrunesTheSmallestOfEachGroup) {
  NetworkGraph g = build_mlp({3, 5, 4, 2});
  set_gammas(g, 0, {0.5, -0.1, 0.3, 0.05, 0.9});
  set_gammas(g, 1, {2.0, 1.0, 3.0, 4.0});
  PruneConfig cfg;
  cfg.per_group_ratio = 0.5;
  const PrunePlan plan = build_prune_plan(g, cfg);
  EXPECT_EQ(plan.groups[0].keep, (std::vector<std::uint8_t>{1, 0, 1, 0, 1}));
  EXPECT_EQ(plan.groups[1].keep, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(plan.threshold, 2.0);
}

TEST(BuildPrunePlan, CapOfHalfOnTenWithEightMarkedPrunesTheFiveSmallest) {
  NetworkGraph g = build_mlp({3, 10, 10, 2});
  // Group 0: eight small values and two large ones. Group 1: all mid-range.
  const std::vector<double> small{0.05, 0.02, 0.9, 0.07, 0.01, 0.08, 0.95, 0.03, 0.06, 0.04};
  set_gammas(g, 0, small);
  set_gammas(g, 1, {0.50, 0.51, 0.52, 0.53, 0.54, 0.55, 0.56, 0.57, 0.58, 0.59});
  PruneConfig cfg;
  cfg.percentile_t = 0.4;  // k = 8: exactly the eight small values of group 0
  EXPECT_EQ(build_prune_plan(g, cfg).groups[0].pruned(), 8u);
  cfg.per_layer_cap = 0.5;
  const PrunePlan plan = build_prune_plan(g, cfg);
  EXPECT_EQ(plan.groups[0].pruned(), 5u);
  EXPECT_EQ(plan.groups[1].pruned(), 0u);
  // Five smallest: 0.01, 0.02, 0.03, 0.04, 0.05 at indices 4, 1, 7, 9, 0.
  EXPECT_EQ(plan.groups[0].keep, (std::vector<std::uint8_t>{0, 0, 1, 1, 0, 1, 1, 0, 1, 0}));
}

TEST(BuildPrunePlan, MinKeepProtectsAGroupWhollyBelowThreshold) {
  NetworkGraph g = build_mlp({3, 4, 6, 2});
  set_gammas(g, 0, {0.001, 0.002, 0.003, 0.004});
  set_gammas(g, 1, {1, 2, 3, 4, 5, 6});
  PruneConfig cfg;
  cfg.percentile_t = 0.4;  // k = 4: all of group 0
  EXPECT_EQ(build_prune_plan(g, cfg).groups[0].kept_indices(), (std::vector<std::size_t>{3}));
  cfg.min_keep = 2;
  EXPECT_EQ(build_prune_plan(g, cfg).groups[0].kept_indices(), (std::vector<std::size_t>{2, 3}));
}

TEST(BuildPrunePlan, MagnitudeFlagSelectsSignedOrAbsoluteRanking) {
  NetworkGraph g = build_mlp({3, 4, 2});
  set_gammas(g, 0, {-0.9, 0.1, 0.5, -0.05});
  PruneConfig cfg;
  cfg.percentile_t = 0.5;
  EXPECT_EQ(build_prune_plan(g, cfg).groups[0].keep, (std::vector<std::uint8_t>{1, 0, 1, 0}));
  cfg.magnitude = false;
  EXPECT_EQ(build_prune_plan(g, cfg).groups[0].keep, (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(BuildPrunePlan, ExactCountWithoutBindingConstraints) {
  Rng rng(4);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    NetworkGraph g = testing::random_graph(rng, trial);
    randomize_parameters(g, rng);
    PruneConfig cfg;
    cfg.percentile_t = 0.1 + 0.8 * static_cast<double>(rng() % 100) / 100.0;
    const auto all = all_gammas(g);
    std::vector<double> mags;
    for (double v : all) mags.push_back(std::abs(v));
    const auto marked = select_lowest(mags, cfg.percentile_t);
    // Skip draws where min_keep binds (a whole group falls below the cut).
    bool binds = false;
    std::size_t off = 0;
    for (const auto& grp : channel_groups(g)) {
      std::size_t m = 0;
      for (std::size_t c = 0; c < grp.channel_count; ++c) m += marked[off + c];
      binds = binds || m == grp.channel_count;
      off += grp.channel_count;
    }
    const PrunePlan plan = build_prune_plan(g, cfg);
    const std::size_t k = static_cast<std::size_t>(std::floor(cfg.percentile_t * static_cast<double>(all.size()) + 1e-9));
    if (binds) {
      EXPECT_LT(plan.total_pruned(), k);
      continue;
    }
    EXPECT_EQ(plan.total_pruned(), k) << "trial " << trial;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(BuildPrunePlan, CapAndMinKeepAreAlwaysRespected) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    NetworkGraph g = testing::random_graph(rng, trial);
    randomize_parameters(g, rng);
    PruneConfig cfg;
    cfg.percentile_t = static_cast<double>(rng() % 100) / 100.0;
    cfg.per_layer_cap = 0.1 + 0.9 * static_cast<double>(rng() % 100) / 100.0;
    cfg.min_keep = 1 + rng() % 3;
    const PrunePlan plan = build_prune_plan(g, cfg);
    for (const auto& gp : plan.groups) {
      const double size = static_cast<double>(gp.width());
      EXPECT_LE(gp.pruned(), static_cast<std::size_t>(std::ceil(*cfg.per_layer_cap * size)));
      EXPECT_GE(gp.kept(), std::min(cfg.min_keep, gp.width()));
    }
  }
}

TEST(BuildPrunePlan, DeterministicUnderTies) {
  NetworkGraph g = build_mlp({3, 6, 6, 2});
  set_gammas(g, 0, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  set_gammas(g, 1, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  PruneConfig cfg;
  cfg.percentile_t = 0.5;
  const PrunePlan a = build_prune_plan(g, cfg);
  for (int i = 0; i < 5; ++i) {
    const PrunePlan b = build_prune_plan(g, cfg);
    for (std::size_t k = 0; k < a.groups.size(); ++k) EXPECT_EQ(a.groups[k].keep, b.groups[k].keep);
  }
  // Higher flat indices are pruned first, so group 1 takes every cut; min_keep
  // then restores its lowest index.
  EXPECT_EQ(a.groups[0].kept(), 6u);
  EXPECT_EQ(a.groups[1].kept_indices(), (std::vector<std::size_t>{0}));
}

TEST(BuildPrunePlan, RejectsInvalidConfig) {
  const NetworkGraph g = build_mlp({3, 4, 2});
  PruneConfig cfg;
  cfg.percentile_t = 1.0;
  EXPECT_THROW(build_prune_plan(g, cfg), ConfigError);
  cfg = {};
  cfg.per_layer_cap = 0.0;
  EXPECT_THROW(build_prune_plan(g, cfg), ConfigError);
  cfg = {};
  cfg.min_keep = 0;
  EXPECT_THROW(build_prune_plan(g, cfg), ConfigError);
}

// ------------------------------------------------------------------ surgery

TEST(ApplyPrune, IdentityPlanIsBitIdenticalAndIdempotent) {
  Rng rng(6);
  for (int trial = 0; trial < 9; ++trial) {
    NetworkGraph g = testing::random_graph(rng, trial);
    randomize_parameters(g, rng);
    PruneConfig cfg;
    cfg.percentile_t = 0.0;
    const PrunePlan plan = build_prune_plan(g, cfg);
    NetworkGraph cur = g;
    for (int rep = 0; rep < 3; ++rep) {
      cur = apply_prune(cur, plan);
      EXPECT_EQ(parameter_bytes(cur), parameter_bytes(g));
      EXPECT_EQ(cur.size(), g.size());
    }
    const Tensor x = random_input(g, 3, rng);
    EXPECT_EQ(predict(cur, x), predict(g, x));
    EXPECT_EQ(predict(mask_from_plan(g, plan), x), predict(g, x));
  }
}

TEST(ApplyPrune, SourceGraphIsNotModified) {
  Rng rng(7);
  NetworkGraph g = testing::random_graph(rng, 2);
  randomize_parameters(g, rng);
  const auto before = parameter_bytes(g);
  const PrunePlan plan = testing::random_plan(g, rng);
  (void)apply_prune(g, plan);
  (void)mask_from_plan(g, plan);
  EXPECT_EQ(parameter_bytes(g), before);
}

TEST(ApplyPrune, PrunedForwardEqualsMaskedForwardOnRandomGraphsAndPlans) {
  Rng rng(8);
  int pairs = 0;
  for (int trial = 0; trial < 60; ++trial) {
    NetworkGraph g = testing::random_graph(rng, trial);
    if (trial % 4 == 3) g = testing::with_random_masks(g, rng);
    randomize_parameters(g, rng);
    const PrunePlan plan = testing::random_plan(g, rng, 0.3 + 0.5 * static_cast<double>(trial % 5) / 4.0);
    const NetworkGraph pruned = apply_prune(g, plan);
    const NetworkGraph masked = mask_from_plan(g, plan);
    for (int input = 0; input < 100; ++input) {
      const Tensor x = random_input(g, 2, rng);
      ASSERT_LE(max_relative_difference(predict(pruned, x), predict(masked, x)), 1e-9) << "trial " << trial;
    }
    // Train-mode batch statistics are per channel, so the equivalence holds there too.
    NetworkGraph p2 = pruned, m2 = masked;
    const Tensor x = random_input(g, 4, rng);
    EXPECT_LE(max_relative_difference(forward(p2, x, Mode::train).logits, forward(m2, x, Mode::train).logits), 1e-9);
    ++pairs;
  }
  EXPECT_GE(pairs, 50);
}

TEST(ApplyPrune, FlattenBoundaryDropsWholeChannelBlocks) {
  ConvnetOptions opt;
  opt.global_pool = false;
  NetworkGraph g = build_convnet({3}, 2, {1, 2, 2}, opt);
  auto& fc = g.layer(*g.index_of("classifier")).as<LinearParams>();
  for (std::size_t i = 0; i < fc.weights.size(); ++i) fc.weights[i] = static_cast<double>(i);
  PrunePlan plan;
  plan.groups.push_back({"bn1", "conv1", {1, 0, 1}});
  const NetworkGraph pruned = apply_prune(g, plan);
  const auto& w = pruned.layer(*pruned.index_of("classifier")).as<LinearParams>().weights;
  ASSERT_EQ(w.shape(), (Shape{2, 8}));
  // Row r keeps columns [0,4) and [8,12) of the original 12 (channel blocks of 4).
  const std::vector<double> expect{0, 1, 2, 3, 8, 9, 10, 11, 12, 13, 14, 15, 20, 21, 22, 23};
  EXPECT_EQ(std::vector<double>(w.values().begin(), w.values().end()), expect);
}

TEST(ApplyPrune, BetaLeaksIntoTheOriginalButNotTheMaskedOrPrunedModel) {
  NetworkGraph g = build_mlp({4, 3, 2});
  Rng rng(9);
  randomize_parameters(g, rng);
  auto& bn = g.layer(1).as<BatchNormParams>();
  bn.beta[1] = 0.8;  // relu passes it: the channel emits a nonzero constant when gamma is small
  bn.gamma[1] = 1e-6;
  PrunePlan plan;
  plan.groups.push_back({"bn1", "fc1", {1, 0, 1}});
  const Tensor x = random_input(g, 5, rng);
  const Tensor original = predict(g, x);
  const Tensor masked = predict(mask_from_plan(g, plan), x);
  const Tensor pruned = predict(apply_prune(g, plan), x);
  EXPECT_LE(max_relative_difference(pruned, masked), 1e-12);
  EXPECT_GT(max_relative_difference(original, masked), 1e-3);
}

TEST(ApplyPrune, AbsorbBiasPreservesTheConstantOutputOfPrunedChannels) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    // Linear consumers (MLPs, conv->flatten->linear, conv->pool->linear): the
    // absorbed constant is exact. Padded conv consumers are covered below.
    NetworkGraph g = testing::random_graph(rng, 0);
    if (trial % 3 == 1) {
      ConvnetOptions opt;
      opt.global_pool = false;
      opt.hidden = {3 + rng() % 4};
      g = build_convnet({2 + rng() % 4, kPoolToken}, 3, {2, 6, 6}, opt);
    } else if (trial % 3 == 2) {
      g = build_convnet({2 + rng() % 4}, 3, {1, 6, 6});
    }
    randomize_parameters(g, rng);
    const PrunePlan base = testing::random_plan(g, rng, 0.5);
    // Sparsity-trained models have gamma ~ 0 on pruned channels.
    for (std::size_t k = 0; k < base.groups.size(); ++k) {
      auto& gamma = g.layer(*g.index_of(base.groups[k].bn_layer_name)).as<BatchNormParams>().gamma;
      for (std::size_t c = 0; c < gamma.size(); ++c) {
        if (!base.groups[k].keep[c]) gamma[c] = 0.0;
      }
    }
    PrunePlan plan = base;
    plan.absorb_bias = true;
    predict_counts(g, plan);
    const NetworkGraph absorbed = apply_prune(g, plan);
    const Tensor x = random_input(g, 6, rng);
    EXPECT_LE(max_relative_difference(predict(absorbed, x), predict(g, x)), 1e-9) << "trial " << trial;
    expect_counts_match(g, plan);
  }
}

TEST(ApplyPrune, AbsorbBiasIntoPaddedConvIsExactAwayFromTheBorder) {
  Rng rng(11);
  NetworkGraph g = build_convnet({3, 4}, 2, {1, 6, 6});
  randomize_parameters(g, rng);
  auto& bn = g.layer(*g.index_of("bn1")).as<BatchNormParams>();
  bn.gamma[0] = 0.0;
  bn.beta[0] = 0.6;
  PrunePlan plan;
  plan.absorb_bias = true;
  plan.groups.push_back({"bn1", "conv1", {0, 1, 1}});
  plan.groups.push_back({"bn2", "conv2", {1, 1, 1, 1}});
  predict_counts(g, plan);
  const NetworkGraph pruned = apply_prune(g, plan);
  ASSERT_TRUE(pruned.layer(*pruned.index_of("conv2")).as<ConvParams>().bias.has_value());
  expect_counts_match(g, plan);
  NetworkGraph a = g, b = pruned;
  const Tensor x = random_input(g, 2, rng);
  const std::size_t bn2 = *g.index_of("bn2");
  const Tensor ya = forward(a, x, Mode::eval).inputs[bn2];
  const Tensor yb = forward(b, x, Mode::eval).inputs[bn2];
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t y = 1; y < 5; ++y)
        for (std::size_t z = 1; z < 5; ++z) EXPECT_NEAR(ya.at(n, o, y, z), yb.at(n, o, y, z), 1e-12);
}

TEST(ApplyPrune, MismatchedPlanIsRejected) {
  const NetworkGraph a = build_mlp({4, 5, 3, 2});
  const NetworkGraph b = build_mlp({4, 6, 3, 2});
  Rng rng(12);
  const PrunePlan plan = testing::random_plan(a, rng);
  EXPECT_THROW(apply_prune(b, plan), ConfigError);
  EXPECT_THROW(mask_from_plan(b, plan), ConfigError);
  EXPECT_THROW(apply_prune(build_mlp({4, 5, 2}), plan), ConfigError);
  PrunePlan empty_group = plan;
  std::fill(empty_group.groups[0].keep.begin(), empty_group.groups[0].keep.end(), 0);
  EXPECT_THROW(apply_prune(a, empty_group), ConfigError);
}

TEST(ApplyPrune, ChannelMasksShrinkWithTheirGroup) {
  std::vector<LayerSpec> layers{make_linear("fc1", 3, 4), make_batchnorm("bn1", 4), {"relu1", ReluLayer{}},
                                {"mask1", ChannelMaskParams{{1, 0, 1, 1}}}, make_linear("fc2", 4, 2)};
  const NetworkGraph g({3}, std::move(layers));
  PrunePlan plan;
  plan.groups.push_back({"bn1", "fc1", {1, 1, 0, 1}});
  const NetworkGraph pruned = apply_prune(g, plan);
  EXPECT_EQ(pruned.layer(3).as<ChannelMaskParams>().keep, (std::vector<std::uint8_t>{1, 0, 1}));
}

// ------------------------------------------------------------------- counts

TEST(PredictCounts, EqualAnalyzerCountsOfTheSurgicalResult) {
  Rng rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    NetworkGraph g = testing::random_graph(rng, trial);
    if (trial % 3 == 1) g = testing::with_random_masks(g, rng);
    randomize_parameters(g, rng);
    PrunePlan plan = testing::random_plan(g, rng, 0.4);
    expect_counts_match(g, plan);
    plan.absorb_bias = true;
    predict_counts(g, plan);
    expect_counts_match(g, plan);
    PruneConfig cfg;
    cfg.percentile_t = 0.6;
    cfg.per_layer_cap = 0.7;
    expect_counts_match(g, build_prune_plan(g, cfg));
  }
}

// -------------------------------------------------------------------- JSON

TEST(PlanJson, RoundTripPreservesMasksAndCounts) {
  Rng rng(14);
  NetworkGraph g = testing::random_graph(rng, 2);
  randomize_parameters(g, rng);
  PruneConfig cfg;
  cfg.percentile_t = 0.5;
  const PrunePlan plan = build_prune_plan(g, cfg);
  const auto text = plan_to_json(plan).dump(2);
  const PrunePlan back = plan_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.threshold, plan.threshold);
  EXPECT_EQ(back.predicted_params, plan.predicted_params);
  EXPECT_EQ(back.predicted_params_no_bn, plan.predicted_params_no_bn);
  EXPECT_EQ(back.predicted_flops, plan.predicted_flops);
  ASSERT_EQ(back.groups.size(), plan.groups.size());
  for (std::size_t k = 0; k < plan.groups.size(); ++k) {
    EXPECT_EQ(back.groups[k].keep, plan.groups[k].keep);
    EXPECT_EQ(back.groups[k].bn_layer_name, plan.groups[k].bn_layer_name);
    EXPECT_EQ(back.groups[k].producer_layer_name, plan.groups[k].producer_layer_name);
  }
  EXPECT_EQ(parameter_bytes(apply_prune(g, back)), parameter_bytes(apply_prune(g, plan)));
  const auto j = plan_to_json(plan);
  EXPECT_EQ(j["total_pruned"].get<std::size_t>(), plan.total_pruned());
  EXPECT_EQ(j["groups"][0]["kept"].get<std::size_t>() + j["groups"][0]["pruned"].get<std::size_t>(),
            j["groups"][0]["width"].get<std::size_t>());
}

TEST(PlanJson, MalformedInputIsAConfigError) {
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"threshold": 1})")), ConfigError);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(
                   R"({"threshold":0,"predicted_params":1,"predicted_flops":1,"groups":[{"bn_layer":"b","producer_layer":"p","width":2,"kept_indices":[5]}]})")),
               ConfigError);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"threshold":"x","predicted_params":1,"predicted_flops":1,"groups":[]})")),
               ConfigError);
}

// --------------------------------------------------------------- fine-tuning

Dataset hard_blobs(std::uint64_t seed) { return synthetic_blobs(6, 60, {1, 8, 8}, seed, 2.5); }

TrainConfig small_train(double lambda, int epochs, std::uint64_t seed) {
  TrainConfig c;
  c.lambda = lambda;
  c.epochs = epochs;
  c.batch_size = 32;
  c.lr0 = 0.05;
  c.milestones = {0.5};
  c.seed = seed;
  return c;
}

TEST(FineTune, ZeroEpochsLeavesTheModelUnchanged) {
  Rng rng(15);
  NetworkGraph g = build_mlp({64, 8, 6});
  initialize_parameters(g, rng);
  const auto before = parameter_bytes(g);
  fine_tune(g, hard_blobs(1), small_train(0.0, 0, 1));
  EXPECT_EQ(parameter_bytes(g), before);
}

TEST(FineTune, ForcesLambdaToZero) {
  const Dataset data = hard_blobs(2);
  Rng rng(16);
  NetworkGraph a = build_mlp({64, 8, 6});
  initialize_parameters(a, rng);
  NetworkGraph b = a;
  const auto report = fine_tune(a, data, small_train(0.5, 2, 3));
  train(b, data, small_train(0.0, 2, 3));
  EXPECT_EQ(report.lambda, 0.0);
  EXPECT_EQ(parameter_bytes(a), parameter_bytes(b));
}

TEST(FineTune, GammaGuidedPlanBeatsRandomPlanAtEqualKeepCounts) {
  // Paired comparison: same sparsity-trained model, same keep count per
  // group, same fine-tuning budget.
  int guided_wins = 0;
  double guided_sum = 0.0, random_sum = 0.0;
  constexpr int kSeeds = 5;
  for (int s = 0; s < kSeeds; ++s) {
    const Dataset all = hard_blobs(100 + s);
    const auto [train_set, test_set] = split_validation(all, 120, 7 + s);
    NetworkGraph g = build_mlp({64, 32, 16, 6});
    Rng rng(200 + s);
    initialize_parameters(g, rng);
    train(g, train_set, small_train(2e-2, 12, 300 + s));

    PruneConfig cfg;
    cfg.per_group_ratio = 0.75;
    const PrunePlan guided = build_prune_plan(g, cfg);
    PrunePlan random = guided;
    for (auto& gp : random.groups) {
      std::shuffle(gp.keep.begin(), gp.keep.end(), rng);
    }
    NetworkGraph a = apply_prune(g, guided), b = apply_prune(g, random);
    fine_tune(a, train_set, small_train(0.0, 1, 400 + s));
    fine_tune(b, train_set, small_train(0.0, 1, 400 + s));
    const double ea = evaluate(a, test_set), eb = evaluate(b, test_set);
    guided_sum += ea;
    random_sum += eb;
    guided_wins += ea <= eb;
  }
  EXPECT_LT(guided_sum, random_sum);
  EXPECT_GE(guided_wins, 4);
}

}  // namespace
}  // namespace slimnet
