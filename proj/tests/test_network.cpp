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

#include <numeric>

#include "oracles.hpp"
#include "slimnet/slimnet.hpp"

namespace slimnet {
namespace {

using testing::random_input;
using testing::randomize_parameters;

/// Sum of in*out + out over consecutive widths.
std::uint64_t mlp_param_formula(const std::vector<std::size_t>& w) {
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < w.size(); ++i) n += w[i - 1] * w[i] + w[i];
  return n;
}

std::vector<LayerKind> kinds_of(const NetworkGraph& g) {
  std::vector<LayerKind> k;
  for (const auto& l : g.layers()) k.push_back(l.kind());
  return k;
}

// ---------------------------------------------------------------- builders

TEST(BuildMlp, TableFourBaselineTopology) {
  const NetworkGraph g = build_mlp({784, 500, 300, 10});
  using K = LayerKind;
  EXPECT_EQ(kinds_of(g), (std::vector<K>{K::linear, K::batchnorm, K::relu, K::linear, K::batchnorm, K::relu, K::linear}));
  EXPECT_EQ(g.input_shape(), (Shape{784}));
  EXPECT_EQ(g.layer(0).as<LinearParams>().weights.shape(), (Shape{500, 784}));
  EXPECT_EQ(g.layer(3).as<LinearParams>().weights.shape(), (Shape{300, 500}));
  EXPECT_EQ(g.layer(6).as<LinearParams>().weights.shape(), (Shape{10, 300}));
  EXPECT_EQ(g.output_shapes().back(), (Shape{10}));
  EXPECT_EQ(count_params(g, {.include_batchnorm = false}), 545'810u);
  EXPECT_EQ(count_params(g), 545'810u + 2 * (500 + 300));
}

TEST(BuildMlp, NoHiddenLayerGivesASingleLinear) {
  const NetworkGraph g = build_mlp({4, 2});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.layer(0).kind(), LayerKind::linear);
  EXPECT_TRUE(channel_groups(g).empty());
}

TEST(BuildMlp, TableFourPrunedTopologyParameterCount) {
  const std::vector<std::size_t> w{784, 100, 60, 10};
  const NetworkGraph g = build_mlp(w);
  EXPECT_EQ(mlp_param_formula(w), 85'170u);
  EXPECT_EQ(count_params(g, {.include_batchnorm = false}), 85'170u);
}

TEST(BuildMlp, RejectsDegenerateWidths) {
  EXPECT_THROW(build_mlp({5}), ConfigError);
  EXPECT_THROW(build_mlp({5, 0, 2}), ConfigError);
}

TEST(BuildConvnet, EightPoolSixteenOnMnistShapedInputGivesLogits) {
  NetworkGraph g = build_convnet({8, kPoolToken, 16}, 10, {1, 28, 28});
  Rng rng(1);
  initialize_parameters(g, rng);
  const Tensor logits = predict(g, random_input(g, 3, rng));
  EXPECT_EQ(logits.shape(), (Shape{3, 10}));
  const auto pass = forward(g, random_input(g, 3, rng), Mode::train);
  EXPECT_EQ(pass.logits.shape(), (Shape{3, 10}));
}

TEST(BuildConvnet, VggSixteenConvPatternMatchesPublishedWidths) {
  const std::size_t P = kPoolToken;
  const std::vector<std::size_t> tokens{64,  64,  P,   128, 128, P,   256, 256, 256, 256, P,
                                        512, 512, 512, 512, P,   512, 512, 512, 512};
  const NetworkGraph g = build_convnet(tokens, 10, {3, 32, 32});
  const auto groups = channel_groups(g);
  const std::vector<std::size_t> expect{64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 512, 512, 512, 512, 512, 512};
  ASSERT_EQ(groups.size(), 16u);
  std::size_t total = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    EXPECT_EQ(groups[i].channel_count, expect[i]) << "layer " << i + 1;
    total += groups[i].channel_count;
  }
  EXPECT_EQ(total, 5504u);
}

TEST(BuildConvnet, SmallNetParameterCountMatchesHandSum) {
  const NetworkGraph g = build_convnet({2, kPoolToken, 3}, 2, {1, 8, 8});
  // conv1 2*1*3*3, bn1 2*2, conv2 3*2*3*3, bn2 2*3, classifier 2*3 + 2.
  const std::uint64_t hand = 18 + 4 + 54 + 6 + 8;
  EXPECT_EQ(count_params(g), hand);
  EXPECT_EQ(count_params(g, {.include_batchnorm = false}), hand - 10);
}

TEST(BuildConvnet, PoolingPastOnePixelIsAnError) {
  const std::size_t P = kPoolToken;
  EXPECT_THROW(build_convnet({4, P, P, P, P}, 2, {1, 8, 8}), ShapeError);
  EXPECT_THROW(build_convnet({P}, 2, {1, 8, 8}), ConfigError);
}

TEST(BuildConvnet, FlattenVariantFeedsLinearWithChannelTimesSpatialColumns) {
  ConvnetOptions opt;
  opt.global_pool = false;
  opt.hidden = {7};
  const NetworkGraph g = build_convnet({3, kPoolToken, 4}, 5, {2, 6, 6}, opt);
  const auto groups = channel_groups(g);
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[1].consumer_layer_names, (std::vector<std::string>{"fc1"}));
  EXPECT_EQ(groups[1].consumer_spatial, 9u);
  EXPECT_EQ(g.layer(*g.index_of("fc1")).as<LinearParams>().in_features(), 4u * 9u);
}

// ------------------------------------------------------------- architecture

TEST(ParseArchitecture, MlpAndConvGrammars) {
  const NetworkGraph mlp = parse_architecture("mlp:784-500-300-10", {1, 28, 28}, 10);
  EXPECT_EQ(channel_groups(mlp).size(), 2u);
  const NetworkGraph conv = parse_architecture("conv:8,8,P,16,16,P", {1, 28, 28}, 10);
  const auto groups = channel_groups(conv);
  ASSERT_EQ(groups.size(), 4u);
  EXPECT_EQ(groups[3].channel_count, 16u);
  EXPECT_EQ(conv.output_shapes().back(), (Shape{10}));
}

TEST(ParseArchitecture, RejectsMalformedStrings) {
  for (const char* bad : {"mlp784-10", "mlp:784-x-10", "mlp:784", "mlp:100-10", "mlp:784-0-10", "mlp:784-5-9",
                          "conv:8,Q", "rnn:4-4", "conv:"}) {
    EXPECT_THROW(parse_architecture(bad, {1, 28, 28}, 10), Error) << bad;
  }
}

// --------------------------------------------------------------- validation

TEST(NetworkGraph, RejectsDuplicateNames) {
  std::vector<LayerSpec> l{make_linear("a", 4, 3), make_batchnorm("a", 3), {"r", ReluLayer{}}, make_linear("c", 3, 2)};
  EXPECT_THROW(NetworkGraph({4}, std::move(l)), ConfigError);
}

TEST(NetworkGraph, RejectsHiddenLinearWithoutBatchnorm) {
  std::vector<LayerSpec> l{make_linear("a", 4, 3), {"r", ReluLayer{}}, make_linear("c", 3, 2)};
  EXPECT_THROW(NetworkGraph({4}, std::move(l)), Error);
}

TEST(NetworkGraph, RejectsIncompatibleAdjacentShapes) {
  std::vector<LayerSpec> l{make_linear("a", 4, 3), make_batchnorm("b", 3), {"r", ReluLayer{}}, make_linear("c", 5, 2)};
  EXPECT_THROW(NetworkGraph({4}, std::move(l)), ShapeError);
}

TEST(NetworkGraph, RejectsBatchnormWidthMismatch) {
  std::vector<LayerSpec> l{make_linear("a", 4, 3), make_batchnorm("b", 4), {"r", ReluLayer{}}, make_linear("c", 3, 2)};
  EXPECT_THROW(NetworkGraph({4}, std::move(l)), ShapeError);
}

TEST(NetworkGraph, RejectsMaskOfWrongWidth) {
  std::vector<LayerSpec> l{make_linear("a", 4, 3), make_batchnorm("b", 3), {"r", ReluLayer{}},
                           {"m", ChannelMaskParams{{1, 1}}}, make_linear("c", 3, 2)};
  EXPECT_THROW(NetworkGraph({4}, std::move(l)), ShapeError);
}

TEST(Forward, ShapeErrorNamesTheOffendingLayer) {
  NetworkGraph g = build_mlp({6, 4, 3});
  // Corrupt the classifier after construction so only the forward pass sees it.
  g.layer(*g.index_of("fc2")).as<LinearParams>().weights = Tensor({3, 5});
  Rng rng(2);
  try {
    (void)forward(g, testing::random_tensor({2, 6}, rng), Mode::train);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("fc2"), std::string::npos) << e.what();
  }
  EXPECT_THROW((void)predict(build_mlp({6, 4, 3}), Tensor({2, 7})), ShapeError);
}

// ----------------------------------------------------------- channel groups

TEST(ChannelGroups, MlpGroupsMatchHiddenWidths) {
  const auto groups = channel_groups(build_mlp({784, 500, 300, 10}));
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].channel_count, 500u);
  EXPECT_EQ(groups[1].channel_count, 300u);
  EXPECT_EQ(groups[0].producer_layer_name, "fc1");
  EXPECT_EQ(groups[0].consumer_layer_names, (std::vector<std::string>{"fc2"}));
  EXPECT_EQ(groups[1].consumer_layer_names, (std::vector<std::string>{"fc3"}));
}

TEST(ChannelGroups, SingleConvNetHasOneGroup) {
  const auto groups = channel_groups(build_convnet({5}, 3, {1, 4, 4}));
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].channel_count, 5u);
  EXPECT_EQ(groups[0].producer_layer_name, "conv1");
  EXPECT_EQ(groups[0].consumer_layer_names, (std::vector<std::string>{"classifier"}));
}

TEST(ChannelGroups, CoverEveryBatchnormExactlyOnce) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const NetworkGraph g = testing::random_graph(rng, trial);
    std::size_t bn_gammas = 0, bn_layers = 0;
    for (const auto& l : g.layers()) {
      if (l.kind() == LayerKind::batchnorm) {
        ++bn_layers;
        bn_gammas += l.as<BatchNormParams>().channels();
      }
    }
    const auto groups = channel_groups(g);
    std::set<std::string> names;
    std::size_t total = 0;
    for (const auto& grp : groups) {
      names.insert(grp.bn_layer_name);
      total += grp.channel_count;
    }
    EXPECT_EQ(groups.size(), bn_layers);
    EXPECT_EQ(names.size(), bn_layers);
    EXPECT_EQ(total, bn_gammas);
    EXPECT_EQ(total, all_gammas(g).size());
  }
}

// ------------------------------------------------------------------ forward

TEST(Forward, AllTrueMaskIsABitIdenticalNoOp) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkGraph plain = build_convnet({3, kPoolToken, 4}, 2, {1, 6, 6});
    randomize_parameters(plain, rng);
    std::vector<LayerSpec> layers = plain.layers();
    layers.insert(layers.begin() + 3, LayerSpec{"mask", ChannelMaskParams{{1, 1, 1}}});
    NetworkGraph masked(plain.input_shape(), std::move(layers));
    const Tensor x = random_input(plain, 4, rng);
    EXPECT_EQ(predict(plain, x), predict(masked, x));
    EXPECT_EQ(forward(plain, x, Mode::train).logits, forward(masked, x, Mode::train).logits);
  }
}

TEST(Forward, MaskZeroesSelectedChannels) {
  Rng rng(5);
  std::vector<LayerSpec> layers{make_linear("fc1", 3, 4), make_batchnorm("bn1", 4), {"relu1", ReluLayer{}},
                                {"mask", ChannelMaskParams{{1, 0, 1, 0}}}, make_linear("fc2", 4, 2)};
  NetworkGraph g({3}, std::move(layers));
  randomize_parameters(g, rng);
  const auto pass = forward(g, testing::random_tensor({5, 3}, rng), Mode::train);
  const Tensor& into_fc2 = pass.inputs[4];
  for (std::size_t n = 0; n < 5; ++n) {
    EXPECT_EQ(into_fc2[n * 4 + 1], 0.0);
    EXPECT_EQ(into_fc2[n * 4 + 3], 0.0);
  }
}

TEST(Forward, PredictMatchesEvalModeForward) {
  Rng rng(6);
  NetworkGraph g = testing::random_graph(rng, 2);
  randomize_parameters(g, rng);
  const Tensor x = random_input(g, 3, rng);
  EXPECT_EQ(predict(g, x), forward(g, x, Mode::eval).logits);
}

TEST(Forward, FlatInputIsReshapedToDeclaredShape) {
  Rng rng(7);
  NetworkGraph g = build_convnet({2}, 2, {1, 4, 4});
  randomize_parameters(g, rng);
  const Tensor x = testing::random_tensor({3, 1, 4, 4}, rng);
  EXPECT_EQ(predict(g, x), predict(g, x.reshaped({3, 16})));
}

TEST(InitializeParameters, GammaBetaAndRunningStats) {
  NetworkGraph g = build_mlp({5, 4, 3});
  Rng rng(8);
  initialize_parameters(g, rng, 0.5);
  const auto& bn = g.layer(1).as<BatchNormParams>();
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(bn.gamma[c], 0.5);
    EXPECT_EQ(bn.beta[c], 0.0);
    EXPECT_EQ(bn.running_mean[c], 0.0);
    EXPECT_EQ(bn.running_var[c], 1.0);
  }
  for (double b : g.layer(0).as<LinearParams>().bias.values()) EXPECT_EQ(b, 0.0);
  NetworkGraph h = build_mlp({5, 4, 3});
  Rng rng2(8);
  initialize_parameters(h, rng2, 0.5);
  EXPECT_EQ(g.layer(0).as<LinearParams>().weights, h.layer(0).as<LinearParams>().weights);
}

}  // namespace
}  // namespace slimnet
