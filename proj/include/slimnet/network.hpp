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

#ifndef SLIMNET_NETWORK_HPP
#define SLIMNET_NETWORK_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "slimnet/layers.hpp"
#include "slimnet/optimizer.hpp"
#include "slimnet/tensor.hpp"

namespace slimnet {

struct ReluLayer {};
struct FlattenLayer {};
struct MaxPoolParams : PoolParams {};
struct AvgPoolParams : PoolParams {};

/// Channel-selection layer: channels with a zero flag are multiplied by 0.
struct ChannelMaskParams {
  std::vector<std::uint8_t> keep;
};

/// Enumerator order matches the alternatives of LayerParams.
enum class LayerKind : std::uint8_t { conv, batchnorm, relu, maxpool, avgpool, linear, flatten, channel_mask };

using LayerParams = std::variant<ConvParams, BatchNormParams, ReluLayer, MaxPoolParams, AvgPoolParams, LinearParams,
                                 FlattenLayer, ChannelMaskParams>;

inline std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::linear: return "linear";
    case LayerKind::flatten: return "flatten";
    case LayerKind::channel_mask: return "channel_mask";
  }
  return "unknown";
}

struct LayerSpec {
  std::string name;
  LayerParams params;

  LayerKind kind() const noexcept { return static_cast<LayerKind>(params.index()); }
  bool is_weighted() const noexcept { return kind() == LayerKind::conv || kind() == LayerKind::linear; }

  template <class T>
  T& as() {
    return std::get<T>(params);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(params);
  }
};

/// A simple chain of layers over inputs of a declared per-sample shape.
///
/// Every conv layer and every linear layer other than the final classifier
/// must be followed immediately by a batchnorm and then a relu; the final
/// layer must be the linear classifier.
class NetworkGraph {
 public:
  NetworkGraph() = default;
  NetworkGraph(Shape input_shape, std::vector<LayerSpec> layers)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    validate();
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::vector<LayerSpec>& layers() noexcept { return layers_; }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  LayerSpec& layer(std::size_t i) { return layers_.at(i); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t classifier_index() const {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (layers_[i].is_weighted()) return i;
    }
    throw ShapeError("network has no weighted layer");
  }

  /// Per-sample output shape of every layer (batch dimension omitted).
  std::vector<Shape> output_shapes() const {
    std::vector<Shape> shapes;
    shapes.reserve(layers_.size());
    Shape cur = input_shape_;
    for (const auto& l : layers_) {
      try {
        cur = infer_output(l, cur);
      } catch (const ShapeError& e) {
        throw ShapeError("layer '" + l.name + "': " + e.what());
      }
      shapes.push_back(cur);
    }
    return shapes;
  }

  /// Per-sample input shape of layer i.
  Shape input_shape_of(std::size_t i) const {
    if (i == 0) return input_shape_;
    return output_shapes().at(i - 1);
  }

  void validate() const {
    if (input_shape_.empty() || shape_size(input_shape_) == 0) throw ShapeError("network input shape is empty");
    if (layers_.empty()) throw ShapeError("network has no layers");
    std::set<std::string> names;
    for (const auto& l : layers_) {
      if (l.name.empty()) throw ConfigError("layer with empty name");
      if (!names.insert(l.name).second) throw ConfigError("duplicate layer name '" + l.name + "'");
    }
    (void)output_shapes();
    const std::size_t cls = classifier_index();
    if (layers_[cls].kind() != LayerKind::linear || cls + 1 != layers_.size()) {
      throw ShapeError("the final layer must be the linear classifier");
    }
    for (std::size_t i = 0; i < cls; ++i) {
      if (!layers_[i].is_weighted()) continue;
      if (i + 2 >= layers_.size() || layers_[i + 1].kind() != LayerKind::batchnorm ||
          layers_[i + 2].kind() != LayerKind::relu) {
        throw ShapeError("layer '" + layers_[i].name + "' must be followed by batchnorm then relu");
      }
    }
  }

  /// Trainable tensors in layer order.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) {
      switch (l.kind()) {
        case LayerKind::conv: {
          auto& p = l.as<ConvParams>();
          out.push_back({&p.weights, ParamRole::weight, l.name + ".weight"});
          if (p.bias) out.push_back({&*p.bias, ParamRole::bias, l.name + ".bias"});
          break;
        }
        case LayerKind::linear: {
          auto& p = l.as<LinearParams>();
          out.push_back({&p.weights, ParamRole::weight, l.name + ".weight"});
          out.push_back({&p.bias, ParamRole::bias, l.name + ".bias"});
          break;
        }
        case LayerKind::batchnorm: {
          auto& p = l.as<BatchNormParams>();
          out.push_back({&p.gamma, ParamRole::gamma, l.name + ".gamma"});
          out.push_back({&p.beta, ParamRole::beta, l.name + ".beta"});
          break;
        }
        default: break;
      }
    }
    return out;
  }

  void drop_grads() {
    for (auto& p : parameters()) p.tensor->drop_grad();
  }

 private:
  static Shape infer_output(const LayerSpec& l, const Shape& in) {
    auto need_rank = [&](std::size_t r) {
      if (in.size() != r) {
        throw ShapeError(std::string(kind_name(l.kind())) + " expects rank-" + std::to_string(r) +
                         " samples, got " + shape_string(in));
      }
    };
    auto need_channels = [&](std::size_t c) {
      if (in.empty() || in[0] != c) {
        throw ShapeError(std::string(kind_name(l.kind())) + " expects " + std::to_string(c) + " channels, got " +
                         shape_string(in));
      }
      if (in.size() != 1 && in.size() != 3) throw ShapeError("channel layer expects rank-1 or rank-3 samples");
    };
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& p = l.as<ConvParams>();
        p.validate();
        need_rank(3);
        if (in[0] != p.in_channels()) {
          throw ShapeError("conv expects " + std::to_string(p.in_channels()) + " input channels, got " +
                           shape_string(in));
        }
        return {p.out_channels(), p.output_extent(in[1], p.kernel_h()), p.output_extent(in[2], p.kernel_w())};
      }
      case LayerKind::batchnorm: {
        const auto& p = l.as<BatchNormParams>();
        p.validate();
        need_channels(p.channels());
        return in;
      }
      case LayerKind::channel_mask:
        need_channels(l.as<ChannelMaskParams>().keep.size());
        return in;
      case LayerKind::relu: return in;
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        const PoolParams& p = l.kind() == LayerKind::maxpool ? static_cast<const PoolParams&>(l.as<MaxPoolParams>())
                                                             : static_cast<const PoolParams&>(l.as<AvgPoolParams>());
        need_rank(3);
        return {in[0], p.output_extent(in[1]), p.output_extent(in[2])};
      }
      case LayerKind::linear: {
        const auto& p = l.as<LinearParams>();
        p.validate();
        need_rank(1);
        if (in[0] != p.in_features()) {
          throw ShapeError("linear expects " + std::to_string(p.in_features()) + " features, got " +
                           shape_string(in));
        }
        return {p.out_features()};
      }
      case LayerKind::flatten: return {shape_size(in)};
    }
    throw ShapeError("unknown layer kind");
  }

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
};

// ---------------------------------------------------------------------------
// Construction

inline LayerSpec make_linear(std::string name, std::size_t in, std::size_t out) {
  return {std::move(name), LinearParams{Tensor({out, in}), Tensor({out})}};
}

inline LayerSpec make_conv(std::string name, std::size_t in, std::size_t out, std::size_t kernel = 3,
                           std::size_t padding = 1, bool bias = false) {
  ConvParams p{Tensor({out, in, kernel, kernel}), std::nullopt, 1, padding};
  if (bias) p.bias = Tensor({out});
  return {std::move(name), std::move(p)};
}

inline LayerSpec make_batchnorm(std::string name, std::size_t channels) {
  return {std::move(name), BatchNormParams(channels)};
}

/// Fully connected network: linear->batchnorm->relu per hidden width, then a
/// plain linear classifier. Parameters are zero until initialize_parameters.
inline NetworkGraph build_mlp(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ConfigError("build_mlp: need at least an input and an output width");
  for (std::size_t w : widths) {
    if (w < 1) throw ConfigError("build_mlp: widths must be >= 1");
  }
  std::vector<LayerSpec> layers;
  for (std::size_t i = 1; i + 1 < widths.size(); ++i) {
    const std::string k = std::to_string(i);
    layers.push_back(make_linear("fc" + k, widths[i - 1], widths[i]));
    layers.push_back(make_batchnorm("bn" + k, widths[i]));
    layers.push_back({"relu" + k, ReluLayer{}});
  }
  layers.push_back(make_linear("fc" + std::to_string(widths.size() - 1), widths[widths.size() - 2], widths.back()));
  return NetworkGraph({widths.front()}, std::move(layers));
}

/// Token value standing for a 2x2 max-pool in a convnet description.
inline constexpr std::size_t kPoolToken = 0;

struct ConvnetOptions {
  bool global_pool = true;            // global average pool before the classifier
  std::vector<std::size_t> hidden{};  // optional hidden linear widths (each with BN+ReLU)
};

/// VGG-style chain: 3x3 conv (pad 1) -> BN -> ReLU per channel token, 2x2
/// max-pool per kPoolToken, then global average pool and a linear classifier.
inline NetworkGraph build_convnet(const std::vector<std::size_t>& tokens, std::size_t classes, const Shape& input_shape,
                                  const ConvnetOptions& options = {}) {
  if (input_shape.size() != 3) throw ShapeError("build_convnet: input shape must be (C,H,W)");
  if (classes < 1) throw ConfigError("build_convnet: classes must be >= 1");
  std::size_t channels = input_shape[0], h = input_shape[1], w = input_shape[2];
  std::vector<LayerSpec> layers;
  std::size_t conv_i = 0, pool_i = 0;
  for (std::size_t t : tokens) {
    if (t == kPoolToken) {
      if (h < 2 || w < 2) {
        throw ShapeError("build_convnet: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                         " exhausted by pooling");
      }
      layers.push_back({"pool" + std::to_string(++pool_i), MaxPoolParams{{2, 2}}});
      h /= 2;
      w /= 2;
      continue;
    }
    const std::string k = std::to_string(++conv_i);
    layers.push_back(make_conv("conv" + k, channels, t));
    layers.push_back(make_batchnorm("bn" + k, t));
    layers.push_back({"relu" + k, ReluLayer{}});
    channels = t;
  }
  if (conv_i == 0) throw ConfigError("build_convnet: at least one conv token required");
  std::size_t features = channels * h * w;
  if (options.global_pool) {
    if (h != w) throw ShapeError("build_convnet: global pooling needs a square feature map");
    layers.push_back({"gap", AvgPoolParams{{h, h}}});
    features = channels;
  }
  layers.push_back({"flatten", FlattenLayer{}});
  std::size_t fc_i = 0;
  for (std::size_t width : options.hidden) {
    const std::string k = std::to_string(++fc_i);
    layers.push_back(make_linear("fc" + k, features, width));
    layers.push_back(make_batchnorm("fcbn" + k, width));
    layers.push_back({"fcrelu" + k, ReluLayer{}});
    features = width;
  }
  layers.push_back(make_linear("classifier", features, classes));
  return NetworkGraph(input_shape, std::move(layers));
}

/// He-normal weights, zero biases, gamma = gamma_init, beta = 0, running
/// statistics (0, 1).
inline void initialize_parameters(NetworkGraph& graph, Rng& rng, double gamma_init = 0.5) {
  for (auto& l : graph.layers()) {
    switch (l.kind()) {
      case LayerKind::conv: {
        auto& p = l.as<ConvParams>();
        p.weights = he_init(p.weights.shape(), p.in_channels() * p.kernel_h() * p.kernel_w(), rng);
        if (p.bias) p.bias->fill(0.0);
        break;
      }
      case LayerKind::linear: {
        auto& p = l.as<LinearParams>();
        p.weights = he_init(p.weights.shape(), p.in_features(), rng);
        p.bias.fill(0.0);
        break;
      }
      case LayerKind::batchnorm: {
        auto& p = l.as<BatchNormParams>();
        p.gamma.fill(gamma_init);
        p.beta.fill(0.0);
        p.running_mean.fill(0.0);
        p.running_var.fill(1.0);
        break;
      }
      default: break;
    }
  }
}

/// Parses `mlp:784-500-300-10` or `conv:8,8,P,16,16,P`. For conv strings the
/// classifier width is `classes`; for mlp strings the first and last widths
/// must agree with the input shape and `classes`.
inline NetworkGraph parse_architecture(std::string_view spec, const Shape& input_shape, std::size_t classes) {
  auto fail = [&](const std::string& why) { return ConfigError("architecture '" + std::string(spec) + "': " + why); };
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw fail("expected '<family>:<layers>'");
  const std::string family(spec.substr(0, colon));
  const std::string body(spec.substr(colon + 1));
  auto parse_count = [&](const std::string& tok) -> std::size_t {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      throw fail("bad width '" + tok + "'");
    }
    if (pos != tok.size() || v == 0) throw fail("bad width '" + tok + "'");
    return v;
  };
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
  };
  if (family == "mlp") {
    std::vector<std::size_t> widths;
    for (const auto& t : split(body, '-')) widths.push_back(parse_count(t));
    if (widths.size() < 2) throw fail("need at least two widths");
    if (widths.front() != shape_size(input_shape)) {
      throw fail("input width " + std::to_string(widths.front()) + " does not match data shape " +
                 shape_string(input_shape));
    }
    if (classes && widths.back() != classes) {
      throw fail("output width " + std::to_string(widths.back()) + " does not match " + std::to_string(classes) +
                 " classes");
    }
    return build_mlp(widths);
  }
  if (family == "conv") {
    std::vector<std::size_t> tokens;
    for (const auto& t : split(body, ',')) tokens.push_back(t == "P" ? kPoolToken : parse_count(t));
    return build_convnet(tokens, classes, input_shape);
  }
  throw fail("unknown family '" + family + "'");
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  BatchNormSaved batchnorm;
  std::vector<std::size_t> argmax;
};

/// Everything the backward pass needs from a forward pass.
struct ForwardPass {
  Mode mode = Mode::eval;
  ConvAlgo conv_algo = ConvAlgo::direct;
  std::vector<Tensor> inputs;  // inputs[i] is the input to layer i
  std::vector<LayerCache> caches;
  Tensor logits;
};

namespace detail {

inline Tensor to_graph_input(const NetworkGraph& graph, const Tensor& input) {
  if (input.rank() < 1) throw ShapeError("network input must have a batch dimension");
  const Shape per_sample(input.shape().begin() + 1, input.shape().end());
  if (per_sample == graph.input_shape()) return input;
  if (shape_size(per_sample) == shape_size(graph.input_shape())) {
    Shape s{input.dim(0)};
    s.insert(s.end(), graph.input_shape().begin(), graph.input_shape().end());
    return input.reshaped(std::move(s));
  }
  throw ShapeError("network input " + shape_string(input.shape()) + " does not match declared shape " +
                   shape_string(graph.input_shape()));
}

}  // namespace detail

/// Runs every layer in order. Train mode uses batch statistics in batchnorm
/// layers and updates their running averages.
inline ForwardPass forward(NetworkGraph& graph, const Tensor& input, Mode mode, ConvAlgo algo = ConvAlgo::direct) {
  ForwardPass pass;
  pass.mode = mode;
  pass.conv_algo = algo;
  pass.inputs.reserve(graph.size());
  pass.caches.resize(graph.size());
  Tensor cur = detail::to_graph_input(graph, input);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    auto& l = graph.layer(i);
    Tensor next;
    try {
      switch (l.kind()) {
        case LayerKind::conv: next = conv2d_forward(cur, l.as<ConvParams>(), algo); break;
        case LayerKind::batchnorm: {
          auto r = batchnorm_forward(cur, l.as<BatchNormParams>(), mode);
          next = std::move(r.output);
          pass.caches[i].batchnorm = std::move(r.saved);
          break;
        }
        case LayerKind::relu: next = relu_forward(cur); break;
        case LayerKind::maxpool: {
          auto r = maxpool2d_forward(cur, l.as<MaxPoolParams>());
          next = std::move(r.output);
          pass.caches[i].argmax = std::move(r.argmax);
          break;
        }
        case LayerKind::avgpool: next = avgpool2d_forward(cur, l.as<AvgPoolParams>()); break;
        case LayerKind::linear: next = linear_forward(cur, l.as<LinearParams>()); break;
        case LayerKind::flatten: next = cur.reshaped({cur.dim(0), cur.size() / cur.dim(0)}); break;
        case LayerKind::channel_mask: next = channel_mask_apply(cur, l.as<ChannelMaskParams>().keep); break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
    pass.inputs.push_back(std::move(cur));
    cur = std::move(next);
  }
  pass.logits = std::move(cur);
  return pass;
}

/// Eval-mode forward without keeping intermediate activations.
inline Tensor predict(const NetworkGraph& graph, const Tensor& input, ConvAlgo algo = ConvAlgo::direct) {
  Tensor cur = detail::to_graph_input(graph, input);
  for (const auto& l : graph.layers()) {
    try {
      switch (l.kind()) {
        case LayerKind::conv: cur = conv2d_forward(cur, l.as<ConvParams>(), algo); break;
        case LayerKind::batchnorm: {
          BatchNormParams p = l.as<BatchNormParams>();
          cur = batchnorm_forward(cur, p, Mode::eval).output;
          break;
        }
        case LayerKind::relu: cur = relu_forward(cur); break;
        case LayerKind::maxpool: cur = maxpool2d_forward(cur, l.as<MaxPoolParams>()).output; break;
        case LayerKind::avgpool: cur = avgpool2d_forward(cur, l.as<AvgPoolParams>()); break;
        case LayerKind::linear: cur = linear_forward(cur, l.as<LinearParams>()); break;
        case LayerKind::flatten: cur = cur.reshaped({cur.dim(0), cur.size() / cur.dim(0)}); break;
        case LayerKind::channel_mask: cur = channel_mask_apply(cur, l.as<ChannelMaskParams>().keep); break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
  }
  return cur;
}

/// Back-propagates `grad_logits` through the pass, overwriting the gradient
/// buffer of every trainable tensor. Returns the gradient at the network input.
inline Tensor backward(NetworkGraph& graph, const ForwardPass& pass, const Tensor& grad_logits) {
  if (pass.inputs.size() != graph.size()) throw ShapeError("backward: forward pass does not match graph");
  require_shape(grad_logits, pass.logits.shape(), "backward grad_logits");
  auto store = [](Tensor& param, const Tensor& g) {
    auto dst = param.grad();
    std::copy(g.values().begin(), g.values().end(), dst.begin());
  };
  Tensor grad = grad_logits;
  for (std::size_t i = graph.size(); i-- > 0;) {
    auto& l = graph.layer(i);
    const Tensor& in = pass.inputs[i];
    try {
      switch (l.kind()) {
        case LayerKind::conv: {
          auto& p = l.as<ConvParams>();
          auto g = conv2d_backward(in, p, grad, pass.conv_algo);
          store(p.weights, g.grad_weights);
          if (p.bias) store(*p.bias, *g.grad_bias);
          grad = std::move(g.grad_input);
          break;
        }
        case LayerKind::batchnorm: {
          auto& p = l.as<BatchNormParams>();
          auto g = batchnorm_backward(pass.caches[i].batchnorm, p, grad);
          store(p.gamma, g.grad_gamma);
          store(p.beta, g.grad_beta);
          grad = std::move(g.grad_input);
          break;
        }
        case LayerKind::relu: grad = relu_backward(in, grad); break;
        case LayerKind::maxpool: grad = maxpool2d_backward(in.shape(), pass.caches[i].argmax, grad); break;
        case LayerKind::avgpool: grad = avgpool2d_backward(in.shape(), l.as<AvgPoolParams>(), grad); break;
        case LayerKind::linear: {
          auto& p = l.as<LinearParams>();
          auto g = linear_backward(in, p, grad);
          store(p.weights, g.grad_weights);
          store(p.bias, g.grad_bias);
          grad = std::move(g.grad_input);
          break;
        }
        case LayerKind::flatten: grad = grad.reshaped(in.shape()); break;
        case LayerKind::channel_mask: grad = channel_mask_apply(grad, l.as<ChannelMaskParams>().keep); break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Channel connectivity

/// A batchnorm layer together with the layer whose output channels it scales
/// and the layers that read those channels. Channels are pruned group-wise.
struct ChannelGroup {
  std::string bn_layer_name;
  std::string producer_layer_name;
  std::vector<std::string> consumer_layer_names;
  std::size_t channel_count = 0;

  std::size_t bn_index = 0;
  std::size_t producer_index = 0;
  std::vector<std::size_t> consumer_indices;
  std::vector<std::size_t> mask_indices;  // channel_mask layers carrying this group's channels
  std::size_t consumer_spatial = 1;       // columns per channel in a linear consumer (flatten mapping)
};

inline std::vector<ChannelGroup> channel_groups(const NetworkGraph& graph) {
  std::vector<ChannelGroup> groups;
  const auto shapes = graph.output_shapes();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& l = graph.layer(i);
    if (l.kind() != LayerKind::batchnorm) continue;
    if (i == 0 || !graph.layer(i - 1).is_weighted()) {
      throw ShapeError("batchnorm layer '" + l.name + "' has no identifiable producer");
    }
    ChannelGroup g;
    g.bn_layer_name = l.name;
    g.bn_index = i;
    g.producer_index = i - 1;
    g.producer_layer_name = graph.layer(i - 1).name;
    g.channel_count = l.as<BatchNormParams>().channels();
    for (std::size_t j = i + 1; j < graph.size(); ++j) {
      const auto& c = graph.layer(j);
      if (c.is_weighted()) {
        g.consumer_indices.push_back(j);
        g.consumer_layer_names.push_back(c.name);
        break;
      }
      if (c.kind() == LayerKind::batchnorm) {
        throw ShapeError("batchnorm layer '" + c.name + "' reads channels of '" + l.name + "' without a producer");
      }
      if (c.kind() == LayerKind::channel_mask) g.mask_indices.push_back(j);
      if (c.kind() == LayerKind::flatten) {
        const Shape& in = shapes[j - 1];
        g.consumer_spatial = in.size() == 3 ? in[1] * in[2] : 1;
      }
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace slimnet

#endif  // SLIMNET_NETWORK_HPP
