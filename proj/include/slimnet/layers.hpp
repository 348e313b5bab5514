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

#ifndef SLIMNET_LAYERS_HPP
#define SLIMNET_LAYERS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "slimnet/tensor.hpp"

// Forward and backward kernels for every layer kind a slimmable network is
// built from. All kernels are single-threaded with a fixed reduction order,
// so identical inputs give bit-identical outputs.

namespace slimnet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

enum class Mode { train, eval };

enum class ConvAlgo { direct, im2col };

struct ConvParams {
  Tensor weights;  // (out_channels, in_channels, kH, kW)
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel_h() const { return weights.dim(2); }
  std::size_t kernel_w() const { return weights.dim(3); }

  void validate() const {
    if (weights.rank() != 4) throw ShapeError("conv weights must be 4-D, got " + shape_string(weights.shape()));
    if (out_channels() < 1 || in_channels() < 1 || kernel_h() < 1 || kernel_w() < 1) {
      throw ShapeError("conv extents must be >= 1, got " + shape_string(weights.shape()));
    }
    if (stride < 1) throw ConfigError("conv stride must be >= 1");
    if (bias && bias->shape() != Shape{out_channels()}) {
      throw ShapeError("conv bias shape " + shape_string(bias->shape()) + " does not match " +
                       std::to_string(out_channels()) + " output channels");
    }
  }

  /// Output extent along one spatial axis.
  std::size_t output_extent(std::size_t input, std::size_t kernel) const {
    if (input + 2 * padding < kernel) {
      throw ShapeError("conv kernel " + std::to_string(kernel) + " larger than padded input " +
                       std::to_string(input + 2 * padding));
    }
    return (input + 2 * padding - kernel) / stride + 1;
  }
};

struct LinearParams {
  Tensor weights;  // (out_features, in_features)
  Tensor bias;     // (out_features)

  std::size_t out_features() const { return weights.dim(0); }
  std::size_t in_features() const { return weights.dim(1); }

  void validate() const {
    if (weights.rank() != 2) throw ShapeError("linear weights must be 2-D, got " + shape_string(weights.shape()));
    if (out_features() < 1 || in_features() < 1) {
      throw ShapeError("linear extents must be >= 1, got " + shape_string(weights.shape()));
    }
    require_shape(bias, {out_features()}, "linear bias");
  }
};

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNormParams() = default;
  explicit BatchNormParams(std::size_t channels, double gamma_init = 1.0)
      : gamma({channels}, gamma_init),
        beta({channels}, 0.0),
        running_mean({channels}, 0.0),
        running_var({channels}, 1.0) {}

  std::size_t channels() const { return gamma.size(); }

  void validate() const {
    const Shape s{channels()};
    require_shape(gamma, s, "batchnorm gamma");
    require_shape(beta, s, "batchnorm beta");
    require_shape(running_mean, s, "batchnorm running_mean");
    require_shape(running_var, s, "batchnorm running_var");
    if (!(eps > 0.0)) throw ConfigError("batchnorm eps must be positive");
    if (!(momentum > 0.0 && momentum <= 1.0)) throw ConfigError("batchnorm momentum must lie in (0,1]");
    for (double v : running_var.values()) {
      if (v < 0.0) throw ConfigError("batchnorm running_var must be non-negative");
    }
  }
};

struct PoolParams {
  std::size_t kernel = 2;
  std::size_t stride = 2;

  std::size_t output_extent(std::size_t input) const {
    if (kernel < 1 || stride < 1) throw ConfigError("pool kernel and stride must be >= 1");
    if (input < kernel) {
      throw ShapeError("pool window " + std::to_string(kernel) + " exceeds input extent " +
                       std::to_string(input));
    }
    return (input - kernel) / stride + 1;
  }
};

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

inline void require_conv_input(const Tensor& input, const ConvParams& p) {
  require_rank(input, 4, "conv2d input");
  if (input.dim(1) != p.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) + " channels, weights expect " +
                     std::to_string(p.in_channels()));
  }
}

// Range of output columns whose receptive field column `ox*stride + k - pad`
// falls inside [0, width).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t k, std::ptrdiff_t pad,
                                                             std::ptrdiff_t stride, std::ptrdiff_t width,
                                                             std::ptrdiff_t out) {
  std::ptrdiff_t lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  std::ptrdiff_t hi_num = width - 1 + pad - k;
  if (hi_num < 0) return {0, 0};
  std::ptrdiff_t hi = std::min(out, hi_num / stride + 1);
  return {lo, std::max(lo, hi)};
}

inline RowMatrix im2col(const double* image, std::size_t channels, std::size_t height, std::size_t width,
                        const ConvParams& p, std::size_t out_h, std::size_t out_w) {
  const std::size_t kh = p.kernel_h(), kw = p.kernel_w();
  RowMatrix cols = RowMatrix::Zero(channels * kh * kw, out_h * out_w);
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);
  const auto s = static_cast<std::ptrdiff_t>(p.stride);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols.row(static_cast<Eigen::Index>((c * kh + ky) * kw + kx)).data();
        auto [x0, x1] = valid_range(static_cast<std::ptrdiff_t>(kx), pad, s,
                                    static_cast<std::ptrdiff_t>(width), static_cast<std::ptrdiff_t>(out_w));
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          const double* irow = image + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::ptrdiff_t ox = x0; ox < x1; ++ox) {
            row[oy * out_w + static_cast<std::size_t>(ox)] =
                irow[ox * s + static_cast<std::ptrdiff_t>(kx) - pad];
          }
        }
      }
    }
  }
  return cols;
}

inline void col2im_add(const RowMatrix& cols, double* image, std::size_t channels, std::size_t height,
                       std::size_t width, const ConvParams& p, std::size_t out_h, std::size_t out_w) {
  const std::size_t kh = p.kernel_h(), kw = p.kernel_w();
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);
  const auto s = static_cast<std::ptrdiff_t>(p.stride);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols.row(static_cast<Eigen::Index>((c * kh + ky) * kw + kx)).data();
        auto [x0, x1] = valid_range(static_cast<std::ptrdiff_t>(kx), pad, s,
                                    static_cast<std::ptrdiff_t>(width), static_cast<std::ptrdiff_t>(out_w));
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          double* irow = image + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::ptrdiff_t ox = x0; ox < x1; ++ox) {
            irow[ox * s + static_cast<std::ptrdiff_t>(kx) - pad] += row[oy * out_w + static_cast<std::size_t>(ox)];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Shape conv2d_output_shape(const Shape& input, const ConvParams& p) {
  return {input.at(0), p.out_channels(), p.output_extent(input.at(2), p.kernel_h()),
          p.output_extent(input.at(3), p.kernel_w())};
}

/// Cross-correlation of `input` (N,C,H,W) with `params.weights` plus bias.
inline Tensor conv2d_forward(const Tensor& input, const ConvParams& params, ConvAlgo algo = ConvAlgo::direct) {
  params.validate();
  detail::require_conv_input(input, params);
  const Shape out_shape = conv2d_output_shape(input.shape(), params);
  Tensor out(out_shape);
  const std::size_t batch = input.dim(0), in_c = params.in_channels(), out_c = params.out_channels();
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t kh = params.kernel_h(), kw = params.kernel_w();
  const std::size_t oh = out_shape[2], ow = out_shape[3];
  const double* x = input.data();
  const double* wt = params.weights.data();
  double* y = out.data();

  if (algo == ConvAlgo::im2col) {
    ConstMatrixMap wmat(wt, static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(in_c * kh * kw));
    for (std::size_t n = 0; n < batch; ++n) {
      RowMatrix cols = detail::im2col(x + n * in_c * h * w, in_c, h, w, params, oh, ow);
      MatrixMap ymat(y + n * out_c * oh * ow, static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(oh * ow));
      ymat.noalias() = wmat * cols;
      if (params.bias) {
        for (std::size_t oc = 0; oc < out_c; ++oc) ymat.row(static_cast<Eigen::Index>(oc)).array() += (*params.bias)[oc];
      }
    }
    return out;
  }

  const auto pad = static_cast<std::ptrdiff_t>(params.padding);
  const auto s = static_cast<std::ptrdiff_t>(params.stride);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      double* plane = y + (n * out_c + oc) * oh * ow;
      std::fill(plane, plane + oh * ow, params.bias ? (*params.bias)[oc] : 0.0);
      for (std::size_t ic = 0; ic < in_c; ++ic) {
        const double* image = x + (n * in_c + ic) * h * w;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double k = wt[((oc * in_c + ic) * kh + ky) * kw + kx];
            auto [x0, x1] = detail::valid_range(static_cast<std::ptrdiff_t>(kx), pad, s,
                                                static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(ow));
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const double* irow = image + static_cast<std::size_t>(iy) * w;
              double* orow = plane + oy * ow;
              for (std::ptrdiff_t ox = x0; ox < x1; ++ox) {
                orow[ox] += k * irow[ox * s + static_cast<std::ptrdiff_t>(kx) - pad];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

struct ConvGrads {
  Tensor grad_input;
  Tensor grad_weights;
  std::optional<Tensor> grad_bias;
};

inline ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out,
                                 ConvAlgo algo = ConvAlgo::direct) {
  params.validate();
  detail::require_conv_input(input, params);
  require_shape(grad_out, conv2d_output_shape(input.shape(), params), "conv2d_backward grad_out");
  const std::size_t batch = input.dim(0), in_c = params.in_channels(), out_c = params.out_channels();
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t kh = params.kernel_h(), kw = params.kernel_w();
  const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);

  ConvGrads g{Tensor(input.shape()), Tensor(params.weights.shape()), std::nullopt};
  if (params.bias) {
    g.grad_bias = Tensor({out_c});
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t oc = 0; oc < out_c; ++oc) {
        const double* plane = grad_out.data() + (n * out_c + oc) * oh * ow;
        double acc = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += plane[i];
        (*g.grad_bias)[oc] += acc;
      }
    }
  }

  const double* x = input.data();
  const double* go = grad_out.data();
  const double* wt = params.weights.data();
  double* gx = g.grad_input.data();
  double* gw = g.grad_weights.data();

  if (algo == ConvAlgo::im2col) {
    ConstMatrixMap wmat(wt, static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(in_c * kh * kw));
    MatrixMap gwmat(gw, static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(in_c * kh * kw));
    for (std::size_t n = 0; n < batch; ++n) {
      RowMatrix cols = detail::im2col(x + n * in_c * h * w, in_c, h, w, params, oh, ow);
      ConstMatrixMap gomat(go + n * out_c * oh * ow, static_cast<Eigen::Index>(out_c),
                           static_cast<Eigen::Index>(oh * ow));
      gwmat.noalias() += gomat * cols.transpose();
      RowMatrix dcols = wmat.transpose() * gomat;
      detail::col2im_add(dcols, gx + n * in_c * h * w, in_c, h, w, params, oh, ow);
    }
    return g;
  }

  const auto pad = static_cast<std::ptrdiff_t>(params.padding);
  const auto s = static_cast<std::ptrdiff_t>(params.stride);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      const double* plane = go + (n * out_c + oc) * oh * ow;
      for (std::size_t ic = 0; ic < in_c; ++ic) {
        const double* image = x + (n * in_c + ic) * h * w;
        double* gimage = gx + (n * in_c + ic) * h * w;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = ((oc * in_c + ic) * kh + ky) * kw + kx;
            const double k = wt[widx];
            double acc = 0.0;
            auto [x0, x1] = detail::valid_range(static_cast<std::ptrdiff_t>(kx), pad, s,
                                                static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(ow));
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const double* irow = image + static_cast<std::size_t>(iy) * w;
              double* girow = gimage + static_cast<std::size_t>(iy) * w;
              const double* grow = plane + oy * ow;
              for (std::ptrdiff_t ox = x0; ox < x1; ++ox) {
                const std::ptrdiff_t ix = ox * s + static_cast<std::ptrdiff_t>(kx) - pad;
                acc += grow[ox] * irow[ix];
                girow[ix] += k * grow[ox];
              }
            }
            gw[widx] += acc;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Per-channel quantities kept from a forward pass for the backward pass.
struct BatchNormSaved {
  Mode mode = Mode::train;
  Tensor normalized;             // x-hat, same shape as the input
  std::vector<double> inv_std;   // 1/sqrt(var + eps) per channel
  std::vector<double> mean;      // statistic actually used (batch or running)
  std::vector<double> variance;  // biased batch variance, or running variance in eval
};

namespace detail {

struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

inline ChannelLayout channel_layout(const Tensor& t, std::string_view what) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2) * t.dim(3)};
  throw ShapeError(std::string(what) + ": expected 2-D or 4-D input, got " + shape_string(t.shape()));
}

}  // namespace detail

struct BatchNormResult {
  Tensor output;
  BatchNormSaved saved;
};

/// Normalizes each channel, then scales by gamma and shifts by beta. Train
/// mode normalizes with the biased batch variance and folds the batch
/// statistics into the running averages.
inline BatchNormResult batchnorm_forward(const Tensor& input, BatchNormParams& params, Mode mode) {
  params.validate();
  const auto [batch, channels, spatial] = detail::channel_layout(input, "batchnorm");
  if (channels != params.channels()) {
    throw ShapeError("batchnorm: input has " + std::to_string(channels) + " channels, parameters have " +
                     std::to_string(params.channels()));
  }
  const std::size_t count = batch * spatial;
  if (mode == Mode::train && count < 2) {
    throw ShapeError("batchnorm: train mode needs at least 2 samples per channel, got " + std::to_string(count));
  }

  BatchNormResult r{Tensor(input.shape()), BatchNormSaved{mode, Tensor(input.shape()), {}, {}, {}}};
  r.saved.inv_std.resize(channels);
  r.saved.mean.resize(channels);
  r.saved.variance.resize(channels);
  const double* x = input.data();
  double* xhat = r.saved.normalized.data();
  double* y = r.output.data();

  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = x + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = x + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      const double m = params.momentum;
      params.running_mean[c] = (1.0 - m) * params.running_mean[c] + m * mean;
      params.running_var[c] = (1.0 - m) * params.running_var[c] + m * var;
    } else {
      mean = params.running_mean[c];
      var = params.running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + params.eps);
    r.saved.mean[c] = mean;
    r.saved.variance[c] = var;
    r.saved.inv_std[c] = inv_std;
    const double gamma = params.gamma[c], beta = params.beta[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double z = (x[off + i] - mean) * inv_std;
        xhat[off + i] = z;
        y[off + i] = gamma * z + beta;
      }
    }
  }
  return r;
}

struct BatchNormGrads {
  Tensor grad_input;
  Tensor grad_gamma;
  Tensor grad_beta;
};

inline BatchNormGrads batchnorm_backward(const BatchNormSaved& saved, const BatchNormParams& params,
                                         const Tensor& grad_out) {
  if (saved.mode != Mode::train) {
    throw ConfigError("batchnorm_backward requires statistics saved by a train-mode forward pass");
  }
  require_shape(grad_out, saved.normalized.shape(), "batchnorm_backward grad_out");
  const auto [batch, channels, spatial] = detail::channel_layout(grad_out, "batchnorm_backward");
  if (channels != params.channels()) throw ShapeError("batchnorm_backward: channel count mismatch");
  const std::size_t count = batch * spatial;
  const double inv_count = 1.0 / static_cast<double>(count);

  BatchNormGrads g{Tensor(grad_out.shape()), Tensor({channels}), Tensor({channels})};
  const double* go = grad_out.data();
  const double* xhat = saved.normalized.data();
  double* gx = g.grad_input.data();
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_go = 0.0, sum_go_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_go += go[off + i];
        sum_go_xhat += go[off + i] * xhat[off + i];
      }
    }
    g.grad_beta[c] = sum_go;
    g.grad_gamma[c] = sum_go_xhat;
    const double scale = params.gamma[c] * saved.inv_std[c] * inv_count;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        gx[off + i] = scale * (static_cast<double>(count) * go[off + i] - sum_go - xhat[off + i] * sum_go_xhat);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Element-wise and pooling layers

inline Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  const double* x = input.data();
  double* y = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_shape(grad_out, input.shape(), "relu_backward grad_out");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

inline Shape pool2d_output_shape(const Shape& input, const PoolParams& p) {
  return {input.at(0), input.at(1), p.output_extent(input.at(2)), p.output_extent(input.at(3))};
}

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index chosen for each output element
};

inline MaxPoolResult maxpool2d_forward(const Tensor& input, const PoolParams& p) {
  require_rank(input, 4, "maxpool2d input");
  const Shape os = pool2d_output_shape(input.shape(), p);
  MaxPoolResult r{Tensor(os), std::vector<std::size_t>(shape_size(os))};
  const std::size_t planes = os[0] * os[1], h = input.dim(2), w = input.dim(3), oh = os[2], ow = os[3];
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = pl * h * w + (oy * p.stride) * w + ox * p.stride;
        for (std::size_t ky = 0; ky < p.kernel; ++ky) {
          for (std::size_t kx = 0; kx < p.kernel; ++kx) {
            const std::size_t idx = pl * h * w + (oy * p.stride + ky) * w + ox * p.stride + kx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (pl * oh + oy) * ow + ox;
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

inline Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                 const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2d_backward: argmax/grad_out size mismatch");
  Tensor g(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

inline Tensor avgpool2d_forward(const Tensor& input, const PoolParams& p) {
  require_rank(input, 4, "avgpool2d input");
  const Shape os = pool2d_output_shape(input.shape(), p);
  Tensor out(os);
  const std::size_t planes = os[0] * os[1], h = input.dim(2), w = input.dim(3), oh = os[2], ow = os[3];
  const double inv = 1.0 / static_cast<double>(p.kernel * p.kernel);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < p.kernel; ++ky) {
          for (std::size_t kx = 0; kx < p.kernel; ++kx) {
            acc += input[pl * h * w + (oy * p.stride + ky) * w + ox * p.stride + kx];
          }
        }
        out[(pl * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  return out;
}

inline Tensor avgpool2d_backward(const Shape& input_shape, const PoolParams& p, const Tensor& grad_out) {
  require_shape(grad_out, pool2d_output_shape(input_shape, p), "avgpool2d_backward grad_out");
  Tensor g(input_shape);
  const std::size_t planes = grad_out.dim(0) * grad_out.dim(1), h = input_shape[2], w = input_shape[3];
  const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  const double inv = 1.0 / static_cast<double>(p.kernel * p.kernel);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double v = grad_out[(pl * oh + oy) * ow + ox] * inv;
        for (std::size_t ky = 0; ky < p.kernel; ++ky) {
          for (std::size_t kx = 0; kx < p.kernel; ++kx) {
            g[pl * h * w + (oy * p.stride + ky) * w + ox * p.stride + kx] += v;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Fully connected

inline Tensor linear_forward(const Tensor& input, const LinearParams& params) {
  params.validate();
  require_rank(input, 2, "linear input");
  if (input.dim(1) != params.in_features()) {
    throw ShapeError("linear: input has " + std::to_string(input.dim(1)) + " features, weights expect " +
                     std::to_string(params.in_features()));
  }
  const auto n = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(params.in_features());
  const auto out = static_cast<Eigen::Index>(params.out_features());
  Tensor y({input.dim(0), params.out_features()});
  ConstMatrixMap x(input.data(), n, in);
  ConstMatrixMap wt(params.weights.data(), out, in);
  MatrixMap ym(y.data(), n, out);
  ym.noalias() = x * wt.transpose();
  Eigen::Map<const Eigen::RowVectorXd> b(params.bias.data(), out);
  ym.rowwise() += b;
  return y;
}

struct LinearGrads {
  Tensor grad_input;
  Tensor grad_weights;
  Tensor grad_bias;
};

inline LinearGrads linear_backward(const Tensor& input, const LinearParams& params, const Tensor& grad_out) {
  require_shape(grad_out, {input.dim(0), params.out_features()}, "linear_backward grad_out");
  const auto n = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(params.in_features());
  const auto out = static_cast<Eigen::Index>(params.out_features());
  LinearGrads g{Tensor(input.shape()), Tensor(params.weights.shape()), Tensor(params.bias.shape())};
  ConstMatrixMap x(input.data(), n, in);
  ConstMatrixMap wt(params.weights.data(), out, in);
  ConstMatrixMap go(grad_out.data(), n, out);
  MatrixMap(g.grad_input.data(), n, in).noalias() = go * wt;
  MatrixMap(g.grad_weights.data(), out, in).noalias() = go.transpose() * x;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < out; ++c) g.grad_bias[static_cast<std::size_t>(c)] += go(r, c);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Channel selection

/// Multiplies every channel whose keep flag is false by zero.
inline Tensor channel_mask_apply(const Tensor& input, const std::vector<std::uint8_t>& keep) {
  const auto [batch, channels, spatial] = detail::channel_layout(input, "channel_mask");
  if (channels != keep.size()) {
    throw ShapeError("channel_mask: input has " + std::to_string(channels) + " channels, mask has " +
                     std::to_string(keep.size()));
  }
  Tensor out(input.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * spatial;
      const double f = keep[c] ? 1.0 : 0.0;
      for (std::size_t i = 0; i < spatial; ++i) out[off + i] = input[off + i] * f;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;
};

/// Mean negative log-likelihood of `labels` under softmax(`logits`), with the
/// gradient of that mean with respect to the logits.
inline LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ConfigError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0," +
                        std::to_string(classes) + ")");
    }
    const double* z = logits.data() + i * classes;
    double* g = r.grad_logits.data() + i * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const double log_sum = std::log(sum);
    r.loss += (zmax + log_sum - z[label]) * inv_n;
    for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(z[c] - zmax - log_sum) * inv_n;
    g[label] -= inv_n;
  }
  return r;
}

}  // namespace slimnet

#endif  // SLIMNET_LAYERS_HPP
