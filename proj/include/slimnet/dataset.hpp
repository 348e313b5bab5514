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

#ifndef SLIMNET_DATASET_HPP
#define SLIMNET_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slimnet/optimizer.hpp"
#include "slimnet/tensor.hpp"

namespace slimnet {

/// Malformed or unreadable dataset file.
class DataFormatError : public Error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };

  DataFormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// x_normalized = (x_raw - mean) / stddev, applied to every channel.
struct Normalization {
  double mean = 0.0;
  double stddev = 1.0;
};

inline constexpr Normalization kMnistNormalization{0.1307, 0.3081};

struct Dataset {
  Tensor images;            // (N, C, H, W)
  std::vector<int> labels;  // N entries in [0, classes)
  std::size_t classes = 0;
  Normalization normalization{};

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  std::size_t sample_size() const { return shape_size(sample_shape()); }

  void validate() const {
    require_rank(images, 4, "dataset images");
    if (images.dim(0) != labels.size()) {
      throw DataFormatError(DataFormatError::Kind::count_mismatch,
                            "dataset has " + std::to_string(images.dim(0)) + " images but " +
                                std::to_string(labels.size()) + " labels");
    }
    for (int l : labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= classes) {
        throw ConfigError("dataset label " + std::to_string(l) + " outside [0," + std::to_string(classes) + ")");
      }
    }
  }

  /// Copies the samples at `indices` (in that order) into a batch.
  Dataset gather(std::span<const std::size_t> indices) const {
    Dataset out;
    Shape s = images.shape();
    s[0] = indices.size();
    out.images = Tensor(s);
    out.labels.reserve(indices.size());
    out.classes = classes;
    out.normalization = normalization;
    const std::size_t stride = sample_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const double* src = images.data() + indices[i] * stride;
      std::copy(src, src + stride, out.images.data() + i * stride);
      out.labels.push_back(labels[indices[i]]);
    }
    return out;
  }

  Dataset slice(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return gather(idx);
  }
};

// ---------------------------------------------------------------------------
// IDX

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError(DataFormatError::Kind::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

struct IdxPayload {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
};

inline IdxPayload parse_idx(const std::vector<std::uint8_t>& b, std::uint32_t magic, const std::string& what) {
  if (b.size() < 4) throw DataFormatError(DataFormatError::Kind::truncated, what + ": file shorter than header");
  const std::uint32_t got = read_be32(b, 0);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08X (expected 0x%08X)", got, magic);
    throw DataFormatError(DataFormatError::Kind::bad_magic, what + ": " + buf);
  }
  const std::size_t rank = magic & 0xFFu;
  if (b.size() < 4 + 4 * rank) throw DataFormatError(DataFormatError::Kind::truncated, what + ": truncated header");
  IdxPayload p;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    p.dims.push_back(read_be32(b, 4 + 4 * i));
    count *= p.dims.back();
  }
  const std::size_t off = 4 + 4 * rank;
  if (b.size() - off < count) {
    throw DataFormatError(DataFormatError::Kind::truncated, what + ": payload has " + std::to_string(b.size() - off) +
                                                                " bytes, header declares " + std::to_string(count));
  }
  p.bytes.assign(b.begin() + static_cast<std::ptrdiff_t>(off), b.begin() + static_cast<std::ptrdiff_t>(off + count));
  return p;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image/label file pair. Pixels are scaled to [0,1] and then
/// normalized with `norm`, which is recorded in the dataset.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        Normalization norm = kMnistNormalization, std::size_t classes = 10) {
  const auto img = detail::parse_idx(detail::read_file(images_path), kIdxImageMagic, images_path.string());
  const auto lab = detail::parse_idx(detail::read_file(labels_path), kIdxLabelMagic, labels_path.string());
  if (img.dims[0] != lab.dims[0]) {
    throw DataFormatError(DataFormatError::Kind::count_mismatch,
                          "image file holds " + std::to_string(img.dims[0]) + " items, label file " +
                              std::to_string(lab.dims[0]));
  }
  Dataset ds;
  ds.classes = classes;
  ds.normalization = norm;
  ds.images = Tensor({img.dims[0], 1, img.dims[1], img.dims[2]});
  for (std::size_t i = 0; i < img.bytes.size(); ++i) {
    ds.images[i] = (static_cast<double>(img.bytes[i]) / 255.0 - norm.mean) / norm.stddev;
  }
  ds.labels.assign(lab.bytes.begin(), lab.bytes.end());
  ds.validate();
  return ds;
}

/// Raw pixel in [0,1] from a normalized value.
inline double denormalize(double v, const Normalization& norm) { return v * norm.stddev + norm.mean; }

/// Writes single-channel images back to IDX (inverse of load_idx).
inline void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  ds.validate();
  if (ds.images.dim(1) != 1) throw ShapeError("write_idx: only single-channel images are representable");
  std::vector<std::uint8_t> img;
  detail::put_be32(img, kIdxImageMagic);
  detail::put_be32(img, static_cast<std::uint32_t>(ds.images.dim(0)));
  detail::put_be32(img, static_cast<std::uint32_t>(ds.images.dim(2)));
  detail::put_be32(img, static_cast<std::uint32_t>(ds.images.dim(3)));
  for (double v : ds.images.values()) {
    const double raw = std::clamp(denormalize(v, ds.normalization) * 255.0, 0.0, 255.0);
    img.push_back(static_cast<std::uint8_t>(std::lround(raw)));
  }
  std::vector<std::uint8_t> lab;
  detail::put_be32(lab, kIdxLabelMagic);
  detail::put_be32(lab, static_cast<std::uint32_t>(ds.labels.size()));
  for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));
  std::ofstream(images_path, std::ios::binary).write(reinterpret_cast<const char*>(img.data()),
                                                     static_cast<std::streamsize>(img.size()));
  std::ofstream(labels_path, std::ios::binary).write(reinterpret_cast<const char*>(lab.data()),
                                                     static_cast<std::streamsize>(lab.size()));
}

/// Locations of the four standard MNIST files under `dir`.
struct MnistFiles {
  std::filesystem::path train_images, train_labels, test_images, test_labels;

  explicit MnistFiles(const std::filesystem::path& dir)
      : train_images(dir / "train-images-idx3-ubyte"),
        train_labels(dir / "train-labels-idx1-ubyte"),
        test_images(dir / "t10k-images-idx3-ubyte"),
        test_labels(dir / "t10k-labels-idx1-ubyte") {}

  bool exist() const {
    namespace fs = std::filesystem;
    return fs::exists(train_images) && fs::exists(train_labels) && fs::exists(test_images) && fs::exists(test_labels);
  }
};

/// `explicit_dir` if non-empty, otherwise $SLIMNET_DATA_DIR, otherwise ".".
inline std::filesystem::path resolve_data_dir(const std::string& explicit_dir = {}) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("SLIMNET_DATA_DIR"); env && *env) return env;
  return ".";
}

// ---------------------------------------------------------------------------
// Splits and transforms

/// Shuffles with `split_seed` and holds out the last `validation_size`
/// examples. Returns {train, validation}.
inline std::pair<Dataset, Dataset> split_validation(const Dataset& ds, std::size_t validation_size,
                                                    std::uint64_t split_seed) {
  if (validation_size >= ds.size()) throw ConfigError("validation split larger than dataset");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(split_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t cut = ds.size() - validation_size;
  return {ds.gather(std::span(idx).first(cut)), ds.gather(std::span(idx).subspan(cut))};
}

/// Average-pools every image by `factor` in both spatial dimensions.
inline Dataset downscale(const Dataset& ds, std::size_t factor) {
  if (factor < 1) throw ConfigError("downscale factor must be >= 1");
  const std::size_t n = ds.images.dim(0), c = ds.images.dim(1), h = ds.images.dim(2) / factor,
                    w = ds.images.dim(3) / factor;
  Dataset out = ds;
  out.images = Tensor({n, c, h, w});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            acc += ds.images[(p * ds.images.dim(2) + y * factor + dy) * ds.images.dim(3) + x * factor + dx];
          }
        }
        out.images[(p * h + y) * w + x] = acc * inv;
      }
    }
  }
  return out;
}

/// Gaussian class clusters: each class mean is a random unit direction scaled
/// by `margin`, samples add unit-variance isotropic noise.
inline Dataset synthetic_blobs(std::size_t classes, std::size_t per_class, const Shape& shape, std::uint64_t seed,
                               double margin = 4.0) {
  if (classes < 1 || per_class < 1) throw ConfigError("synthetic_blobs: classes and per_class must be >= 1");
  if (shape.size() != 3) throw ConfigError("synthetic_blobs: sample shape must be (C,H,W)");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = shape_size(shape);
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
  for (auto& m : means) {
    double norm = 0.0;
    for (double& v : m) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m) v *= margin / norm;
  }
  Dataset ds;
  ds.classes = classes;
  ds.images = Tensor({classes * per_class, shape[0], shape[1], shape[2]});
  ds.labels.reserve(classes * per_class);
  for (std::size_t i = 0; i < classes * per_class; ++i) {
    const std::size_t cls = i % classes;
    ds.labels.push_back(static_cast<int>(cls));
    double* dst = ds.images.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) dst[d] = means[cls][d] + normal(rng);
  }
  return ds;
}

struct AugmentConfig {
  std::size_t pad = 0;
  bool mirror = false;
};

/// Horizontal flip of one (C,H,W) image in place.
inline void mirror_image(double* image, std::size_t channels, std::size_t h, std::size_t w) {
  for (std::size_t r = 0; r < channels * h; ++r) std::reverse(image + r * w, image + (r + 1) * w);
}

/// Zero-pads every image by `pad`, takes a uniformly placed crop of the
/// original size, and mirrors it with probability 0.5 when enabled.
inline Tensor augment(const Tensor& batch, const AugmentConfig& config, Rng& rng) {
  require_rank(batch, 4, "augment batch");
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (config.pad == 0 && !config.mirror) return batch;
  Tensor out(batch.shape());
  std::uniform_int_distribution<std::size_t> offset(0, 2 * config.pad);
  std::bernoulli_distribution flip(0.5);
  const auto pad = static_cast<std::ptrdiff_t>(config.pad);
  for (std::size_t i = 0; i < n; ++i) {
    const auto oy = static_cast<std::ptrdiff_t>(config.pad ? offset(rng) : 0) - pad;
    const auto ox = static_cast<std::ptrdiff_t>(config.pad ? offset(rng) : 0) - pad;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
        for (std::size_t x = 0; x < w; ++x) {
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + ox;
          const bool inside = sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                              sx < static_cast<std::ptrdiff_t>(w);
          out.at(i, ch, y, x) = inside ? batch.at(i, ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx))
                                       : 0.0;
        }
      }
    }
    if (config.mirror && flip(rng)) mirror_image(out.data() + i * c * h * w, c, h, w);
  }
  return out;
}

}  // namespace slimnet

#endif  // SLIMNET_DATASET_HPP
