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

#ifndef SLIMNET_MODEL_IO_HPP
#define SLIMNET_MODEL_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "slimnet/network.hpp"

namespace slimnet {

/// Binary model container ("NSLM"), all integers little-endian:
///
///   magic "NSLM" | u16 version | u32 layer_count | u32 input_rank | u32 dims...
///   per layer:
///     u16 name_len | name bytes | u8 kind
///     hyper-parameters: conv    u32 stride, u32 padding, u8 has_bias
///                       bn      f64 eps, f64 momentum
///                       pools   u32 kernel, u32 stride
///                       mask    u32 count, u8 flag per channel
///                       others  (none)
///     u32 tensor_count, per tensor: u32 rank | u32 dims... | f32 payload
///   u32 CRC-32 of every preceding byte
class ModelFormatError : public Error {
 public:
  enum class Kind { io, checksum, bad_magic, version, unknown_kind, malformed };
  ModelFormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint16_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'N', 'S', 'L', 'M'};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw ModelFormatError(ModelFormatError::Kind::malformed, "model file: unexpected end of data");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw ModelFormatError(ModelFormatError::Kind::malformed, std::string(what) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

inline void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u32(checked_u32(t.rank(), "tensor rank"));
  for (auto d : t.shape()) w.u32(checked_u32(d, "tensor extent"));
  for (double v : t.values()) w.f32(static_cast<float>(v));
}

inline Tensor read_tensor(ByteReader& r) {
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 8) {
    throw ModelFormatError(ModelFormatError::Kind::malformed, "model file: tensor rank " + std::to_string(rank));
  }
  Shape s(rank);
  std::uint64_t n = 1;
  for (auto& d : s) {
    d = r.u32();
    n *= d;
    if (n > r.remaining()) {
      throw ModelFormatError(ModelFormatError::Kind::malformed, "model file: tensor payload exceeds file size");
    }
  }
  std::vector<double> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = static_cast<double>(r.f32());
  return Tensor(std::move(s), std::move(data));
}

}  // namespace detail

/// Encodes `graph` as an NSLM byte string. Deterministic for a given graph.
inline std::vector<std::uint8_t> serialize_model(const NetworkGraph& graph) {
  detail::ByteWriter w;
  w.raw(kModelMagic, 4);
  w.u16(kModelFormatVersion);
  w.u32(detail::checked_u32(graph.size(), "layer count"));
  w.u32(detail::checked_u32(graph.input_shape().size(), "input rank"));
  for (auto d : graph.input_shape()) w.u32(detail::checked_u32(d, "input extent"));

  for (const auto& l : graph.layers()) {
    if (l.name.size() > UINT16_MAX) throw ModelFormatError(ModelFormatError::Kind::malformed, "layer name too long");
    w.u16(static_cast<std::uint16_t>(l.name.size()));
    w.raw(l.name.data(), l.name.size());
    w.u8(static_cast<std::uint8_t>(l.kind()));
    std::vector<const Tensor*> tensors;
    switch (l.kind()) {
      case LayerKind::conv: {
        const auto& p = l.as<ConvParams>();
        w.u32(detail::checked_u32(p.stride, "stride"));
        w.u32(detail::checked_u32(p.padding, "padding"));
        w.u8(p.bias ? 1 : 0);
        tensors.push_back(&p.weights);
        if (p.bias) tensors.push_back(&*p.bias);
        break;
      }
      case LayerKind::batchnorm: {
        const auto& p = l.as<BatchNormParams>();
        w.f64(p.eps);
        w.f64(p.momentum);
        tensors = {&p.gamma, &p.beta, &p.running_mean, &p.running_var};
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        const PoolParams& p = l.kind() == LayerKind::maxpool ? static_cast<const PoolParams&>(l.as<MaxPoolParams>())
                                                            : static_cast<const PoolParams&>(l.as<AvgPoolParams>());
        w.u32(detail::checked_u32(p.kernel, "pool kernel"));
        w.u32(detail::checked_u32(p.stride, "pool stride"));
        break;
      }
      case LayerKind::linear: {
        const auto& p = l.as<LinearParams>();
        tensors = {&p.weights, &p.bias};
        break;
      }
      case LayerKind::channel_mask: {
        const auto& p = l.as<ChannelMaskParams>();
        w.u32(detail::checked_u32(p.keep.size(), "mask length"));
        for (auto k : p.keep) w.u8(k ? 1 : 0);
        break;
      }
      case LayerKind::relu:
      case LayerKind::flatten: break;
    }
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) detail::write_tensor(w, *t);
  }
  auto& bytes = w.bytes();
  w.u32(detail::crc32_of(bytes.data(), bytes.size()));
  return std::move(bytes);
}

/// Decodes an NSLM byte string. The checksum is verified before anything
/// else is parsed, so truncated or corrupted input never yields a graph.
inline NetworkGraph deserialize_model(const std::vector<std::uint8_t>& bytes) {
  using K = ModelFormatError::Kind;
  if (bytes.size() < 4 + 2 + 4 + 4 + 4) throw ModelFormatError(K::checksum, "model file: checksum mismatch (file too short)");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (detail::crc32_of(bytes.data(), body) != stored) throw ModelFormatError(K::checksum, "model file: checksum mismatch");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw ModelFormatError(K::bad_magic, "model file: bad magic");

  detail::ByteReader r(bytes.data() + 4, body - 4);
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion) {
    throw ModelFormatError(K::version, "model file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t layer_count = r.u32();
  const std::uint32_t input_rank = r.u32();
  if (input_rank == 0 || input_rank > 3) throw ModelFormatError(K::malformed, "model file: input rank " + std::to_string(input_rank));
  Shape input(input_rank);
  for (auto& d : input) d = r.u32();

  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec spec;
    spec.name = r.str(r.u16());
    const std::uint8_t tag = r.u8();
    if (tag > static_cast<std::uint8_t>(LayerKind::channel_mask)) {
      throw ModelFormatError(K::unknown_kind, "model file: unknown layer kind " + std::to_string(tag) + " for '" +
                                                  spec.name + "'");
    }
    const auto kind = static_cast<LayerKind>(tag);
    std::size_t expected = 0;
    bool has_bias = false;
    switch (kind) {
      case LayerKind::conv: {
        ConvParams p;
        p.stride = r.u32();
        p.padding = r.u32();
        has_bias = r.u8() != 0;
        expected = has_bias ? 2 : 1;
        spec.params = std::move(p);
        break;
      }
      case LayerKind::batchnorm: {
        BatchNormParams p;
        p.eps = r.f64();
        p.momentum = r.f64();
        expected = 4;
        spec.params = std::move(p);
        break;
      }
      case LayerKind::maxpool: {
        MaxPoolParams p;
        p.kernel = r.u32();
        p.stride = r.u32();
        spec.params = p;
        break;
      }
      case LayerKind::avgpool: {
        AvgPoolParams p;
        p.kernel = r.u32();
        p.stride = r.u32();
        spec.params = p;
        break;
      }
      case LayerKind::linear: expected = 2; spec.params = LinearParams{}; break;
      case LayerKind::channel_mask: {
        ChannelMaskParams p;
        p.keep.resize(r.u32());
        for (auto& k : p.keep) k = r.u8() ? 1 : 0;
        spec.params = std::move(p);
        break;
      }
      case LayerKind::relu: spec.params = ReluLayer{}; break;
      case LayerKind::flatten: spec.params = FlattenLayer{}; break;
    }
    const std::uint32_t count = r.u32();
    if (count != expected) {
      throw ModelFormatError(K::malformed, "model file: layer '" + spec.name + "' has " + std::to_string(count) +
                                               " tensors, expected " + std::to_string(expected));
    }
    std::vector<Tensor> ts;
    for (std::uint32_t t = 0; t < count; ++t) ts.push_back(detail::read_tensor(r));
    switch (kind) {
      case LayerKind::conv: {
        auto& p = spec.as<ConvParams>();
        p.weights = std::move(ts[0]);
        if (has_bias) p.bias = std::move(ts[1]);
        break;
      }
      case LayerKind::batchnorm: {
        auto& p = spec.as<BatchNormParams>();
        p.gamma = std::move(ts[0]);
        p.beta = std::move(ts[1]);
        p.running_mean = std::move(ts[2]);
        p.running_var = std::move(ts[3]);
        break;
      }
      case LayerKind::linear: {
        auto& p = spec.as<LinearParams>();
        p.weights = std::move(ts[0]);
        p.bias = std::move(ts[1]);
        break;
      }
      default: break;
    }
    layers.push_back(std::move(spec));
  }
  if (r.remaining() != 0) throw ModelFormatError(K::malformed, "model file: trailing bytes before checksum");
  try {
    return NetworkGraph(std::move(input), std::move(layers));
  } catch (const ModelFormatError&) {
    throw;
  } catch (const Error& e) {
    throw ModelFormatError(K::malformed, std::string("model file: invalid network: ") + e.what());
  }
}

inline void save_model(const NetworkGraph& graph, const std::filesystem::path& path) {
  const auto bytes = serialize_model(graph);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelFormatError(ModelFormatError::Kind::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelFormatError(ModelFormatError::Kind::io, "write to '" + path.string() + "' failed");
}

inline NetworkGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError(ModelFormatError::Kind::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace slimnet

#endif  // SLIMNET_MODEL_IO_HPP
