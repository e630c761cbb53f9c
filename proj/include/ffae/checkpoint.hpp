#pragma once

// Binary checkpoint format. Layout (all integers little-endian):
//   magic "FFAE" | u32 version | u32 kind (0=ff, 1=bp) | u32 stage
//   (0=normalize, 1=quantize) | u64 k | u64 n | u64 layer count,
// then per dense layer a weight tensor followed by a bias tensor:
//   u64 name length | name bytes | u64 rank | u64 dims... | f64 values
// (row-major). Encoder layers come first, then decoder, then the classifier
// for the forward-forward kind. Readers reject versions newer than their own.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ffae/models.hpp"
#include "ffae/version.hpp"

namespace ffae {

namespace ckpt {

inline constexpr std::uint32_t kKindFf = 0;
inline constexpr std::uint32_t kKindBp = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_tensor(std::ostream& os, const std::string& name,
                         const std::vector<std::uint64_t>& dims, const double* data,
                         std::size_t count) {
  write_u64(os, name.size());
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(os, dims.size());
  for (auto d : dims) write_u64(os, d);
  for (std::size_t i = 0; i < count; ++i) write_f64(os, data[i]);
}

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  Vec values;
};

inline Tensor read_tensor(std::istream& is) {
  Tensor t;
  const auto name_len = read_u64(is);
  if (name_len > 4096) throw std::runtime_error("checkpoint: implausible tensor name length");
  t.name.resize(name_len);
  is.read(t.name.data(), static_cast<std::streamsize>(name_len));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  const auto rank = read_u64(is);
  if (rank > 4) throw std::runtime_error("checkpoint: implausible tensor rank");
  std::uint64_t count = 1;
  for (std::uint64_t r = 0; r < rank; ++r) {
    t.dims.push_back(read_u64(is));
    count *= t.dims.back();
  }
  if (count > (1ull << 32)) throw std::runtime_error("checkpoint: implausible tensor size");
  t.values.resize(count);
  for (auto& v : t.values) v = read_f64(is);
  return t;
}

inline void write_layer(std::ostream& os, const std::string& prefix, const DenseLayer& l) {
  write_tensor(os, prefix + ".weight", {l.out(), l.in()}, l.W.a.data(), l.W.a.size());
  write_tensor(os, prefix + ".bias", {l.out()}, l.b.data(), l.b.size());
}

inline void write_header(std::ostream& os, std::uint32_t kind, std::uint32_t stage,
                         const CodeParams& code, std::uint64_t layer_count) {
  os.write("FFAE", 4);
  write_u32(os, kCheckpointFormatVersion);
  write_u32(os, kind);
  write_u32(os, stage);
  write_u64(os, code.k);
  write_u64(os, code.n);
  write_u64(os, layer_count);
}

inline DenseLayer layer_from_tensors(const Tensor& w, const Tensor& b, Activation act) {
  if (w.dims.size() != 2 || b.dims.size() != 1 || w.dims[0] != b.dims[0])
    throw std::runtime_error("checkpoint: inconsistent layer tensors near " + w.name);
  DenseLayer l;
  l.W = Mat(w.dims[0], w.dims[1]);
  l.W.a = w.values;
  l.b = b.values;
  l.act = act;
  return l;
}

}  // namespace ckpt

inline void save_checkpoint(const std::string& path, const FfAutoencoder& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  const std::uint64_t layers = m.encoder.size() + m.decoder.size() + 1;
  ckpt::write_header(os, ckpt::kKindFf,
                     m.stage == OutputStage::quantize ? 1u : 0u, m.code, layers);
  for (std::size_t i = 0; i < m.encoder.size(); ++i)
    ckpt::write_layer(os, "enc." + std::to_string(i), m.encoder[i]);
  for (std::size_t i = 0; i < m.decoder.size(); ++i)
    ckpt::write_layer(os, "dec." + std::to_string(i), m.decoder[i]);
  ckpt::write_layer(os, "classifier", m.classifier);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline void save_checkpoint(const std::string& path, const BpAutoencoder& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  const std::uint64_t layers = m.encoder.size() + m.decoder.size();
  ckpt::write_header(os, ckpt::kKindBp,
                     m.quantize ? 1u : 0u, m.code, layers);
  for (std::size_t i = 0; i < m.encoder.size(); ++i)
    ckpt::write_layer(os, "enc." + std::to_string(i), m.encoder[i]);
  for (std::size_t i = 0; i < m.decoder.size(); ++i)
    ckpt::write_layer(os, "dec." + std::to_string(i), m.decoder[i]);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

using AnyModel = std::variant<FfAutoencoder, BpAutoencoder>;

inline AnyModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FFAE", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = ckpt::read_u32(is);
  if (version == 0 || version > kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  const auto kind = ckpt::read_u32(is);
  const auto stage = ckpt::read_u32(is);
  if (kind > 1 || stage > 1) throw std::runtime_error("checkpoint: bad kind or stage tag");
  const auto k = ckpt::read_u64(is);
  const auto n = ckpt::read_u64(is);
  const CodeParams code = CodeParams::make(static_cast<unsigned>(k), n);
  const auto layer_count = ckpt::read_u64(is);
  if (layer_count == 0 || layer_count > 1024)
    throw std::runtime_error("checkpoint: implausible layer count");

  std::vector<ckpt::Tensor> tensors;
  for (std::uint64_t i = 0; i < 2 * layer_count; ++i) tensors.push_back(ckpt::read_tensor(is));

  auto take = [&](std::size_t idx, const std::string& prefix) {
    if (tensors[2 * idx].name != prefix + ".weight" ||
        tensors[2 * idx + 1].name != prefix + ".bias")
      throw std::runtime_error("checkpoint: unexpected tensor " + tensors[2 * idx].name);
    return std::pair<const ckpt::Tensor&, const ckpt::Tensor&>(tensors[2 * idx],
                                                               tensors[2 * idx + 1]);
  };

  // Group tensors into encoder / decoder / classifier by name prefix.
  std::size_t enc_layers = 0, dec_layers = 0;
  bool has_classifier = false;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const std::string& name = tensors[2 * i].name;
    if (name.starts_with("enc."))
      ++enc_layers;
    else if (name.starts_with("dec."))
      ++dec_layers;
    else if (name == "classifier.weight")
      has_classifier = true;
    else
      throw std::runtime_error("checkpoint: unexpected tensor " + name);
  }
  if (enc_layers == 0 || dec_layers == 0)
    throw std::runtime_error("checkpoint: missing encoder or decoder layers");
  if ((kind == ckpt::kKindFf) != has_classifier)
    throw std::runtime_error("checkpoint: classifier presence does not match kind");

  std::size_t idx = 0;
  auto read_stack = [&](const char* prefix, std::size_t count, bool last_linear) {
    std::vector<DenseLayer> stack;
    for (std::size_t i = 0; i < count; ++i, ++idx) {
      auto [w, b] = take(idx, std::string(prefix) + "." + std::to_string(i));
      const bool linear = last_linear && i + 1 == count;
      stack.push_back(
          ckpt::layer_from_tensors(w, b, linear ? Activation::linear : Activation::relu));
    }
    return stack;
  };

  if (kind == ckpt::kKindFf) {
    FfAutoencoder m;
    m.code = code;
    m.stage = stage ? OutputStage::quantize : OutputStage::normalize;
    m.encoder = read_stack("enc", enc_layers, true);
    m.decoder = read_stack("dec", dec_layers, false);
    auto [cw, cb] = take(idx, "classifier");
    m.classifier = ckpt::layer_from_tensors(cw, cb, Activation::linear);
    if (m.encoder.front().in() != 2 * code.q || m.encoder.back().out() != code.n ||
        m.decoder.front().in() != code.n ||
        m.classifier.in() != m.classifier_input_width() || m.classifier.out() != code.q)
      throw std::runtime_error("checkpoint: layer shapes do not form a valid model");
    for (std::size_t i = 1; i < m.encoder.size(); ++i)
      if (m.encoder[i].in() != m.encoder[i - 1].out())
        throw std::runtime_error("checkpoint: encoder shape chain broken");
    for (std::size_t i = 1; i < m.decoder.size(); ++i)
      if (m.decoder[i].in() != m.decoder[i - 1].out())
        throw std::runtime_error("checkpoint: decoder shape chain broken");
    for (const auto& l : m.encoder) m.encoder_tau.push_back(static_cast<double>(l.out()));
    for (const auto& l : m.decoder) m.decoder_tau.push_back(static_cast<double>(l.out()));
    return m;
  }

  BpAutoencoder m;
  m.code = code;
  m.quantize = stage != 0;
  m.encoder = read_stack("enc", enc_layers, true);
  m.decoder = read_stack("dec", dec_layers, true);
  if (m.encoder.front().in() != code.q || m.encoder.back().out() != code.n ||
      m.decoder.front().in() != code.n || m.decoder.back().out() != code.q)
    throw std::runtime_error("checkpoint: layer shapes do not form a valid model");
  for (std::size_t i = 1; i < m.encoder.size(); ++i)
    if (m.encoder[i].in() != m.encoder[i - 1].out())
      throw std::runtime_error("checkpoint: encoder shape chain broken");
  for (std::size_t i = 1; i < m.decoder.size(); ++i)
    if (m.decoder[i].in() != m.decoder[i - 1].out())
      throw std::runtime_error("checkpoint: decoder shape chain broken");
  return m;
}

}  // namespace ffae
