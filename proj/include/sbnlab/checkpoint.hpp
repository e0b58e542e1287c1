#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "sbnlab/errors.hpp"
#include "sbnlab/network.hpp"

namespace sbnlab {

// Checkpoint container:
//   "SBNCKPT1" | u32 layer count | per-layer manifest entry + parameter blobs
//   | u32 CRC32 of everything before the footer.
// Integers and f64 payloads are little-endian. Round-trips are bit-exact.
namespace ckpt {

constexpr char kMagic[8] = {'S', 'B', 'N', 'C', 'K', 'P', 'T', '1'};

enum LayerTag : uint8_t {
  kLinear = 1,
  kConv2d = 2,
  kReLU = 3,
  kMaxPool2d = 4,
  kFlatten = 5,
  kBatchNorm = 6,
};

class Writer {
 public:
  void put_u8(uint8_t v) { buf_.push_back(v); }

  void put_u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  void put_f64(double v) {
    uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  }

  void put_f64_span(const std::vector<double>& xs) {
    for (double v : xs) put_f64(v);
  }

  std::vector<uint8_t>& bytes() { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

  uint8_t get_u8() {
    need(1);
    return p_[pos_++];
  }

  uint32_t get_u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p_[pos_++]) << (8 * i);
    return v;
  }

  double get_f64() {
    need(8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p_[pos_++]) << (8 * i);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::vector<double> get_f64_vec(size_t n) {
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = get_f64();
    return out;
  }

  size_t pos() const { return pos_; }

 private:
  void need(size_t k) {
    if (pos_ + k > n_) throw FormatError("checkpoint: truncated payload");
  }

  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

inline void write_batchnorm(Writer& w, BatchNorm& bn) {
  w.put_u32(static_cast<uint32_t>(bn.channels()));
  w.put_f64(bn.epsilon());
  w.put_f64(bn.momentum());
  w.put_u8(bn.stats_initialized() ? 1 : 0);
  w.put_f64_span(bn.gamma().values());
  w.put_f64_span(bn.beta().values());
  w.put_f64_span(bn.running_mean());
  w.put_f64_span(bn.running_var());
  if (bn.sbn().has_value()) {
    const SbnApprox& a = *bn.sbn();
    w.put_u8(1);
    w.put_f64(a.alpha());
    w.put_u8(a.initialized() ? 1 : 0);
    w.put_f64_span(a.t1_mu());
    w.put_f64_span(a.t2_mu());
    w.put_f64_span(a.t1_logsig());
    w.put_f64_span(a.t2_logsig());
  } else {
    w.put_u8(0);
  }
}

inline std::unique_ptr<BatchNorm> read_batchnorm(Reader& r) {
  const size_t channels = r.get_u32();
  const double eps = r.get_f64();
  const double momentum = r.get_f64();
  const bool init = r.get_u8() != 0;
  auto bn = std::make_unique<BatchNorm>(channels, eps, momentum);
  bn->gamma().values() = r.get_f64_vec(channels);
  bn->beta().values() = r.get_f64_vec(channels);
  bn->running_mean() = r.get_f64_vec(channels);
  bn->running_var() = r.get_f64_vec(channels);
  bn->set_stats_initialized(init);
  if (r.get_u8() != 0) {
    const double alpha = r.get_f64();
    const bool fitted = r.get_u8() != 0;
    SbnApprox a(channels, alpha);
    a.t1_mu() = r.get_f64_vec(channels);
    a.t2_mu() = r.get_f64_vec(channels);
    a.t1_logsig() = r.get_f64_vec(channels);
    a.t2_logsig() = r.get_f64_vec(channels);
    a.set_initialized(fitted);
    bn->sbn() = std::move(a);
  }
  return bn;
}

}  // namespace ckpt

inline std::vector<uint8_t> serialize_network(Network& net) {
  ckpt::Writer w;
  for (char c : ckpt::kMagic) w.put_u8(static_cast<uint8_t>(c));
  w.put_u32(static_cast<uint32_t>(net.layers().size()));
  for (auto& layer : net.layers()) {
    if (auto* lin = dynamic_cast<Linear*>(layer.get())) {
      w.put_u8(ckpt::kLinear);
      w.put_u32(static_cast<uint32_t>(lin->in()));
      w.put_u32(static_cast<uint32_t>(lin->out()));
      w.put_f64_span(lin->weight().values());
      w.put_f64_span(lin->bias().values());
    } else if (auto* conv = dynamic_cast<Conv2d*>(layer.get())) {
      w.put_u8(ckpt::kConv2d);
      const auto& ks = conv->kernel().shape();
      for (size_t d = 0; d < 4; ++d) w.put_u32(static_cast<uint32_t>(ks[d]));
      w.put_u32(static_cast<uint32_t>(conv->stride()));
      w.put_u32(static_cast<uint32_t>(conv->padding()));
      w.put_f64_span(conv->kernel().values());
      w.put_f64_span(conv->bias().values());
    } else if (dynamic_cast<ReLU*>(layer.get())) {
      w.put_u8(ckpt::kReLU);
    } else if (auto* pool = dynamic_cast<MaxPool2d*>(layer.get())) {
      w.put_u8(ckpt::kMaxPool2d);
      w.put_u32(static_cast<uint32_t>(pool->window()));
      w.put_u32(static_cast<uint32_t>(pool->stride()));
    } else if (dynamic_cast<Flatten*>(layer.get())) {
      w.put_u8(ckpt::kFlatten);
    } else if (auto* bn = dynamic_cast<BatchNorm*>(layer.get())) {
      w.put_u8(ckpt::kBatchNorm);
      ckpt::write_batchnorm(w, *bn);
    } else {
      throw FormatError("checkpoint: unserializable layer kind '" +
                        std::string(layer->kind()) + "'");
    }
  }
  std::vector<uint8_t>& buf = w.bytes();
  const uint32_t crc =
      static_cast<uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
  w.put_u32(crc);
  return std::move(w.bytes());
}

inline Network deserialize_network(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < sizeof(ckpt::kMagic) + 8) throw FormatError("checkpoint: truncated file");
  if (std::memcmp(bytes.data(), ckpt::kMagic, sizeof(ckpt::kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic or unsupported version");
  }
  const size_t body = bytes.size() - 4;
  const uint32_t expect =
      static_cast<uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(bytes[body + i]) << (8 * i);
  if (stored != expect) throw FormatError("checkpoint: CRC32 mismatch, file corrupted");

  ckpt::Reader r(bytes.data() + sizeof(ckpt::kMagic), body - sizeof(ckpt::kMagic));
  const uint32_t layer_count = r.get_u32();
  Network net;
  for (uint32_t li = 0; li < layer_count; ++li) {
    const uint8_t tag = r.get_u8();
    switch (tag) {
      case ckpt::kLinear: {
        const size_t in = r.get_u32();
        const size_t out = r.get_u32();
        auto lin = std::make_unique<Linear>(in, out);
        lin->weight().values() = r.get_f64_vec(in * out);
        lin->bias().values() = r.get_f64_vec(out);
        net.add(std::move(lin));
        break;
      }
      case ckpt::kConv2d: {
        const size_t f = r.get_u32(), c = r.get_u32(), kh = r.get_u32(), kw = r.get_u32();
        const size_t stride = r.get_u32(), padding = r.get_u32();
        auto conv = std::make_unique<Conv2d>(f, c, kh, kw, stride, padding);
        conv->kernel().values() = r.get_f64_vec(f * c * kh * kw);
        conv->bias().values() = r.get_f64_vec(f);
        net.add(std::move(conv));
        break;
      }
      case ckpt::kReLU:
        net.add(std::make_unique<ReLU>());
        break;
      case ckpt::kMaxPool2d: {
        const size_t window = r.get_u32(), stride = r.get_u32();
        net.add(std::make_unique<MaxPool2d>(window, stride));
        break;
      }
      case ckpt::kFlatten:
        net.add(std::make_unique<Flatten>());
        break;
      case ckpt::kBatchNorm:
        net.add(ckpt::read_batchnorm(r));
        break;
      default:
        throw FormatError("checkpoint: unknown layer tag " + std::to_string(tag));
    }
  }
  net.set_mode(Mode::kBnTest);
  return net;
}

inline void save_checkpoint(Network& net, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_network(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("checkpoint: write to '" + path + "' failed");
}

inline Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_network(bytes);
}

}  // namespace sbnlab
