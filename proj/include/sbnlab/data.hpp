#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sbnlab/errors.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/tensor.hpp"

namespace sbnlab {

// Images in [0,1], shape [N,C,H,W]; labels may be absent (OOD sets).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::string name;

  size_t size() const { return images.rank() ? images.extent(0) : 0; }
  bool has_labels() const { return !labels.empty(); }

  Dataset subset(const std::vector<size_t>& idx) const {
    const size_t c = images.extent(1), h = images.extent(2), w = images.extent(3);
    const size_t stride = c * h * w;
    Dataset out;
    out.name = name;
    out.images = Tensor({idx.size(), c, h, w});
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= size()) throw ShapeError("Dataset::subset: index out of range");
      std::copy_n(images.data() + idx[i] * stride, stride, out.images.data() + i * stride);
    }
    if (has_labels()) {
      out.labels.resize(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) out.labels[i] = labels[idx[i]];
    }
    return out;
  }
};

namespace idx {

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("idx: cannot open '" + path + "'");
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

inline bool looks_gzip(const std::vector<uint8_t>& b) {
  return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline std::vector<uint8_t> gunzip(const std::vector<uint8_t>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw FormatError("idx: inflateInit failed");
  std::vector<uint8_t> out;
  out.reserve(in.size() * 4);
  std::vector<uint8_t> chunk(1 << 16);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  do {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("idx: gzip payload corrupted");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

inline uint32_t be32(const std::vector<uint8_t>& b, size_t off) {
  if (off + 4 > b.size()) throw FormatError("idx: truncated header");
  return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
         (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

inline std::vector<uint8_t> read_payload(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  return looks_gzip(bytes) ? gunzip(bytes) : bytes;
}

}  // namespace idx

// Big-endian IDX image file (magic 0x00000803): count, rows, cols, then one
// unsigned byte per pixel. Pixels are scaled by 1/255. Gzip accepted by
// magic sniffing. Returns [N,1,H,W].
inline Tensor load_idx_images(const std::string& path) {
  const std::vector<uint8_t> b = idx::read_payload(path);
  const uint32_t magic = idx::be32(b, 0);
  if (magic != 0x00000803u) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw FormatError("idx: '" + path + "' has magic " + hex + ", expected 0x00000803 (images)");
  }
  const size_t n = idx::be32(b, 4), h = idx::be32(b, 8), w = idx::be32(b, 12);
  const size_t need = 16 + n * h * w;
  if (b.size() < need) {
    throw FormatError("idx: '" + path + "' truncated, need " + std::to_string(need) +
                      " bytes, have " + std::to_string(b.size()));
  }
  Tensor t({n, 1, h, w});
  for (size_t i = 0; i < n * h * w; ++i) t[i] = static_cast<double>(b[16 + i]) / 255.0;
  return t;
}

// Big-endian IDX label file (magic 0x00000801): count, then one byte per label.
inline std::vector<int> load_idx_labels(const std::string& path) {
  const std::vector<uint8_t> b = idx::read_payload(path);
  const uint32_t magic = idx::be32(b, 0);
  if (magic != 0x00000801u) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw FormatError("idx: '" + path + "' has magic " + hex + ", expected 0x00000801 (labels)");
  }
  const size_t n = idx::be32(b, 4);
  if (b.size() < 8 + n) throw FormatError("idx: '" + path + "' truncated label payload");
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(b[8 + i]);
  return labels;
}

// Writes [N,1,H,W] images scaled back to bytes (round(v*255)). Loaded /255
// grids round-trip bit-identically.
inline void save_idx_images(const Tensor& images, const std::string& path) {
  detail::require_rank(images, 4, "save_idx_images");
  const size_t n = images.extent(0), h = images.extent(2), w = images.extent(3);
  if (images.extent(1) != 1) throw ShapeError("save_idx_images: single-channel images expected");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("idx: cannot open '" + path + "' for writing");
  const auto be = [&](uint32_t v) {
    const uint8_t bytes[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                              static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  };
  be(0x00000803u);
  be(static_cast<uint32_t>(n));
  be(static_cast<uint32_t>(h));
  be(static_cast<uint32_t>(w));
  std::vector<uint8_t> buf(n * h * w);
  for (size_t i = 0; i < buf.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, images[i]));
    buf[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("idx: write to '" + path + "' failed");
}

inline void save_idx_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("idx: cannot open '" + path + "' for writing");
  const auto be = [&](uint32_t v) {
    const uint8_t bytes[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                              static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  };
  be(0x00000801u);
  be(static_cast<uint32_t>(labels.size()));
  for (int l : labels) {
    const uint8_t b = static_cast<uint8_t>(l);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!out) throw FormatError("idx: write to '" + path + "' failed");
}

inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                const std::string& name) {
  Dataset ds;
  ds.images = load_idx_images(images_path);
  ds.labels = load_idx_labels(labels_path);
  ds.name = name;
  if (ds.labels.size() != ds.images.extent(0)) {
    throw FormatError("idx: " + std::to_string(ds.images.extent(0)) + " images vs " +
                      std::to_string(ds.labels.size()) + " labels");
  }
  return ds;
}

// Resolves 'stem' or 'stem.gz' inside a directory.
inline std::string resolve_idx_file(const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  const fs::path plain = fs::path(dir) / stem;
  if (fs::exists(plain)) return plain.string();
  const fs::path gz = fs::path(dir) / (stem + ".gz");
  if (fs::exists(gz)) return gz.string();
  throw ConfigError("dataset file not found: " + plain.string() + " (also tried .gz)");
}

// Conventional MNIST-style directory layout.
inline Dataset load_idx_dir(const std::string& dir, bool train, const std::string& name) {
  const std::string img_stem = train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
  const std::string lbl_stem = train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
  return load_idx_dataset(resolve_idx_file(dir, img_stem), resolve_idx_file(dir, lbl_stem), name);
}

// Uniformly shuffled index batches for one epoch. Deterministic by seed.
inline std::vector<std::vector<size_t>> batch_indices(size_t n, size_t m, uint64_t seed,
                                                      bool drop_last) {
  if (m < 1) throw ShapeError("batches: batch size must be >= 1");
  if (m > n) {
    throw ShapeError("batches: batch size " + std::to_string(m) + " exceeds dataset size " +
                     std::to_string(n));
  }
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<size_t>> out;
  for (size_t start = 0; start < n; start += m) {
    const size_t end = std::min(n, start + m);
    if (drop_last && end - start < m) break;
    out.emplace_back(order.begin() + static_cast<ptrdiff_t>(start),
                     order.begin() + static_cast<ptrdiff_t>(end));
  }
  return out;
}

enum class OodKind { kNotMnistIdx, kRotate90, kPixelShuffle, kUniformNoise };

inline OodKind parse_ood_kind(const std::string& s) {
  if (s == "notmnist-idx") return OodKind::kNotMnistIdx;
  if (s == "rotate90") return OodKind::kRotate90;
  if (s == "pixel-shuffle") return OodKind::kPixelShuffle;
  if (s == "uniform-noise") return OodKind::kUniformNoise;
  throw ConfigError("unknown OOD kind '" + s + "'");
}

// Out-of-domain set construction. Labels are always absent. `path` is used by
// notmnist-idx only; synthetic kinds derive from `base`.
inline Dataset make_ood_set(OodKind kind, const std::string& path, const Dataset& base,
                            uint64_t seed) {
  Dataset out;
  switch (kind) {
    case OodKind::kNotMnistIdx: {
      if (path.empty()) throw ConfigError("notmnist-idx OOD set needs a directory path");
      std::string img;
      try {
        img = resolve_idx_file(path, "t10k-images-idx3-ubyte");
      } catch (const ConfigError&) {
        img = resolve_idx_file(path, "train-images-idx3-ubyte");
      }
      out.images = load_idx_images(img);
      out.name = "notmnist";
      return out;
    }
    case OodKind::kRotate90: {
      const size_t n = base.size(), c = base.images.extent(1);
      const size_t h = base.images.extent(2), w = base.images.extent(3);
      if (h != w) throw ShapeError("rotate90: square images required, got " +
                                   base.images.shape_str());
      out.images = Tensor({n, c, w, h});
      for (size_t i = 0; i < n; ++i)
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t y = 0; y < h; ++y)
            for (size_t x = 0; x < w; ++x) {
              // 90 degrees counter-clockwise
              out.images(i, ci, w - 1 - x, y) = base.images(i, ci, y, x);
            }
      out.name = base.name + "-rot90";
      return out;
    }
    case OodKind::kPixelShuffle: {
      out.images = base.images;
      const size_t n = base.size();
      const size_t stride = out.images.size() / std::max<size_t>(1, n);
      const uint64_t root = derive_seed(seed, "ood.pixel-shuffle");
      for (size_t i = 0; i < n; ++i) {
        uint64_t mix = root ^ (0x9e3779b97f4a7c15ull * (i + 1));
        Rng rng(splitmix64(mix));
        double* img = out.images.data() + i * stride;
        for (size_t k = stride; k > 1; --k) {
          const size_t j = static_cast<size_t>(rng.below(k));
          std::swap(img[k - 1], img[j]);
        }
      }
      out.name = base.name + "-pixshuf";
      return out;
    }
    case OodKind::kUniformNoise: {
      out.images = Tensor(base.images.shape());
      Rng rng(derive_seed(seed, "ood.uniform-noise"));
      for (auto& v : out.images.values()) v = rng.uniform();
      out.name = "uniform-noise";
      return out;
    }
  }
  throw ConfigError("make_ood_set: unknown kind");
}

}  // namespace sbnlab
