#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sbnlab/data.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/tensor.hpp"

namespace sbnlab {

// Procedural 28x28 digit dataset in the MNIST value range. Each sample is a
// 5x7 glyph pushed through a random affine map (shift, rotation, anisotropic
// scale) with contrast jitter and additive Gaussian noise. Deterministic by
// seed, so generated corpora are reproducible byte for byte once written to
// IDX files.
namespace digits {

// clang-format off
inline const std::array<std::array<const char*, 7>, 10> kGlyphs = {{
  {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
  {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
  {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},  // 2
  {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},  // 3
  {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
  {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
  {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
  {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
  {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
  {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
}};
// clang-format on

constexpr size_t kGlyphW = 5;
constexpr size_t kGlyphH = 7;
constexpr size_t kImage = 28;

// Bilinear sample of a glyph bitmap at fractional cell coordinates.
inline double glyph_at(int digit, double gx, double gy) {
  const auto cell = [&](int cx, int cy) -> double {
    if (cx < 0 || cy < 0 || cx >= static_cast<int>(kGlyphW) || cy >= static_cast<int>(kGlyphH)) {
      return 0.0;
    }
    return kGlyphs[static_cast<size_t>(digit)][static_cast<size_t>(cy)][cx] == '1' ? 1.0 : 0.0;
  };
  const double fx = gx - 0.5, fy = gy - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  const double v00 = cell(x0, y0), v10 = cell(x0 + 1, y0);
  const double v01 = cell(x0, y0 + 1), v11 = cell(x0 + 1, y0 + 1);
  return (1 - ax) * (1 - ay) * v00 + ax * (1 - ay) * v10 + (1 - ax) * ay * v01 + ax * ay * v11;
}

inline void render(int digit, Rng& rng, double* out) {
  const double angle = rng.uniform(-0.20, 0.20);
  const double sx = rng.uniform(2.2, 3.0);   // pixels per glyph cell, x
  const double sy = rng.uniform(2.2, 3.0);   // pixels per glyph cell, y
  const double tx = 14.0 + rng.uniform(-2.5, 2.5);
  const double ty = 14.0 + rng.uniform(-2.5, 2.5);
  const double contrast = rng.uniform(0.75, 1.0);
  const double noise_sd = rng.uniform(0.02, 0.07);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (size_t py = 0; py < kImage; ++py) {
    for (size_t px = 0; px < kImage; ++px) {
      // inverse affine: image pixel -> glyph cell coordinates
      const double dx = static_cast<double>(px) - tx;
      const double dy = static_cast<double>(py) - ty;
      const double ux = (ca * dx + sa * dy) / sx + kGlyphW / 2.0;
      const double uy = (-sa * dx + ca * dy) / sy + kGlyphH / 2.0;
      double v = contrast * glyph_at(digit, ux, uy);
      v += noise_sd * rng.gaussian();
      out[py * kImage + px] = std::min(1.0, std::max(0.0, v));
    }
  }
}

}  // namespace digits

inline Dataset make_synth_digits(size_t count, uint64_t seed, const std::string& name) {
  if (count == 0) throw ShapeError("make_synth_digits: count must be positive");
  Dataset ds;
  ds.name = name;
  ds.images = Tensor({count, 1, digits::kImage, digits::kImage});
  ds.labels.resize(count);
  Rng rng(derive_seed(seed, "synth-digits." + name));
  for (size_t i = 0; i < count; ++i) {
    const int digit = static_cast<int>(rng.below(10));
    ds.labels[i] = digit;
    digits::render(digit, rng, ds.images.data() + i * digits::kImage * digits::kImage);
  }
  return ds;
}

}  // namespace sbnlab
