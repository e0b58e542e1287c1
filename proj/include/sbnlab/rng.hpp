#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sbnlab/errors.hpp"

namespace sbnlab {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Every random stream in the project derives from (global seed, component name).
// Adding a new component never perturbs the streams of existing ones.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view component) {
  uint64_t s = global_seed ^ fnv1a64(component);
  return splitmix64(s);
}

// xoshiro256** with a splitmix64-seeded state. Self-contained so that results
// are reproducible bit for bit regardless of the standard library in use.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (cosine branch).
  double gaussian() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: n must be positive");
    uint64_t x = 0, r = 0;
    do {
      x = next_u64();
      r = x % n;
    } while (x - r > uint64_t(0) - n);
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4] = {};
};

// Uniform m-subset of {0,...,n-1}, returned sorted so the draw is a canonical
// unordered sample (m == n always yields the identity set, whatever the seed).
inline std::vector<size_t> sample_indices(size_t n, size_t m, Rng& rng) {
  if (m > n) throw ShapeError("sample_indices: m=" + std::to_string(m) + " exceeds n=" + std::to_string(n));
  // Floyd's algorithm
  std::vector<size_t> picked;
  picked.reserve(m);
  std::vector<bool> in(n, false);
  for (size_t j = n - m; j < n; ++j) {
    const size_t t = static_cast<size_t>(rng.below(j + 1));
    if (in[t]) {
      in[j] = true;
      picked.push_back(j);
    } else {
      in[t] = true;
      picked.push_back(t);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace sbnlab
