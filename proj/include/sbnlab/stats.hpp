#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sbnlab/errors.hpp"

namespace sbnlab {

// Pairwise (binary-tree) summation down to single pairs. Order-independent of
// any outer loop and, for power-of-two counts of identical values, exact in
// floating point (every partial is a power-of-two multiple).
inline double pairwise_sum(std::span<const double> xs) {
  const size_t n = xs.size();
  if (n == 0) return 0.0;
  if (n == 1) return xs[0];
  if (n == 2) return xs[0] + xs[1];
  const size_t half = n / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("pairwise_mean: empty input");
  return pairwise_sum(xs) / static_cast<double>(xs.size());
}

inline double mean(std::span<const double> xs) { return pairwise_mean(xs); }

// Population variance (divide by n).
inline double variance_population(std::span<const double> xs) {
  const double m = pairwise_mean(xs);
  std::vector<double> sq(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - m) * (xs[i] - m);
  return pairwise_mean(sq);
}

// Sample standard deviation (divide by n-1); 0 for fewer than two points.
inline double stddev_sample(std::span<const double> xs) {
  const size_t n = xs.size();
  if (n < 2) return 0.0;
  const double m = pairwise_mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(n - 1));
}

// Linear-interpolation quantile on a sorted copy, q in [0, 1].
inline double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw DomainError("quantile: empty input");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  if (q <= 0.0) return s.front();
  if (q >= 1.0) return s.back();
  const double pos = q * static_cast<double>(s.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] + frac * (s[lo + 1] - s[lo]);
}

}  // namespace sbnlab
