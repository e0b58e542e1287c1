#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sbnlab/data.hpp"
#include "sbnlab/network.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/tensor.hpp"

namespace testsupport {

using sbnlab::Dataset;
using sbnlab::Rng;
using sbnlab::Tensor;

inline Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Central finite differences of a scalar-valued function of one tensor.
inline Tensor numeric_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           double step = 1e-5) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// Worst relative disagreement between analytic and numeric gradients, with a
// unit floor so near-zero entries compare absolutely.
inline double grad_rel_err(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Two linearly separable 2-D Gaussian blobs as a rank-4 dataset [N,1,1,2].
inline Dataset toy_blobs(size_t n, uint64_t seed, double gap = 3.0) {
  Dataset ds;
  ds.name = "toy-blobs";
  ds.images = Tensor({n, 1, 1, 2});
  ds.labels.resize(n);
  Rng rng(seed);
  for (size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    const double cx = label == 0 ? -gap / 2 : gap / 2;
    ds.images(i, 0, 0, 0) = cx + 0.5 * rng.gaussian();
    ds.images(i, 0, 0, 1) = (label == 0 ? -0.5 : 0.5) + 0.5 * rng.gaussian();
    ds.labels[i] = label;
  }
  return ds;
}

// A dataset whose every example is the same image (degenerate statistics).
inline Dataset constant_dataset(size_t n, const std::vector<size_t>& sample_shape, double value,
                                int label = 0) {
  Dataset ds;
  ds.name = "constant";
  std::vector<size_t> shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  ds.images = Tensor::full(shape, value);
  ds.labels.assign(n, label);
  return ds;
}

}  // namespace testsupport
