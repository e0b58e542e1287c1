#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sbnlab/data.hpp"
#include "sbnlab/errors.hpp"
#include "sbnlab/network.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/sbn_approx.hpp"
#include "sbnlab/tensor.hpp"

namespace sbnlab {

// Fits the per-layer approximations r(mu) r(sigma) by streaming `num_batches`
// random training mini-batches through the frozen network and exponentially
// smoothing the sufficient statistics of each BN layer's observed
// (mu(B), sigma(B)). Network weights and running statistics are untouched.
inline void fit_sbn(Network& net, const Dataset& data, size_t batch_size, size_t num_batches,
                    double alpha, uint64_t seed) {
  if (data.size() == 0) throw DomainError("fit_sbn: empty dataset");
  if (batch_size < 2) throw DegenerateBatchError("fit_sbn: batch size must be >= 2");
  if (batch_size > data.size()) {
    throw ShapeError("fit_sbn: batch size " + std::to_string(batch_size) +
                     " exceeds dataset size " + std::to_string(data.size()));
  }
  auto bns = net.bn_layers();
  if (bns.empty()) throw ConfigError("fit_sbn: network has no BatchNorm layers");
  for (BatchNorm* bn : bns) bn->sbn() = SbnApprox(bn->channels(), alpha);

  ForwardOptions opt;
  opt.mode = Mode::kTrain;
  opt.track = false;
  opt.update_running = false;  // frozen statistics mode
  Rng rng(derive_seed(seed, "sbn.fit"));
  for (size_t t = 0; t < num_batches; ++t) {
    const std::vector<size_t> idx = sample_indices(data.size(), batch_size, rng);
    const Dataset batch = data.subset(idx);
    (void)net.forward(batch.images, opt);
    for (BatchNorm* bn : bns) bn->sbn()->update(bn->batch_mu(), bn->batch_sigma());
  }
}

inline void require_sbn_fitted(Network& net) {
  const auto bns = net.bn_layers();
  if (bns.empty()) throw ConfigError("network has no BatchNorm layers");
  for (const BatchNorm* bn : bns) {
    if (!bn->sbn().has_value() || !bn->sbn()->initialized()) {
      throw NotFittedError("SBN approximation missing; run fit_sbn first");
    }
  }
}

// One independent statistic draw per BN layer, in layer order.
inline std::vector<SbnSample> sbn_sample_set(Network& net, uint64_t pass_seed) {
  require_sbn_fitted(net);
  Rng rng(pass_seed);
  std::vector<SbnSample> out;
  for (BatchNorm* bn : net.bn_layers()) out.push_back(sbn_sample(*bn->sbn(), rng, pass_seed));
  return out;
}

// Forward pass with the sampled statistics plugged into every BN layer; the
// sigma sample is the denominator directly (no extra epsilon). Returns logits.
inline Tensor sbn_forward(Network& net, const Tensor& x, const std::vector<SbnSample>& samples) {
  ForwardOptions opt;
  opt.mode = Mode::kSbnSample;
  opt.track = false;
  opt.sbn_samples = &samples;
  return net.forward(x, opt);
}

// MC estimate of the marginal predictive distribution: the mean of K softmax
// outputs under fresh, independent statistic samples. Rows sum to 1 within
// 1e-10. Deterministic given the seed; passes use independent derived streams
// so they could run in any order or in parallel.
inline Tensor sbn_predict(Network& net, const Tensor& x, size_t K, uint64_t seed) {
  if (K < 1) throw DomainError("sbn_predict: K must be >= 1");
  require_sbn_fitted(net);
  Tensor acc;
  for (size_t k = 0; k < K; ++k) {
    const uint64_t pass_seed = derive_seed(seed, "sbn.predict.pass" + std::to_string(k));
    const std::vector<SbnSample> samples = sbn_sample_set(net, pass_seed);
    const Tensor p = softmax(sbn_forward(net, x, samples));
    if (k == 0) {
      acc = p;
    } else {
      for (size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
  }
  const double inv_k = 1.0 / static_cast<double>(K);
  for (auto& v : acc.values()) v *= inv_k;
  return acc;
}

// Replaces every BN layer's approximation with the degenerate plug-in one:
// zero variances, mu pinned to the running mean and sigma to
// sqrt(running_var + eps). sbn_predict then reproduces bn-test predictions.
inline void force_plugin_approx(Network& net) {
  const auto bns = net.bn_layers();
  if (bns.empty()) throw ConfigError("force_plugin_approx: network has no BatchNorm layers");
  for (BatchNorm* bn : bns) {
    if (!bn->stats_initialized()) {
      throw NotFittedError("force_plugin_approx: running statistics not initialized");
    }
    std::vector<double> sigma_hat(bn->channels());
    for (size_t c = 0; c < bn->channels(); ++c) {
      sigma_hat[c] = std::sqrt(bn->running_var()[c] + bn->epsilon());
    }
    bn->sbn() = SbnApprox::plugin(bn->running_mean(), sigma_hat);
  }
}

}  // namespace sbnlab
