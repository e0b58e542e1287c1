#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbnlab/errors.hpp"
#include "sbnlab/rng.hpp"

namespace sbnlab {

// Parametric approximation of the distribution over one BN layer's batch
// statistics: per channel, mu ~ Normal(m_mu, s2_mu) and
// sigma ~ LogNormal(m_sigma, s2_sigma). Fitted by moment matching: the
// sufficient statistics {mu, mu^2, log sigma, (log sigma)^2} are tracked with
// exponential smoothing, so no gradients are involved.
class SbnApprox {
 public:
  SbnApprox() = default;

  explicit SbnApprox(size_t channels, double alpha = 0.01)
      : alpha_(alpha),
        t1_mu_(channels, 0.0),
        t2_mu_(channels, 0.0),
        t1_logsig_(channels, 0.0),
        t2_logsig_(channels, 0.0) {
    if (channels == 0) throw ShapeError("SbnApprox: channel count must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw DomainError("SbnApprox: alpha must lie in (0,1], got " + std::to_string(alpha));
    }
  }

  size_t channels() const { return t1_mu_.size(); }
  double alpha() const { return alpha_; }
  bool initialized() const { return initialized_; }

  // One observation of (mu(B), sigma(B)) per channel. The first observation
  // seeds the statistics directly, so derived variances start at exactly 0.
  void update(std::span<const double> mu_b, std::span<const double> sigma_b) {
    if (mu_b.size() != channels() || sigma_b.size() != channels()) {
      throw ShapeError("SbnApprox::update: observation length " + std::to_string(mu_b.size()) +
                       "/" + std::to_string(sigma_b.size()) + " vs " + std::to_string(channels()) +
                       " channels");
    }
    for (double s : sigma_b) {
      if (!(s > 0.0)) throw DomainError("SbnApprox::update: sigma observation must be positive");
    }
    if (!initialized_) {
      for (size_t c = 0; c < channels(); ++c) {
        const double ls = std::log(sigma_b[c]);
        t1_mu_[c] = mu_b[c];
        t2_mu_[c] = mu_b[c] * mu_b[c];
        t1_logsig_[c] = ls;
        t2_logsig_[c] = ls * ls;
      }
      initialized_ = true;
      return;
    }
    const double a = alpha_;
    for (size_t c = 0; c < channels(); ++c) {
      const double ls = std::log(sigma_b[c]);
      t1_mu_[c] = (1.0 - a) * t1_mu_[c] + a * mu_b[c];
      t2_mu_[c] = (1.0 - a) * t2_mu_[c] + a * mu_b[c] * mu_b[c];
      t1_logsig_[c] = (1.0 - a) * t1_logsig_[c] + a * ls;
      t2_logsig_[c] = (1.0 - a) * t2_logsig_[c] + a * ls * ls;
    }
  }

  // Derived parameters. Negative variances from floating-point cancellation
  // are clamped to 0.
  double m_mu(size_t c) const { return t1_mu_.at(c); }
  double s2_mu(size_t c) const { return clamp0(t2_mu_.at(c) - t1_mu_.at(c) * t1_mu_.at(c)); }
  double m_sigma(size_t c) const { return t1_logsig_.at(c); }
  double s2_sigma(size_t c) const {
    return clamp0(t2_logsig_.at(c) - t1_logsig_.at(c) * t1_logsig_.at(c));
  }

  // Raw sufficient statistics, exposed for serialization and direct setup.
  std::vector<double>& t1_mu() { return t1_mu_; }
  std::vector<double>& t2_mu() { return t2_mu_; }
  std::vector<double>& t1_logsig() { return t1_logsig_; }
  std::vector<double>& t2_logsig() { return t2_logsig_; }
  const std::vector<double>& t1_mu() const { return t1_mu_; }
  const std::vector<double>& t2_mu() const { return t2_mu_; }
  const std::vector<double>& t1_logsig() const { return t1_logsig_; }
  const std::vector<double>& t2_logsig() const { return t2_logsig_; }
  void set_initialized(bool v) { initialized_ = v; }
  void set_alpha(double a) { alpha_ = a; }

  // Degenerate approximation: all variances 0, means pinned to the given
  // plug-in statistics (mu_hat, sqrt(var_hat + eps)).
  static SbnApprox plugin(std::span<const double> mu_hat, std::span<const double> sigma_hat) {
    SbnApprox a(mu_hat.size(), 1.0);
    a.update(mu_hat, sigma_hat);
    return a;
  }

 private:
  static double clamp0(double v) { return v < 0.0 ? 0.0 : v; }

  double alpha_ = 0.01;
  bool initialized_ = false;
  std::vector<double> t1_mu_, t2_mu_, t1_logsig_, t2_logsig_;
};

// One stochastic normalization draw for a single BN layer: a mu and a sigma
// per channel, plus the seed of the RNG stream that produced them.
struct SbnSample {
  std::vector<double> mu;
  std::vector<double> sigma;
  uint64_t seed = 0;
};

// mu ~ Normal(m_mu, s2_mu), sigma = exp(Normal(m_sigma, s2_sigma)), channels
// independent. Zero-variance channels reproduce their means exactly.
inline SbnSample sbn_sample(const SbnApprox& approx, Rng& rng, uint64_t seed_stamp = 0) {
  if (!approx.initialized()) {
    throw NotFittedError("sbn_sample: approximation has no observations yet");
  }
  SbnSample s;
  s.seed = seed_stamp;
  const size_t n = approx.channels();
  s.mu.resize(n);
  s.sigma.resize(n);
  for (size_t c = 0; c < n; ++c) {
    const double sd = std::sqrt(approx.s2_mu(c));
    s.mu[c] = sd == 0.0 ? approx.m_mu(c) : approx.m_mu(c) + sd * rng.gaussian();
  }
  for (size_t c = 0; c < n; ++c) {
    const double sd = std::sqrt(approx.s2_sigma(c));
    const double z = sd == 0.0 ? approx.m_sigma(c) : approx.m_sigma(c) + sd * rng.gaussian();
    s.sigma[c] = std::exp(z);
  }
  return s;
}

}  // namespace sbnlab
