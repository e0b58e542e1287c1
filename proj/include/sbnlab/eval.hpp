#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sbnlab/data.hpp"
#include "sbnlab/errors.hpp"
#include "sbnlab/network.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/sbn.hpp"
#include "sbnlab/stats.hpp"
#include "sbnlab/tensor.hpp"

namespace sbnlab {

// H = -sum p ln p in nats, with 0 ln 0 = 0. Input must be a distribution
// (entries >= 0, sum within 1e-6 of 1).
inline double predictive_entropy(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw DomainError("predictive_entropy: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw DomainError("predictive_entropy: probabilities sum to " + std::to_string(sum));
  }
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h < 0.0 ? 0.0 : h;
}

inline std::vector<double> batch_entropies(const Tensor& probs) {
  detail::require_rank(probs, 2, "batch_entropies");
  const size_t b = probs.extent(0), c = probs.extent(1);
  std::vector<double> out(b);
  for (size_t i = 0; i < b; ++i) out[i] = predictive_entropy({probs.data() + i * c, c});
  return out;
}

// A predictor maps a batch of inputs to an averaged predictive distribution.
using BatchPredictor = std::function<Tensor(const Tensor&)>;

struct ErrorNll {
  double error = 0.0;
  double nll = 0.0;
};

// Misclassification fraction under argmax (ties to the lowest class index)
// and mean -ln p(true class) of the same averaged distribution, clipped below
// at 1e-12.
inline ErrorNll error_and_nll(const BatchPredictor& predict, const Dataset& test,
                              size_t chunk = 512) {
  if (!test.has_labels()) throw DomainError("error_and_nll: dataset has no labels");
  size_t wrong = 0;
  double nll_sum = 0.0;
  for (size_t start = 0; start < test.size(); start += chunk) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(test.size(), start + chunk); ++i) idx.push_back(i);
    const Dataset part = test.subset(idx);
    const Tensor probs = predict(part.images);
    const size_t c = probs.extent(1);
    for (size_t i = 0; i < idx.size(); ++i) {
      size_t best = 0;
      for (size_t j = 1; j < c; ++j) {
        if (probs(i, j) > probs(i, best)) best = j;
      }
      if (static_cast<int>(best) != part.labels[i]) ++wrong;
      nll_sum += -std::log(std::max(probs(i, static_cast<size_t>(part.labels[i])), 1e-12));
    }
  }
  return {static_cast<double>(wrong) / static_cast<double>(test.size()),
          nll_sum / static_cast<double>(test.size())};
}

// Right-continuous ECDF as sorted (x, F(x)) pairs, duplicates collapsed.
inline std::vector<std::pair<double, double>> ecdf(std::vector<double> samples) {
  if (samples.empty()) throw DomainError("ecdf: empty sample set");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  std::vector<std::pair<double, double>> pairs;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    pairs.emplace_back(samples[i], static_cast<double>(i + 1) / n);
  }
  return pairs;
}

// F(q) = fraction of samples <= q.
inline double ecdf_eval(const std::vector<std::pair<double, double>>& pairs, double q) {
  if (pairs.empty()) throw DomainError("ecdf_eval: empty ECDF");
  double f = 0.0;
  for (const auto& [x, fx] : pairs) {
    if (x <= q) {
      f = fx;
    } else {
      break;
    }
  }
  return f;
}

// Two-sample Kolmogorov-Smirnov distance: sup_x |F_a(x) - F_b(x)|.
inline double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_distance: empty sample set");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double x;
    if (i < sa.size() && j < sb.size()) {
      x = std::min(sa[i], sb[j]);
    } else if (i < sa.size()) {
      x = sa[i];
    } else {
      x = sb[j];
    }
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Silverman's rule: 1.06 * std * n^(-1/5), falling back to the IQR-based
// spread when the standard deviation vanishes and to 0.01 when both do.
inline double silverman_bandwidth(std::span<const double> samples) {
  if (samples.empty()) throw DomainError("silverman_bandwidth: empty sample set");
  const double n = static_cast<double>(samples.size());
  const double scale = std::pow(n, -0.2);
  const double sd = stddev_sample(samples);
  if (sd > 0.0) return 1.06 * sd * scale;
  const double iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
  if (iqr > 0.0) return 1.06 * (iqr / 1.34) * scale;
  return 0.01;
}

// Gaussian-kernel density estimate at q: (1/(n h)) * sum phi((q - s_i)/h).
inline double kde_density(std::span<const double> samples, double bandwidth, double q) {
  if (samples.empty()) throw DomainError("kde_density: empty sample set");
  if (!(bandwidth > 0.0)) throw DomainError("kde_density: bandwidth must be positive");
  constexpr double kInvSqrt2Pi = 0.3989422804014326779399;
  double acc = 0.0;
  for (double s : samples) {
    const double z = (q - s) / bandwidth;
    acc += kInvSqrt2Pi * std::exp(-0.5 * z * z);
  }
  return acc / (static_cast<double>(samples.size()) * bandwidth);
}

inline double kde_density(std::span<const double> samples, double q) {
  return kde_density(samples, silverman_bandwidth(samples), q);
}

// ---- oracle inference (batch-statistics sampling) --------------------------

namespace detail_eval {

// Draws one mini-batch, pushes it through the network in frozen-statistics
// train mode, and returns the observed per-layer (mu(B), sigma(B)) as a
// sample set. This is one exact draw from the distribution over statistics.
inline std::vector<SbnSample> draw_batch_statistics(Network& net, const Dataset& train_data,
                                                    size_t m, Rng& rng, uint64_t stamp) {
  const std::vector<size_t> idx = sample_indices(train_data.size(), m, rng);
  const Dataset batch = train_data.subset(idx);
  ForwardOptions opt;
  opt.mode = Mode::kTrain;
  opt.track = false;
  opt.update_running = false;
  (void)net.forward(batch.images, opt);
  std::vector<SbnSample> samples;
  for (BatchNorm* bn : net.bn_layers()) {
    samples.push_back(SbnSample{bn->batch_mu(), bn->batch_sigma(), stamp});
  }
  return samples;
}

inline void check_oracle_args(Network& net, const Dataset& train_data, size_t m) {
  if (net.bn_count() == 0) throw ConfigError("oracle inference: network has no BatchNorm layers");
  if (m < 2) throw DegenerateBatchError("oracle inference: batch size must be >= 2");
  if (m > train_data.size()) {
    throw ShapeError("oracle inference: batch size " + std::to_string(m) +
                     " exceeds training set size " + std::to_string(train_data.size()));
  }
}

}  // namespace detail_eval

// Unbiased reference predictor: averages softmax outputs over K statistic
// draws, each obtained by passing a fresh random training mini-batch through
// the network. Test objects never enter the statistics (batches come from the
// training set only). Expensive; this is what SBN approximates.
inline Tensor mc_predict_oracle(Network& net, const Tensor& x, const Dataset& train_data, size_t m,
                                size_t K, uint64_t seed) {
  detail_eval::check_oracle_args(net, train_data, m);
  if (K < 1) throw DomainError("mc_predict_oracle: K must be >= 1");
  Rng rng(derive_seed(seed, "oracle"));
  std::vector<Tensor> per_pass;
  per_pass.reserve(K);
  for (size_t k = 0; k < K; ++k) {
    const auto samples = detail_eval::draw_batch_statistics(net, train_data, m, rng, k);
    per_pass.push_back(softmax(sbn_forward(net, x, samples)));
  }
  // pairwise average over passes (exact for identical passes at power-of-two K)
  std::vector<Tensor>& t = per_pass;
  size_t n = t.size();
  while (n > 1) {
    const size_t half = n / 2;
    for (size_t i = 0; i < half; ++i) {
      Tensor& a = t[i];
      const Tensor& b = t[n - 1 - i];
      if (&a != &b) {
        for (size_t e = 0; e < a.size(); ++e) a[e] += b[e];
      }
    }
    n = (n + 1) / 2;
  }
  Tensor out = std::move(t[0]);
  const double inv_k = 1.0 / static_cast<double>(K);
  for (auto& v : out.values()) v *= inv_k;
  return out;
}

struct BoundGap {
  double log_marginal = 0.0;   // ln((1/K) sum p_k(y))
  double expected_log = 0.0;   // (1/K) sum ln p_k(y)
  double gap = 0.0;            // log_marginal - expected_log, >= 0 up to MC noise
};

// Jensen-gap estimate per test point, sharing the K oracle statistic draws
// across points. Pairwise sums keep the degenerate (zero-variance) case at
// exactly 0 for power-of-two K.
inline std::vector<BoundGap> bound_gap(Network& net, const Tensor& xs, const std::vector<int>& ys,
                                       const Dataset& train_data, size_t m, size_t K,
                                       uint64_t seed) {
  detail_eval::check_oracle_args(net, train_data, m);
  if (K < 1) throw DomainError("bound_gap: K must be >= 1");
  detail::require_rank(xs, 4, "bound_gap");
  const size_t b = xs.extent(0);
  if (ys.size() != b) {
    throw ShapeError("bound_gap: " + std::to_string(b) + " inputs vs " +
                     std::to_string(ys.size()) + " labels");
  }
  Rng rng(derive_seed(seed, "oracle"));
  std::vector<std::vector<double>> p_true(b, std::vector<double>(K));
  for (size_t k = 0; k < K; ++k) {
    const auto samples = detail_eval::draw_batch_statistics(net, train_data, m, rng, k);
    const Tensor probs = softmax(sbn_forward(net, xs, samples));
    const size_t classes = probs.extent(1);
    for (size_t i = 0; i < b; ++i) {
      const int y = ys[i];
      if (y < 0 || static_cast<size_t>(y) >= classes) {
        throw DomainError("bound_gap: label " + std::to_string(y) + " outside [0," +
                          std::to_string(classes) + ")");
      }
      p_true[i][k] = probs(i, static_cast<size_t>(y));
    }
  }
  std::vector<BoundGap> out(b);
  for (size_t i = 0; i < b; ++i) {
    std::vector<double> logs(K);
    for (size_t k = 0; k < K; ++k) logs[k] = std::log(p_true[i][k]);
    out[i].log_marginal = std::log(pairwise_mean(p_true[i]));
    out[i].expected_log = pairwise_mean(logs);
    out[i].gap = out[i].log_marginal - out[i].expected_log;
  }
  return out;
}

// ---- statistics tracing and fit validation ---------------------------------

// Observed per-channel batch statistics across T mini-batches, one block per
// BN layer; mu[c][t], sigma[c][t].
struct StatTrace {
  struct LayerTrace {
    size_t channels = 0;
    std::vector<std::vector<double>> mu;
    std::vector<std::vector<double>> sigma;
  };
  size_t T = 0;
  std::vector<LayerTrace> layers;
};

inline StatTrace collect_statistics(Network& net, const Dataset& train_data, size_t m, size_t T,
                                    uint64_t seed) {
  detail_eval::check_oracle_args(net, train_data, m);
  const auto bns = net.bn_layers();
  StatTrace trace;
  trace.T = T;
  trace.layers.resize(bns.size());
  for (size_t l = 0; l < bns.size(); ++l) {
    trace.layers[l].channels = bns[l]->channels();
    trace.layers[l].mu.assign(bns[l]->channels(), {});
    trace.layers[l].sigma.assign(bns[l]->channels(), {});
    for (size_t c = 0; c < bns[l]->channels(); ++c) {
      trace.layers[l].mu[c].reserve(T);
      trace.layers[l].sigma[c].reserve(T);
    }
  }
  Rng rng(derive_seed(seed, "collect"));
  ForwardOptions opt;
  opt.mode = Mode::kTrain;
  opt.track = false;
  opt.update_running = false;
  for (size_t t = 0; t < T; ++t) {
    const std::vector<size_t> idx = sample_indices(train_data.size(), m, rng);
    const Dataset batch = train_data.subset(idx);
    (void)net.forward(batch.images, opt);
    for (size_t l = 0; l < bns.size(); ++l) {
      const auto& mu = bns[l]->batch_mu();
      const auto& sg = bns[l]->batch_sigma();
      for (size_t c = 0; c < bns[l]->channels(); ++c) {
        trace.layers[l].mu[c].push_back(mu[c]);
        trace.layers[l].sigma[c].push_back(sg[c]);
      }
    }
  }
  return trace;
}

struct FitScore {
  double ks_mu = 0.0;
  double ks_sigma = 0.0;
};

// KS distance between traced statistics and fresh draws from the fitted
// parametric approximation, per channel and per statistic.
inline std::vector<std::vector<FitScore>> validate_fit(const StatTrace& trace,
                                                       const std::vector<const SbnApprox*>& approx,
                                                       size_t samples_per_channel, uint64_t seed) {
  if (trace.layers.size() != approx.size()) {
    throw ShapeError("validate_fit: " + std::to_string(trace.layers.size()) + " traced layers vs " +
                     std::to_string(approx.size()) + " approximations");
  }
  if (samples_per_channel == 0) throw DomainError("validate_fit: need at least one sample");
  Rng rng(derive_seed(seed, "validate-fit"));
  std::vector<std::vector<FitScore>> scores(trace.layers.size());
  for (size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& lt = trace.layers[l];
    const SbnApprox& a = *approx[l];
    if (!a.initialized()) throw NotFittedError("validate_fit: approximation not fitted");
    if (a.channels() != lt.channels) {
      throw ShapeError("validate_fit: layer " + std::to_string(l) + " traces " +
                       std::to_string(lt.channels) + " channels vs approximation " +
                       std::to_string(a.channels()));
    }
    scores[l].resize(lt.channels);
    for (size_t c = 0; c < lt.channels; ++c) {
      if (lt.mu[c].empty()) throw DomainError("validate_fit: empty trace");
      std::vector<double> mu_draw(samples_per_channel), sg_draw(samples_per_channel);
      const double mu_sd = std::sqrt(a.s2_mu(c));
      const double ls_sd = std::sqrt(a.s2_sigma(c));
      for (size_t i = 0; i < samples_per_channel; ++i) {
        mu_draw[i] = mu_sd == 0.0 ? a.m_mu(c) : a.m_mu(c) + mu_sd * rng.gaussian();
      }
      for (size_t i = 0; i < samples_per_channel; ++i) {
        const double z = ls_sd == 0.0 ? a.m_sigma(c) : a.m_sigma(c) + ls_sd * rng.gaussian();
        sg_draw[i] = std::exp(z);
      }
      scores[l][c].ks_mu = ks_distance(lt.mu[c], mu_draw);
      scores[l][c].ks_sigma = ks_distance(lt.sigma[c], sg_draw);
    }
  }
  return scores;
}

// ---- reports and exports ----------------------------------------------------

// Measurement bundle for one evaluation run. per_layer_ks stays empty unless
// a fit-validation pass contributed scores.
struct EvalReport {
  double error_rate = 0.0;
  double nll = 0.0;
  std::vector<double> entropy_in;
  std::vector<double> entropy_ood;
  std::vector<std::pair<double, double>> ecdf_in;
  std::vector<std::pair<double, double>> ecdf_ood;
  std::vector<std::vector<FitScore>> per_layer_ks;

  void validate() const {
    if (error_rate < 0.0 || error_rate > 1.0) {
      throw DomainError("EvalReport: error_rate outside [0,1]");
    }
    for (double h : entropy_in) {
      if (h < 0.0) throw DomainError("EvalReport: negative entropy");
    }
    for (double h : entropy_ood) {
      if (h < 0.0) throw DomainError("EvalReport: negative entropy");
    }
    const auto check_ecdf = [](const std::vector<std::pair<double, double>>& e) {
      if (e.empty()) return;
      double prev = 0.0;
      for (const auto& [x, f] : e) {
        if (f < prev) throw DomainError("EvalReport: ECDF not nondecreasing");
        prev = f;
      }
      if (std::abs(e.back().second - 1.0) > 1e-12) {
        throw DomainError("EvalReport: ECDF does not reach 1");
      }
    };
    check_ecdf(ecdf_in);
    check_ecdf(ecdf_ood);
  }
};

inline void write_ecdf_csv(const std::string& path,
                           const std::vector<std::pair<double, double>>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "x,F\n";
  char line[80];
  for (const auto& [x, f] : pairs) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", x, f);
    out << line;
  }
}

// Curve of the Gaussian KDE over an even grid spanning the samples plus 3h.
inline void write_kde_csv(const std::string& path, const std::vector<double>& samples,
                          size_t grid_points = 256) {
  if (samples.empty()) throw DomainError("write_kde_csv: empty sample set");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "x,density\n";
  const double h = silverman_bandwidth(samples);
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn - 3.0 * h, hi = *mx + 3.0 * h;
  char line[80];
  for (size_t i = 0; i < grid_points; ++i) {
    const double q = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", q, kde_density(samples, h, q));
    out << line;
  }
}

}  // namespace sbnlab
