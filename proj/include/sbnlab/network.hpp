#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sbnlab/errors.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/sbn_approx.hpp"
#include "sbnlab/tensor.hpp"

namespace sbnlab {

// How BatchNorm layers normalize during a forward pass. The flag lives on the
// Network and governs every BN layer uniformly.
enum class Mode { kTrain, kBnTest, kSbnSample };

struct ForwardOptions {
  Mode mode = Mode::kBnTest;
  bool track = false;           // cache intermediates for backward
  bool update_running = true;   // train mode: exponentially smooth running stats
  const std::vector<SbnSample>* sbn_samples = nullptr;  // one per BN layer, in order
};

namespace detail {
struct ForwardPass {
  ForwardOptions opt;
  size_t bn_cursor = 0;
};
}  // namespace detail

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& x, detail::ForwardPass& pass) = 0;
  virtual Tensor backward(const Tensor& upstream) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  void zero_grad() {
    for (Tensor* g : grads()) std::fill(g->values().begin(), g->values().end(), 0.0);
  }
};

class Linear : public Layer {
 public:
  Linear(size_t in, size_t out)
      : in_(in), out_(out), w_({in, out}), b_({out}), gw_({in, out}), gb_({out}) {
    if (in == 0 || out == 0) throw ShapeError("Linear: extents must be positive");
  }

  void init_he_uniform(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_));
    for (auto& v : w_.values()) v = rng.uniform(-limit, limit);
    std::fill(b_.values().begin(), b_.values().end(), 0.0);
  }

  std::string_view kind() const override { return "linear"; }

  Tensor forward(const Tensor& x, detail::ForwardPass& pass) override {
    detail::require_rank(x, 2, "Linear::forward");
    Tensor y = matmul(x, w_);
    const size_t b = y.extent(0);
    for (size_t i = 0; i < b; ++i)
      for (size_t j = 0; j < out_; ++j) y(i, j) += b_[j];
    if (pass.opt.track) {
      cached_x_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& upstream) override {
    if (!has_cache_) throw UsageError("Linear::backward: no tracked forward pass");
    auto [gx, gw] = matmul_backward(cached_x_, w_, upstream);
    for (size_t i = 0; i < gw.size(); ++i) gw_[i] += gw[i];
    const size_t b = upstream.extent(0);
    for (size_t i = 0; i < b; ++i)
      for (size_t j = 0; j < out_; ++j) gb_[j] += upstream(i, j);
    return gx;
  }

  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }

  size_t in() const { return in_; }
  size_t out() const { return out_; }
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  size_t in_, out_;
  Tensor w_, b_, gw_, gb_;
  Tensor cached_x_;
  bool has_cache_ = false;
};

class Conv2d : public Layer {
 public:
  Conv2d(size_t filters, size_t channels, size_t kh, size_t kw, size_t stride, size_t padding)
      : stride_(stride),
        padding_(padding),
        kernel_({filters, channels, kh, kw}),
        bias_({filters}),
        gkernel_({filters, channels, kh, kw}),
        gbias_({filters}) {}

  void init_he_uniform(Rng& rng) {
    const double fan_in =
        static_cast<double>(kernel_.extent(1) * kernel_.extent(2) * kernel_.extent(3));
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : kernel_.values()) v = rng.uniform(-limit, limit);
    std::fill(bias_.values().begin(), bias_.values().end(), 0.0);
  }

  std::string_view kind() const override { return "conv2d"; }

  Tensor forward(const Tensor& x, detail::ForwardPass& pass) override {
    Tensor y = conv2d(x, kernel_, stride_, padding_);
    const size_t b = y.extent(0), f = y.extent(1), oh = y.extent(2), ow = y.extent(3);
    for (size_t bi = 0; bi < b; ++bi)
      for (size_t fi = 0; fi < f; ++fi) {
        const double bv = bias_[fi];
        for (size_t i = 0; i < oh; ++i)
          for (size_t j = 0; j < ow; ++j) y(bi, fi, i, j) += bv;
      }
    if (pass.opt.track) {
      cached_x_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& upstream) override {
    if (!has_cache_) throw UsageError("Conv2d::backward: no tracked forward pass");
    auto [gx, gk] = conv2d_backward(cached_x_, kernel_, stride_, padding_, upstream);
    for (size_t i = 0; i < gk.size(); ++i) gkernel_[i] += gk[i];
    const size_t b = upstream.extent(0), f = upstream.extent(1);
    const size_t oh = upstream.extent(2), ow = upstream.extent(3);
    for (size_t bi = 0; bi < b; ++bi)
      for (size_t fi = 0; fi < f; ++fi)
        for (size_t i = 0; i < oh; ++i)
          for (size_t j = 0; j < ow; ++j) gbias_[fi] += upstream(bi, fi, i, j);
    return gx;
  }

  std::vector<Tensor*> params() override { return {&kernel_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&gkernel_, &gbias_}; }

  size_t stride() const { return stride_; }
  size_t padding() const { return padding_; }
  Tensor& kernel() { return kernel_; }
  Tensor& bias() { return bias_; }

 private:
  size_t stride_, padding_;
  Tensor kernel_, bias_, gkernel_, gbias_;
  Tensor cached_x_;
  bool has_cache_ = false;
};

class ReLU : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }

  Tensor forward(const Tensor& x, detail::ForwardPass& pass) override {
    if (pass.opt.track) {
      cached_x_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return relu(x);
  }

  Tensor backward(const Tensor& upstream) override {
    if (!has_cache_) throw UsageError("ReLU::backward: no tracked forward pass");
    return relu_backward(cached_x_, upstream);
  }

 private:
  Tensor cached_x_;
  bool has_cache_ = false;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(size_t window, size_t stride) : window_(window), stride_(stride) {}

  std::string_view kind() const override { return "maxpool2d"; }

  Tensor forward(const Tensor& x, detail::ForwardPass& pass) override {
    if (pass.opt.track) {
      cached_x_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return maxpool2d(x, window_, stride_);
  }

  Tensor backward(const Tensor& upstream) override {
    if (!has_cache_) throw UsageError("MaxPool2d::backward: no tracked forward pass");
    return maxpool2d_backward(cached_x_, window_, stride_, upstream);
  }

  size_t window() const { return window_; }
  size_t stride() const { return stride_; }

 private:
  size_t window_, stride_;
  Tensor cached_x_;
  bool has_cache_ = false;
};

class Flatten : public Layer {
 public:
  std::string_view kind() const override { return "flatten"; }

  Tensor forward(const Tensor& x, detail::ForwardPass& pass) override {
    if (x.rank() < 2) throw ShapeError("Flatten: input rank must be >= 2, got " + x.shape_str());
    if (pass.opt.track) {
      cached_shape_ = x.shape();
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    size_t rest = 1;
    for (size_t d = 1; d < x.rank(); ++d) rest *= x.extent(d);
    return x.reshaped({x.extent(0), rest});
  }

  Tensor backward(const Tensor& upstream) override {
    if (!has_cache_) throw UsageError("Flatten::backward: no tracked forward pass");
    return upstream.reshaped(cached_shape_);
  }

 private:
  std::vector<size_t> cached_shape_;
  bool has_cache_ = false;
};

// Batch Normalization. Train mode standardizes with the current mini-batch's
// per-channel mean and population variance and smooths the running statistics;
// test mode applies the fixed affine map built from the running statistics;
// sample mode plugs in an externally drawn (mu, sigma) pair per channel.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(size_t channels, double epsilon = 1e-5, double momentum = 0.1)
      : channels_(channels),
        epsilon_(epsilon),
        momentum_(momentum),
        gamma_({channels}),
        beta_({channels}),
        ggamma_({channels}),
        gbeta_({channels}),
        running_mean_(channels, 0.0),
        running_var_(channels, 1.0) {
    if (channels == 0) throw ShapeError("BatchNorm: channel count must be positive");
    if (epsilon < 0.0) throw DomainError("BatchNorm: epsilon must be non-negative");
    if (!(momentum > 0.0 && momentum < 1.0)) {
      throw DomainError("BatchNorm: momentum must lie in (0,1)");
    }
    std::fill(gamma_.values().begin(), gamma_.values().end(), 1.0);
  }

  std::string_view kind() const override { return "batchnorm"; }

  Tensor forward(const Tensor& x, detail::ForwardPass& pass) override {
    switch (pass.opt.mode) {
      case Mode::kTrain:
        return forward_train(x, pass.opt.update_running, pass.opt.track);
      case Mode::kBnTest:
        has_cache_ = false;
        return forward_test(x);
      case Mode::kSbnSample: {
        has_cache_ = false;
        if (pass.opt.sbn_samples == nullptr || pass.bn_cursor >= pass.opt.sbn_samples->size()) {
          throw UsageError("BatchNorm: sbn-sample mode needs one sample per BN layer");
        }
        return forward_sample(x, (*pass.opt.sbn_samples)[pass.bn_cursor++]);
      }
    }
    throw UsageError("BatchNorm: unknown mode");
  }

  // y = gamma * (x - mu(B)) / sqrt(var(B) + eps) + beta, population variance.
  // Records mu(B) and sigma(B) = sqrt(var(B) + eps) for SBN consumers.
  Tensor forward_train(const Tensor& x, bool update_running, bool track) {
    const Layout lay = layout(x);
    if (x.extent(0) < 2) {
      throw DegenerateBatchError("BatchNorm: train-mode batch size must be >= 2, got " +
                                 std::to_string(x.extent(0)));
    }
    const double count = static_cast<double>(lay.count);
    std::vector<double> mu(channels_, 0.0), var(channels_, 0.0);
    for_each_channel(x, lay, [&](size_t c, const double* v, size_t n) {
      double s = 0.0;
      for (size_t i = 0; i < n; ++i) s += v[i];
      mu[c] += s;
    });
    for (size_t c = 0; c < channels_; ++c) mu[c] /= count;
    for_each_channel(x, lay, [&](size_t c, const double* v, size_t n) {
      double s = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double d = v[i] - mu[c];
        s += d * d;
      }
      var[c] += s;
    });
    for (size_t c = 0; c < channels_; ++c) var[c] /= count;

    std::vector<double> inv_std(channels_);
    last_mu_ = mu;
    last_sigma_.resize(channels_);
    for (size_t c = 0; c < channels_; ++c) {
      last_sigma_[c] = std::sqrt(var[c] + epsilon_);
      inv_std[c] = 1.0 / last_sigma_[c];
    }
    if (update_running) {
      for (size_t c = 0; c < channels_; ++c) {
        running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mu[c];
        running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var[c];
      }
      stats_initialized_ = true;
    }
    has_batch_stats_ = true;

    Tensor xhat = x;
    apply_channel(xhat, lay, [&](size_t c, double v) { return (v - mu[c]) * inv_std[c]; });
    Tensor y = xhat;
    apply_channel(y, lay, [&](size_t c, double v) { return gamma_[c] * v + beta_[c]; });
    if (track) {
      cached_xhat_ = std::move(xhat);
      cached_inv_std_ = std::move(inv_std);
      cached_layout_ = lay;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  // Fixed affine map from the running statistics. No state mutation.
  Tensor forward_test(const Tensor& x) const {
    if (!stats_initialized_) {
      throw NotFittedError("BatchNorm: running statistics not initialized; train or load first");
    }
    const Layout lay = layout(x);
    std::vector<double> inv(channels_);
    for (size_t c = 0; c < channels_; ++c) inv[c] = 1.0 / std::sqrt(running_var_[c] + epsilon_);
    return normalize_with(x, lay, running_mean_, inv);
  }

  // Plug a sampled (mu, sigma) in; sigma is the denominator directly.
  Tensor forward_sample(const Tensor& x, const SbnSample& s) const {
    if (s.mu.size() != channels_ || s.sigma.size() != channels_) {
      throw ShapeError("BatchNorm: sample channel count " + std::to_string(s.mu.size()) + " vs " +
                       std::to_string(channels_));
    }
    const Layout lay = layout(x);
    std::vector<double> inv(channels_);
    for (size_t c = 0; c < channels_; ++c) {
      if (!(s.sigma[c] > 0.0)) throw DomainError("BatchNorm: sampled sigma must be positive");
      inv[c] = 1.0 / s.sigma[c];
    }
    return normalize_with(x, lay, s.mu, inv);
  }

  // Exact gradient of the train-mode transform, including the dependence of
  // mu(B) and var(B) on every batch element:
  //   dx = gamma * inv_std * (u - mean(u) - xhat * mean(u * xhat))
  Tensor backward(const Tensor& upstream) override {
    if (!has_cache_) {
      throw UsageError("BatchNorm::backward: last forward was not a tracked train-mode pass");
    }
    const Layout lay = cached_layout_;
    if (!upstream.same_shape(cached_xhat_)) {
      throw ShapeError("BatchNorm::backward: upstream " + upstream.shape_str() + " vs cached " +
                       cached_xhat_.shape_str());
    }
    const double count = static_cast<double>(lay.count);
    std::vector<double> sum_u(channels_, 0.0), sum_ux(channels_, 0.0);
    for_each_channel_pair(upstream, cached_xhat_, lay,
                          [&](size_t c, const double* u, const double* xh, size_t n) {
                            double su = 0.0, sux = 0.0;
                            for (size_t i = 0; i < n; ++i) {
                              su += u[i];
                              sux += u[i] * xh[i];
                            }
                            sum_u[c] += su;
                            sum_ux[c] += sux;
                          });
    for (size_t c = 0; c < channels_; ++c) {
      ggamma_[c] += sum_ux[c];
      gbeta_[c] += sum_u[c];
    }
    Tensor gx = upstream;
    const Tensor& xh = cached_xhat_;
    walk(gx, lay, [&](size_t c, double* v, size_t n, size_t offset) {
      const double scale = gamma_[c] * cached_inv_std_[c];
      const double mu_u = sum_u[c] / count;
      const double mu_ux = sum_ux[c] / count;
      const double* xrow = xh.data() + offset;
      for (size_t i = 0; i < n; ++i) v[i] = scale * (v[i] - mu_u - xrow[i] * mu_ux);
    });
    return gx;
  }

  std::vector<Tensor*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> grads() override { return {&ggamma_, &gbeta_}; }

  size_t channels() const { return channels_; }
  double epsilon() const { return epsilon_; }
  double momentum() const { return momentum_; }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }
  const std::vector<double>& running_mean() const { return running_mean_; }
  const std::vector<double>& running_var() const { return running_var_; }
  bool stats_initialized() const { return stats_initialized_; }
  void set_stats_initialized(bool v) { stats_initialized_ = v; }

  // Statistics of the most recent train-mode forward: mu(B) and
  // sigma(B) = sqrt(var(B) + eps), strictly positive even for constant batches.
  const std::vector<double>& batch_mu() const {
    require_batch_stats();
    return last_mu_;
  }
  const std::vector<double>& batch_sigma() const {
    require_batch_stats();
    return last_sigma_;
  }

  std::optional<SbnApprox>& sbn() { return sbn_; }
  const std::optional<SbnApprox>& sbn() const { return sbn_; }

 private:
  struct Layout {
    size_t count = 0;   // elements per channel
    size_t inner = 0;   // contiguous run per (sample, channel) block
    size_t batch = 0;
  };

  Layout layout(const Tensor& x) const {
    Layout lay;
    if (x.rank() == 2) {
      if (x.extent(1) != channels_) {
        throw ShapeError("BatchNorm: input " + x.shape_str() + " vs " +
                         std::to_string(channels_) + " channels");
      }
      lay.batch = x.extent(0);
      lay.inner = 1;
      lay.count = lay.batch;
    } else if (x.rank() == 4) {
      if (x.extent(1) != channels_) {
        throw ShapeError("BatchNorm: input " + x.shape_str() + " vs " +
                         std::to_string(channels_) + " channels");
      }
      lay.batch = x.extent(0);
      lay.inner = x.extent(2) * x.extent(3);
      lay.count = lay.batch * lay.inner;
    } else {
      throw ShapeError("BatchNorm: rank-2 or rank-4 input required, got " + x.shape_str());
    }
    return lay;
  }

  // f(channel, block pointer, block length) over each (sample, channel) block.
  template <typename F>
  void for_each_channel(const Tensor& x, const Layout& lay, F&& f) const {
    const double* p = x.data();
    for (size_t b = 0; b < lay.batch; ++b)
      for (size_t c = 0; c < channels_; ++c) f(c, p + (b * channels_ + c) * lay.inner, lay.inner);
  }

  template <typename F>
  void for_each_channel_pair(const Tensor& a, const Tensor& b, const Layout& lay, F&& f) const {
    const double* pa = a.data();
    const double* pb = b.data();
    for (size_t bi = 0; bi < lay.batch; ++bi)
      for (size_t c = 0; c < channels_; ++c) {
        const size_t off = (bi * channels_ + c) * lay.inner;
        f(c, pa + off, pb + off, lay.inner);
      }
  }

  template <typename F>
  void apply_channel(Tensor& x, const Layout& lay, F&& f) const {
    double* p = x.data();
    for (size_t b = 0; b < lay.batch; ++b)
      for (size_t c = 0; c < channels_; ++c) {
        double* blk = p + (b * channels_ + c) * lay.inner;
        for (size_t i = 0; i < lay.inner; ++i) blk[i] = f(c, blk[i]);
      }
  }

  template <typename F>
  void walk(Tensor& x, const Layout& lay, F&& f) const {
    double* p = x.data();
    for (size_t b = 0; b < lay.batch; ++b)
      for (size_t c = 0; c < channels_; ++c) {
        const size_t off = (b * channels_ + c) * lay.inner;
        f(c, p + off, lay.inner, off);
      }
  }

  // Shared affine path: identical operation order for test and sample modes,
  // so equal constants produce bitwise-equal outputs.
  Tensor normalize_with(const Tensor& x, const Layout& lay, const std::vector<double>& mu,
                        const std::vector<double>& inv) const {
    Tensor y = x;
    apply_channel(y, lay, [&](size_t c, double v) { return gamma_[c] * ((v - mu[c]) * inv[c]) + beta_[c]; });
    return y;
  }

  void require_batch_stats() const {
    if (!has_batch_stats_) {
      throw UsageError("BatchNorm: no train-mode forward has produced batch statistics yet");
    }
  }

  size_t channels_;
  double epsilon_, momentum_;
  Tensor gamma_, beta_, ggamma_, gbeta_;
  std::vector<double> running_mean_, running_var_;
  bool stats_initialized_ = false;

  std::vector<double> last_mu_, last_sigma_;
  bool has_batch_stats_ = false;

  Tensor cached_xhat_;
  std::vector<double> cached_inv_std_;
  Layout cached_layout_;
  bool has_cache_ = false;

  std::optional<SbnApprox> sbn_;
};

// An ordered stack of layers with a single normalization-mode flag.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  Tensor forward(const Tensor& x) {
    ForwardOptions opt;
    opt.mode = mode_;
    opt.track = (mode_ == Mode::kTrain);
    if (mode_ == Mode::kSbnSample) {
      throw UsageError("Network::forward: sbn-sample mode requires an explicit sample set");
    }
    return forward(x, opt);
  }

  Tensor forward(const Tensor& x, const ForwardOptions& opt) {
    detail::ForwardPass pass{opt, 0};
    if (opt.mode == Mode::kSbnSample) {
      const size_t nbn = bn_count();
      if (opt.sbn_samples == nullptr || opt.sbn_samples->size() != nbn) {
        throw ShapeError("Network::forward: " + std::to_string(nbn) + " BN layers but " +
                         std::to_string(opt.sbn_samples ? opt.sbn_samples->size() : 0) +
                         " samples supplied");
      }
    }
    Tensor h = x;
    for (auto& layer : layers_) h = layer->forward(h, pass);
    return h;
  }

  // Backpropagates through the stack; layer parameter gradients accumulate.
  Tensor backward(const Tensor& upstream) {
    Tensor g = upstream;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void zero_grad() {
    for (auto& layer : layers_) layer->zero_grad();
  }

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (auto& layer : layers_)
      for (Tensor* p : layer->params()) out.push_back(p);
    return out;
  }

  std::vector<Tensor*> grads() {
    std::vector<Tensor*> out;
    for (auto& layer : layers_)
      for (Tensor* g : layer->grads()) out.push_back(g);
    return out;
  }

  size_t param_count() {
    size_t n = 0;
    for (Tensor* p : params()) n += p->size();
    return n;
  }

  std::vector<BatchNorm*> bn_layers() {
    std::vector<BatchNorm*> out;
    for (auto& layer : layers_) {
      if (auto* bn = dynamic_cast<BatchNorm*>(layer.get())) out.push_back(bn);
    }
    return out;
  }

  size_t bn_count() const {
    size_t n = 0;
    for (const auto& layer : layers_) {
      if (dynamic_cast<const BatchNorm*>(layer.get()) != nullptr) ++n;
    }
    return n;
  }

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  Mode mode_ = Mode::kTrain;
};

// Fully-connected stack: Flatten, then Linear -> BN -> ReLU for every hidden
// transition and a bare Linear output layer. widths = {in, hidden..., classes}.
inline Network build_mlp_bn(const std::vector<size_t>& widths, uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("build_mlp_bn: need at least input and output widths");
  for (size_t w : widths) {
    if (w == 0) throw ShapeError("build_mlp_bn: zero width in spec");
  }
  Rng rng(derive_seed(seed, "init"));
  Network net;
  net.add(std::make_unique<Flatten>());
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    auto lin = std::make_unique<Linear>(widths[i], widths[i + 1]);
    lin->init_he_uniform(rng);
    net.add(std::move(lin));
    const bool is_output = (i + 2 == widths.size());
    if (!is_output) {
      net.add(std::make_unique<BatchNorm>(widths[i + 1]));
      net.add(std::make_unique<ReLU>());
    }
  }
  return net;
}

// LeNet-5 with a BN layer after every conv/linear except the output layer.
// Expects [B,1,28,28] input.
inline Network build_lenet5_bn(uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  Network net;
  auto conv1 = std::make_unique<Conv2d>(6, 1, 5, 5, 1, 2);
  conv1->init_he_uniform(rng);
  net.add(std::move(conv1));
  net.add(std::make_unique<BatchNorm>(6));
  net.add(std::make_unique<ReLU>());
  net.add(std::make_unique<MaxPool2d>(2, 2));
  auto conv2 = std::make_unique<Conv2d>(16, 6, 5, 5, 1, 0);
  conv2->init_he_uniform(rng);
  net.add(std::move(conv2));
  net.add(std::make_unique<BatchNorm>(16));
  net.add(std::make_unique<ReLU>());
  net.add(std::make_unique<MaxPool2d>(2, 2));
  net.add(std::make_unique<Flatten>());
  auto fc1 = std::make_unique<Linear>(400, 120);
  fc1->init_he_uniform(rng);
  net.add(std::move(fc1));
  net.add(std::make_unique<BatchNorm>(120));
  net.add(std::make_unique<ReLU>());
  auto fc2 = std::make_unique<Linear>(120, 84);
  fc2->init_he_uniform(rng);
  net.add(std::move(fc2));
  net.add(std::make_unique<BatchNorm>(84));
  net.add(std::make_unique<ReLU>());
  auto fc3 = std::make_unique<Linear>(84, 10);
  fc3->init_he_uniform(rng);
  net.add(std::move(fc3));
  return net;
}

}  // namespace sbnlab
