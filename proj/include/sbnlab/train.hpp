#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sbnlab/data.hpp"
#include "sbnlab/errors.hpp"
#include "sbnlab/network.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/tensor.hpp"

namespace sbnlab {

struct LrSchedule {
  enum class Kind { kNone, kStepDecay };
  Kind kind = Kind::kNone;
  double factor = 0.1;
  size_t every_n_epochs = 0;

  double at_epoch(double base_lr, size_t epoch) const {
    if (kind == Kind::kNone || every_n_epochs == 0) return base_lr;
    const size_t steps = (epoch - 1) / every_n_epochs;
    return base_lr * std::pow(factor, static_cast<double>(steps));
  }
};

struct TrainConfig {
  size_t batch_size = 128;
  double learning_rate = 0.05;
  double momentum_sgd = 0.9;
  size_t epochs = 20;
  uint64_t seed = 1;
  LrSchedule lr_schedule;

  void validate() const {
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (!(learning_rate > 0.0) && learning_rate != 0.0) {
      throw ConfigError("train: learning_rate must be non-negative");
    }
    if (momentum_sgd < 0.0 || momentum_sgd >= 1.0) {
      throw ConfigError("train: momentum must lie in [0,1)");
    }
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  }
};

// Mean over the batch of -log p(true class); probabilities clipped below at
// 1e-12 before the log.
inline double cross_entropy(const Tensor& probabilities, const std::vector<int>& labels) {
  detail::require_rank(probabilities, 2, "cross_entropy");
  const size_t b = probabilities.extent(0), c = probabilities.extent(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(b) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<size_t>(y) >= c) {
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                        std::to_string(c) + ")");
    }
    total += -std::log(std::max(probabilities(i, static_cast<size_t>(y)), 1e-12));
  }
  return total / static_cast<double>(b);
}

// Gradient of the mean cross-entropy with respect to the logits:
// (softmax - onehot) / B.
inline Tensor cross_entropy_grad_logits(const Tensor& probabilities,
                                        const std::vector<int>& labels) {
  detail::require_rank(probabilities, 2, "cross_entropy_grad_logits");
  const size_t b = probabilities.extent(0), c = probabilities.extent(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy_grad_logits: " + std::to_string(b) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor g = probabilities;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<size_t>(y) >= c) {
      throw DomainError("cross_entropy_grad_logits: label " + std::to_string(y) + " outside [0," +
                        std::to_string(c) + ")");
    }
    g(i, static_cast<size_t>(y)) -= 1.0;
    for (size_t j = 0; j < c; ++j) g(i, j) *= inv_b;
  }
  return g;
}

// Classic momentum SGD: v <- momentum*v + g; w <- w - lr*v.
inline void sgd_step(Tensor& param, const Tensor& grad, double lr, double momentum,
                     Tensor& velocity) {
  if (!param.same_shape(grad) || !param.same_shape(velocity)) {
    throw ShapeError("sgd_step: param " + param.shape_str() + ", grad " + grad.shape_str() +
                     ", velocity " + velocity.shape_str() + " must agree");
  }
  for (size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor*> params, double lr, double momentum)
      : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    velocities_.reserve(params_.size());
    for (Tensor* p : params_) velocities_.emplace_back(p->shape());
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void step(const std::vector<Tensor*>& grads) {
    if (grads.size() != params_.size()) {
      throw ShapeError("SgdOptimizer::step: " + std::to_string(grads.size()) + " grads vs " +
                       std::to_string(params_.size()) + " params");
    }
    for (size_t i = 0; i < params_.size(); ++i) {
      sgd_step(*params_[i], *grads[i], lr_, momentum_, velocities_[i]);
    }
  }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> velocities_;
  double lr_, momentum_;
};

struct EpochMetrics {
  size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> test_error;
  double learning_rate = 0.0;
};

using MetricsHook = std::function<void(const EpochMetrics&)>;

// Plain test-mode error rate, evaluated in chunks. Ties break to the lowest
// class index.
inline double test_error_rate(Network& net, const Dataset& test, size_t chunk = 512) {
  if (!test.has_labels()) throw DomainError("test_error_rate: dataset has no labels");
  const Mode saved = net.mode();
  net.set_mode(Mode::kBnTest);
  size_t wrong = 0;
  for (size_t start = 0; start < test.size(); start += chunk) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(test.size(), start + chunk); ++i) idx.push_back(i);
    const Dataset part = test.subset(idx);
    const Tensor logits = net.forward(part.images);
    const size_t c = logits.extent(1);
    for (size_t i = 0; i < idx.size(); ++i) {
      size_t best = 0;
      for (size_t j = 1; j < c; ++j) {
        if (logits(i, j) > logits(i, best)) best = j;
      }
      if (static_cast<int>(best) != part.labels[i]) ++wrong;
    }
  }
  net.set_mode(saved);
  return static_cast<double>(wrong) / static_cast<double>(test.size());
}

// Mini-batch SGD over shuffled epochs. BN layers normalize with current-batch
// statistics and are differentiated through; running statistics update en
// route. The last incomplete mini-batch of an epoch is dropped. Deterministic
// given the config seed.
inline std::vector<EpochMetrics> train(Network& net, const Dataset& train_ds,
                                       const TrainConfig& cfg, const Dataset* test_ds = nullptr,
                                       const MetricsHook& hook = {}) {
  cfg.validate();
  if (train_ds.size() == 0) throw DomainError("train: empty dataset");
  if (!train_ds.has_labels()) throw DomainError("train: dataset has no labels");
  if (cfg.batch_size > train_ds.size()) {
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) +
                      " exceeds dataset size " + std::to_string(train_ds.size()));
  }
  net.set_mode(Mode::kTrain);
  SgdOptimizer opt(net.params(), cfg.learning_rate, cfg.momentum_sgd);
  std::vector<EpochMetrics> history;
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.lr_schedule.at_epoch(cfg.learning_rate, epoch);
    opt.set_learning_rate(lr);
    const uint64_t epoch_seed =
        derive_seed(cfg.seed, "train.shuffle.epoch" + std::to_string(epoch));
    const auto batches = batch_indices(train_ds.size(), cfg.batch_size, epoch_seed, true);
    double loss_sum = 0.0;
    for (const auto& idx : batches) {
      const Dataset batch = train_ds.subset(idx);
      net.zero_grad();
      const Tensor logits = net.forward(batch.images);
      const Tensor probs = softmax(logits);
      loss_sum += cross_entropy(probs, batch.labels);
      const Tensor g = cross_entropy_grad_logits(probs, batch.labels);
      net.backward(g);
      opt.step(net.grads());
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
    m.learning_rate = lr;
    if (test_ds != nullptr) m.test_error = test_error_rate(net, *test_ds);
    net.set_mode(Mode::kTrain);
    if (hook) hook(m);
    history.push_back(m);
  }
  return history;
}

}  // namespace sbnlab
