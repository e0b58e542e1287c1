// Acceptance suite: one pass/fail line per criterion, exit 0 only when every
// criterion holds. Uses real MNIST IDX files when SBNLAB_MNIST_DIR (or
// ./data/mnist) exists; otherwise generates a deterministic synthetic digit
// corpus in the same format. notMNIST is taken from SBNLAB_NOTMNIST_DIR when
// present, else the pixel-shuffle OOD set stands in.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "sbnlab/sbnlab.hpp"
#include "../support/helpers.hpp"

using namespace sbnlab;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<Criterion> g_results;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

void record(int id, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
  g_results.push_back({id, name, pass, detail, seconds});
  std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

Network clone(Network& net) { return deserialize_network(serialize_network(net)); }

struct Corpus {
  Dataset train;
  Dataset test;
  Dataset ood;
  std::string source;
  std::string ood_source;
};

Corpus load_corpus() {
  Corpus c;
  std::string dir;
  if (const char* env = std::getenv("SBNLAB_MNIST_DIR"); env != nullptr && fs::exists(env)) {
    dir = env;
  } else if (fs::exists("data/mnist/train-images-idx3-ubyte") ||
             fs::exists("data/mnist/train-images-idx3-ubyte.gz")) {
    dir = "data/mnist";
  }
  if (!dir.empty()) {
    c.train = load_idx_dir(dir, true, "mnist-train");
    c.test = load_idx_dir(dir, false, "mnist-test");
    c.source = "mnist:" + dir;
  } else {
    c.train = make_synth_digits(12000, 20260801, "synth-train");
    c.test = make_synth_digits(2000, 20260802, "synth-test");
    c.source = "synthetic digits (12000/2000)";
  }
  if (const char* env = std::getenv("SBNLAB_NOTMNIST_DIR"); env != nullptr && fs::exists(env)) {
    c.ood = make_ood_set(OodKind::kNotMnistIdx, env, c.test, 7);
    c.ood_source = "notmnist";
  } else {
    c.ood = make_ood_set(OodKind::kPixelShuffle, "", c.test, 7);
    c.ood_source = "pixel-shuffle";
  }
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double median(std::vector<double> xs) { return quantile(xs, 0.5); }

// ---- criterion 4: moment matching against the brute-force oracle ----------

void criterion_moment_matching() {
  const double t0 = now_seconds();
  const double m_star = 0.3, s_star = 0.2;  // LogNormal(0.3, 0.04)
  const size_t n = 20000;
  Rng rng(20248);
  SbnApprox approx(1, 0.001);
  std::vector<double> logs(n);
  for (size_t i = 0; i < n; ++i) {
    const double ls = m_star + s_star * rng.gaussian();
    logs[i] = ls;
    const double mu = 0.0, sigma = std::exp(ls);
    approx.update({&mu, 1}, {&sigma, 1});
  }
  const double direct_m = mean(logs);
  const double direct_s2 = variance_population(logs);
  const double err_m = std::abs(approx.m_sigma(0) - direct_m) / std::abs(direct_m);
  const double err_s2 = std::abs(approx.s2_sigma(0) - direct_s2) / direct_s2;
  record(4, "moment-matching oracle equivalence", err_m <= 0.02 && err_s2 <= 0.02,
         fmt("rel err m_sigma %.4f, s2_sigma %.4f (limit 0.02)", err_m, err_s2),
         now_seconds() - t0);
}

// ---- criterion 8: numerics suite -------------------------------------------

bool gradient_checks(std::string& detail) {
  using testsupport::dot;
  using testsupport::grad_rel_err;
  using testsupport::numeric_grad;
  using testsupport::random_tensor;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(41000 + trial);
    const size_t m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5);
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    const Tensor up = random_tensor({m, n}, rng);
    const auto [ga, gb] = matmul_backward(a, b, up);
    worst = std::max(worst, grad_rel_err(ga, numeric_grad([&](const Tensor& t) {
      return dot(matmul(t, b), up);
    }, a)));
    worst = std::max(worst, grad_rel_err(gb, numeric_grad([&](const Tensor& t) {
      return dot(matmul(a, t), up);
    }, b)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(42000 + trial);
    const Tensor x = random_tensor({1 + rng.below(2), 1 + rng.below(2), 4, 5}, rng);
    const Tensor kern = random_tensor({1 + rng.below(3), x.extent(1), 2, 2}, rng);
    const size_t pad = rng.below(2);
    const Tensor y = conv2d(x, kern, 1, pad);
    Tensor up(y.shape());
    for (auto& v : up.values()) v = rng.uniform(-1, 1);
    const auto [gx, gk] = conv2d_backward(x, kern, 1, pad, up);
    worst = std::max(worst, grad_rel_err(gx, numeric_grad([&](const Tensor& t) {
      return dot(conv2d(t, kern, 1, pad), up);
    }, x)));
    worst = std::max(worst, grad_rel_err(gk, numeric_grad([&](const Tensor& t) {
      return dot(conv2d(x, t, 1, pad), up);
    }, kern)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(43000 + trial);
    const Tensor x = random_tensor({1 + rng.below(5), 1 + rng.below(5)}, rng);
    const Tensor up = random_tensor(x.shape(), rng);
    worst = std::max(worst, grad_rel_err(relu_backward(x, up),
                                         numeric_grad([&](const Tensor& t) {
                                           return dot(relu(t), up);
                                         }, x)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(44000 + trial);
    const Tensor x = random_tensor({1 + rng.below(2), 1 + rng.below(2), 4, 4}, rng);
    const Tensor up = random_tensor({x.extent(0), x.extent(1), 2, 2}, rng);
    worst = std::max(worst, grad_rel_err(maxpool2d_backward(x, 2, 2, up),
                                         numeric_grad([&](const Tensor& t) {
                                           return dot(maxpool2d(t, 2, 2), up);
                                         }, x)));
  }
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(45000 + trial);
    BatchNorm bn(3, 1e-5);
    for (auto& v : bn.gamma().values()) v = rng.uniform(0.5, 1.5);
    for (auto& v : bn.beta().values()) v = rng.uniform(-0.5, 0.5);
    const Tensor x = trial % 2 ? random_tensor({4, 3, 2, 2}, rng) : random_tensor({4, 3}, rng);
    const Tensor up = random_tensor(x.shape(), rng);
    bn.forward_train(x, false, true);
    const Tensor gx = bn.backward(up);
    const Tensor nx = numeric_grad(
        [&](const Tensor& t) {
          BatchNorm probe(3, 1e-5);
          probe.gamma() = bn.gamma();
          probe.beta() = bn.beta();
          return dot(probe.forward_train(t, false, false), up);
        },
        x);
    worst = std::max(worst, grad_rel_err(gx, nx));
  }
  detail = fmt("worst gradient rel err %.2e (limit 1e-4)", worst);
  return worst <= 1e-4;
}

bool property_checks(std::string& detail) {
  Rng rng(46000);
  size_t failures = 0;
  // entropy bounds over random softmax distributions
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t c = 2 + rng.below(12);
    const Tensor p = softmax(testsupport::random_tensor({1, c}, rng, -8, 8));
    const double h = predictive_entropy({p.data(), c});
    if (!(h >= 0.0 && h <= std::log(static_cast<double>(c)) + 1e-12)) ++failures;
  }
  // ECDF: nondecreasing, 0 below the min, 1 at and above the max
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> xs(1 + rng.below(60));
    for (auto& x : xs) x = rng.uniform(-10, 10);
    const auto e = ecdf(xs);
    bool ok = e.back().second == 1.0 && ecdf_eval(e, e.front().first - 1.0) == 0.0;
    for (size_t i = 1; i < e.size() && ok; ++i) {
      ok = e[i].first > e[i - 1].first && e[i].second > e[i - 1].second;
    }
    if (!ok) ++failures;
  }
  // KDE: positive density, integral within 1e-3 of one (trapezoid oracle)
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> xs(2 + rng.below(24));
    for (auto& x : xs) x = rng.uniform(-3, 3);
    const double h = silverman_bandwidth(xs);
    if (!(h > 0.0)) {
      ++failures;
      continue;
    }
    const double lo = *std::min_element(xs.begin(), xs.end()) - 8 * h;
    const double hi = *std::max_element(xs.begin(), xs.end()) + 8 * h;
    const size_t steps = 1500;
    double integral = 0.0, prev = kde_density(xs, h, lo);
    for (size_t i = 1; i <= steps; ++i) {
      const double q = lo + (hi - lo) * static_cast<double>(i) / steps;
      const double cur = kde_density(xs, h, q);
      integral += 0.5 * (prev + cur) * (hi - lo) / steps;
      prev = cur;
    }
    if (std::abs(integral - 1.0) > 1e-3) ++failures;
  }
  detail = fmt("%zu failures across 3000 random property cases", failures);
  return failures == 0;
}

void criterion_numerics() {
  const double t0 = now_seconds();
  std::string d1, d2;
  const bool g = gradient_checks(d1);
  const bool p = property_checks(d2);
  record(8, "numerics suite", g && p, d1 + "; " + d2, now_seconds() - t0);
}

// ---- trained-model criteria -------------------------------------------------

struct TrainedModel {
  Network net;
  double train_seconds = 0.0;
  double bn_test_error = 1.0;
  double sbn_error = 1.0;
};

TrainedModel train_model(const Corpus& corpus, bool lenet) {
  TrainedModel m;
  m.net = lenet ? build_lenet5_bn(1) : build_mlp_bn({784, 256, 10}, 1);
  TrainConfig cfg;
  cfg.batch_size = 128;
  cfg.learning_rate = 0.05;
  cfg.momentum_sgd = 0.9;
  cfg.epochs = lenet ? 30 : 20;
  cfg.seed = 1;
  cfg.lr_schedule = {LrSchedule::Kind::kStepDecay, 0.1,
                     static_cast<size_t>(std::ceil(0.75 * static_cast<double>(cfg.epochs)))};
  const double t0 = now_seconds();
  train(m.net, corpus.train, cfg, nullptr, [&](const EpochMetrics& em) {
    std::printf("  %s epoch %2zu/%zu loss %.4f (%.0fs)\n", lenet ? "lenet" : "mlp", em.epoch,
                cfg.epochs, em.train_loss, now_seconds() - t0);
    std::fflush(stdout);
  });
  m.train_seconds = now_seconds() - t0;
  m.bn_test_error = test_error_rate(m.net, corpus.test);
  fit_sbn(m.net, corpus.train, cfg.batch_size, 2000, 0.01, 5);
  Network sbn_net = clone(m.net);
  const auto sbn_scores = error_and_nll(
      [&](const Tensor& xs) { return sbn_predict(sbn_net, xs, 32, 9); }, corpus.test);
  m.sbn_error = sbn_scores.error;
  return m;
}

void criterion_accuracy(const TrainedModel& mlp, const TrainedModel& lenet) {
  const bool mlp_ok = mlp.bn_test_error <= 0.025 && mlp.train_seconds <= 600.0;
  const bool lenet_ok = lenet.bn_test_error <= 0.015 && lenet.train_seconds <= 3600.0;
  const double mlp_delta = std::abs(mlp.sbn_error - mlp.bn_test_error);
  const double lenet_delta = std::abs(lenet.sbn_error - lenet.bn_test_error);
  const bool sbn_ok = mlp_delta <= 0.005 && lenet_delta <= 0.005;
  record(1, "accuracy anchor (scaled)", mlp_ok && lenet_ok && sbn_ok,
         fmt("mlp err %.4f in %.0fs (limits 0.025/600s), lenet err %.4f in %.0fs "
             "(limits 0.015/3600s), sbn deltas %.4f/%.4f (limit 0.005)",
             mlp.bn_test_error, mlp.train_seconds, lenet.bn_test_error, lenet.train_seconds,
             mlp_delta, lenet_delta),
         0.0);
}

void criterion_ood_entropy(Network& net, const Corpus& corpus) {
  const double t0 = now_seconds();
  const auto entropies = [&](const Dataset& ds) {
    std::vector<double> out;
    const size_t chunk = 500;
    for (size_t start = 0; start < ds.size(); start += chunk) {
      std::vector<size_t> idx;
      for (size_t i = start; i < std::min(ds.size(), start + chunk); ++i) idx.push_back(i);
      const auto ent = batch_entropies(sbn_predict(net, ds.subset(idx).images, 32, 13));
      out.insert(out.end(), ent.begin(), ent.end());
    }
    return out;
  };
  const std::vector<double> h_in = entropies(corpus.test);
  const std::vector<double> h_ood = entropies(corpus.ood);
  const double mean_in = mean(h_in), mean_ood = mean(h_ood);
  const double med_in = median(h_in);
  const double f_in = ecdf_eval(ecdf(h_in), med_in);
  const double f_ood = ecdf_eval(ecdf(h_ood), med_in);
  const bool ratio_ok = mean_ood >= 2.0 * mean_in;
  const bool ecdf_ok = f_ood <= f_in;
  record(2, "OOD uncertainty ordering",
         ratio_ok && ecdf_ok,
         fmt("mean H in %.4f vs ood(%s) %.4f (ratio %.1f, need >= 2), F_ood(med_in) %.3f <= "
             "F_in %.3f",
             mean_in, corpus.ood_source.c_str(), mean_ood,
             mean_in > 0 ? mean_ood / mean_in : 1e9, f_ood, f_in),
         now_seconds() - t0);
}

void criterion_bound_gap(Network& net, const Corpus& corpus) {
  const double t0 = now_seconds();
  Rng rng(derive_seed(21, "acceptance.bound-points"));
  std::vector<size_t> idx = sample_indices(corpus.test.size(), 100, rng);
  const Dataset points = corpus.test.subset(idx);
  const auto gaps = bound_gap(net, points.images, points.labels, corpus.train, 128, 128, 23);
  size_t nonneg = 0;
  double min_gap = 1e9;
  for (const auto& g : gaps) {
    if (g.gap >= -0.01) ++nonneg;
    min_gap = std::min(min_gap, g.gap);
  }
  // statistic variance forced to zero: M = N makes every draw the full set,
  // so the distribution over statistics is a point mass and the gap must be
  // exactly 0 for all points
  std::vector<size_t> head(512);
  for (size_t i = 0; i < head.size(); ++i) head[i] = i;
  const Dataset fixed = corpus.train.subset(head);
  const auto degenerate =
      bound_gap(net, points.images, points.labels, fixed, fixed.size(), 128, 29);
  bool exact_zero = true;
  for (const auto& g : degenerate) exact_zero = exact_zero && g.gap == 0.0;
  record(3, "Jensen bound property",
         nonneg >= 99 && exact_zero,
         fmt("%zu/100 gaps >= -0.01 (min %.4f), degenerate gap exactly zero: %s", nonneg, min_gap,
             exact_zero ? "yes" : "no"),
         now_seconds() - t0);
}

void criterion_plugin_degeneracy(Network& fitted, const Corpus& corpus) {
  const double t0 = now_seconds();
  Network plugin = clone(fitted);
  force_plugin_approx(plugin);
  const size_t n = std::min<size_t>(1000, corpus.test.size());
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  const Dataset points = corpus.test.subset(idx);
  plugin.set_mode(Mode::kBnTest);
  const Tensor ref = softmax(plugin.forward(points.images));
  const Tensor approx = sbn_predict(plugin, points.images, 4, 31);
  const double worst = max_abs_diff(ref, approx);
  record(5, "plug-in degeneracy", worst <= 1e-6,
         fmt("max abs diff %.2e over %zu test points (limit 1e-6)", worst, n),
         now_seconds() - t0);
}

void criterion_oracle_fidelity(Network& net, const Corpus& corpus) {
  const double t0 = now_seconds();
  Rng rng(derive_seed(37, "acceptance.fidelity-points"));
  const std::vector<size_t> idx = sample_indices(corpus.test.size(), 100, rng);
  const Dataset points = corpus.test.subset(idx);
  const Tensor p_sbn = sbn_predict(net, points.images, 256, 41);
  const Tensor p_oracle = mc_predict_oracle(net, points.images, corpus.train, 128, 256, 43);
  double total = 0.0;
  for (size_t i = 0; i < p_sbn.size(); ++i) total += std::abs(p_sbn[i] - p_oracle[i]);
  const double mean_abs = total / static_cast<double>(p_sbn.size());
  record(6, "approximation-vs-oracle fidelity", mean_abs <= 0.05,
         fmt("mean abs probability difference %.4f at K=256 (limit 0.05)", mean_abs),
         now_seconds() - t0);
}

bool fit_quality(Network& net, const Corpus& corpus, const char* tag, std::string& detail) {
  const StatTrace trace = collect_statistics(net, corpus.train, 128, 2000, 47);
  std::vector<const SbnApprox*> approx;
  for (BatchNorm* bn : net.bn_layers()) approx.push_back(&*bn->sbn());
  const auto scores = validate_fit(trace, approx, 2000, 53);
  bool ok = true;
  for (size_t l = 0; l < scores.size(); ++l) {
    std::vector<double> ks_mu, ks_sigma;
    for (const auto& s : scores[l]) {
      ks_mu.push_back(s.ks_mu);
      ks_sigma.push_back(s.ks_sigma);
    }
    const double med_mu = median(ks_mu), med_sigma = median(ks_sigma);
    ok = ok && med_mu <= 0.15 && med_sigma <= 0.15;
    detail += fmt("%s[bn%zu] med KS mu %.3f sigma %.3f; ", tag, l, med_mu, med_sigma);
  }
  return ok;
}

void criterion_fit_quality(Network& mlp, Network& lenet, const Corpus& corpus) {
  const double t0 = now_seconds();
  std::string detail;
  const bool mlp_ok = fit_quality(mlp, corpus, "mlp", detail);
  const bool lenet_ok = fit_quality(lenet, corpus, "lenet", detail);
  record(7, "statistics fit quality (KS)", mlp_ok && lenet_ok, detail + "limit 0.15",
         now_seconds() - t0);
}

}  // namespace

int main() {
  std::printf("== acceptance suite ==\n");
  Corpus corpus = load_corpus();
  std::printf("data: %s, ood: %s\n", corpus.source.c_str(), corpus.ood_source.c_str());
  std::fflush(stdout);

  criterion_moment_matching();
  criterion_numerics();

  std::printf("training the 784-256-10 MLP (20 epochs)...\n");
  TrainedModel mlp = train_model(corpus, false);
  std::printf("  bn-test error %.4f, sbn error %.4f, %.0fs\n", mlp.bn_test_error, mlp.sbn_error,
              mlp.train_seconds);

  criterion_plugin_degeneracy(mlp.net, corpus);
  criterion_ood_entropy(mlp.net, corpus);
  criterion_oracle_fidelity(mlp.net, corpus);
  criterion_bound_gap(mlp.net, corpus);

  std::printf("training LeNet-5 (30 epochs)...\n");
  TrainedModel lenet = train_model(corpus, true);
  std::printf("  bn-test error %.4f, sbn error %.4f, %.0fs\n", lenet.bn_test_error,
              lenet.sbn_error, lenet.train_seconds);

  criterion_accuracy(mlp, lenet);
  criterion_fit_quality(mlp.net, lenet.net, corpus);

  std::sort(g_results.begin(), g_results.end(),
            [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
  std::printf("\n== summary ==\n");
  bool all = true;
  for (const auto& c : g_results) {
    std::printf("[%s] criterion %d: %s — %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                c.detail.c_str());
    all = all && c.pass;
  }
  std::printf("%s\n", all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
