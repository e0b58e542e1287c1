#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "sbnlab/checkpoint.hpp"
#include "sbnlab/sbn.hpp"
#include "sbnlab/stats.hpp"
#include "sbnlab/train.hpp"
#include "support/helpers.hpp"

using namespace sbnlab;

namespace {

Network trained_toy_mlp(uint64_t seed = 1) {
  Network net = build_mlp_bn({2, 8, 2}, seed);
  const Dataset data = testsupport::toy_blobs(256, 11);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05;
  cfg.epochs = 30;
  cfg.seed = seed;
  train(net, data, cfg);
  return net;
}

}  // namespace

TEST_CASE("sbn_update moment arithmetic") {
  SECTION("first observation seeds the statistics") {
    SbnApprox a(1, 0.5);
    REQUIRE_FALSE(a.initialized());
    const double mu = 2.0, sigma = 1.0;
    a.update({&mu, 1}, {&sigma, 1});
    REQUIRE(a.initialized());
    REQUIRE(a.t1_mu()[0] == 2.0);
    REQUIRE(a.t2_mu()[0] == 4.0);
    REQUIRE(a.s2_mu(0) == 0.0);
  }
  SECTION("hand smoothing arithmetic") {
    SbnApprox a(1, 0.5);
    double mu = 2.0, sigma = 1.0;
    a.update({&mu, 1}, {&sigma, 1});
    mu = 4.0;
    a.update({&mu, 1}, {&sigma, 1});
    REQUIRE(a.t1_mu()[0] == Catch::Approx(3.0));
    REQUIRE(a.t2_mu()[0] == Catch::Approx(10.0));
    REQUIRE(a.s2_mu(0) == Catch::Approx(1.0));
  }
  SECTION("log-moment hand arithmetic") {
    SbnApprox a(1, 0.5);
    double mu = 0.0, sigma = 1.0;
    a.update({&mu, 1}, {&sigma, 1});
    sigma = std::exp(2.0);
    a.update({&mu, 1}, {&sigma, 1});
    REQUIRE(a.m_sigma(0) == Catch::Approx(1.0));
    REQUIRE(a.s2_sigma(0) == Catch::Approx(1.0));
  }
  SECTION("non-positive sigma observation") {
    SbnApprox a(1, 0.5);
    const double mu = 0.0, zero = 0.0, neg = -1.0;
    REQUIRE_THROWS_AS(a.update({&mu, 1}, {&zero, 1}), DomainError);
    REQUIRE_THROWS_AS(a.update({&mu, 1}, {&neg, 1}), DomainError);
  }
  SECTION("alpha bounds") {
    REQUIRE_THROWS_AS(SbnApprox(1, 0.0), DomainError);
    REQUIRE_THROWS_AS(SbnApprox(1, 1.5), DomainError);
  }
}

TEST_CASE("sbn_sample degenerate and stochastic behaviour") {
  SECTION("zero variance reproduces the mean exactly") {
    SbnApprox a(1, 1.0);
    const double mu = 0.37, sigma = 2.25;
    a.update({&mu, 1}, {&sigma, 1});
    Rng rng(5);
    const SbnSample s = sbn_sample(a, rng);
    REQUIRE(s.mu[0] == 0.37);
    REQUIRE(s.sigma[0] == 2.25);  // exp(log(sigma)) with zero spread
  }
  SECTION("unit log-normal degenerates to exactly 1") {
    SbnApprox a(1, 1.0);
    const double mu = 0.0, sigma = 1.0;  // log sigma = 0
    a.update({&mu, 1}, {&sigma, 1});
    Rng rng(6);
    REQUIRE(sbn_sample(a, rng).sigma[0] == 1.0);
  }
  SECTION("sample moments of a fitted unit Gaussian") {
    SbnApprox a(1, 1.0);
    a.t1_mu() = {0.0};
    a.t2_mu() = {1.0};  // m=0, s2=1
    a.t1_logsig() = {0.0};
    a.t2_logsig() = {0.0};
    a.set_initialized(true);
    Rng rng(7);
    std::vector<double> draws(10000);
    for (auto& d : draws) d = sbn_sample(a, rng).mu[0];
    REQUIRE(std::abs(mean(draws)) <= 0.05);
    const double var = variance_population(draws);
    REQUIRE(var >= 0.9);
    REQUIRE(var <= 1.1);
  }
  SECTION("uninitialized approximation") {
    SbnApprox a(1, 0.5);
    Rng rng(8);
    REQUIRE_THROWS_AS(sbn_sample(a, rng), NotFittedError);
  }
}

// Feeding i.i.d. LogNormal(m*, s*^2) draws recovers the stream's own sample
// moments through the smoothed sufficient statistics.
TEST_CASE("moment matching against a brute-force oracle") {
  const double m_star = 0.3, s_star = 0.2;
  const size_t n = 20000;
  Rng rng(20248);
  SbnApprox a(1, 0.001);
  std::vector<double> logs(n);
  for (size_t i = 0; i < n; ++i) {
    const double ls = m_star + s_star * rng.gaussian();
    logs[i] = ls;
    const double mu = 0.0;
    const double sigma = std::exp(ls);
    a.update({&mu, 1}, {&sigma, 1});
  }
  const double direct_m = mean(logs);
  const double direct_s2 = variance_population(logs);
  REQUIRE(std::abs(a.m_sigma(0) - direct_m) / std::abs(direct_m) <= 0.02);
  REQUIRE(std::abs(a.s2_sigma(0) - direct_s2) / direct_s2 <= 0.02);
}

TEST_CASE("fit_sbn") {
  SECTION("degenerate stream collapses the approximation") {
    Network net = build_mlp_bn({4, 4, 2}, 3);
    const Dataset data = testsupport::constant_dataset(32, {1, 1, 4}, 0.5);
    net.set_mode(Mode::kTrain);
    net.forward(data.images);  // initialize running statistics
    fit_sbn(net, data, 8, 50, 0.1, 7);
    const SbnApprox& a = *net.bn_layers()[0]->sbn();
    for (size_t c = 0; c < a.channels(); ++c) {
      REQUIRE(a.s2_mu(c) <= 1e-12);
      REQUIRE(a.s2_sigma(c) <= 1e-12);
      REQUIRE(a.m_mu(c) == Catch::Approx(net.bn_layers()[0]->batch_mu()[c]).margin(1e-9));
    }
  }
  SECTION("weights and running statistics are untouched") {
    Network net = trained_toy_mlp(21);
    const Dataset data = testsupport::toy_blobs(128, 4);
    std::vector<std::vector<double>> before;
    for (Tensor* p : net.params()) before.push_back(p->values());
    const auto rm = net.bn_layers()[0]->running_mean();
    fit_sbn(net, data, 16, 40, 0.05, 9);
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) {
      REQUIRE(std::memcmp(params[i]->data(), before[i].data(),
                          before[i].size() * sizeof(double)) == 0);
    }
    REQUIRE(net.bn_layers()[0]->running_mean() == rm);
  }
  SECTION("deterministic given the seed") {
    Network a = trained_toy_mlp(22);
    Network b = trained_toy_mlp(22);
    const Dataset data = testsupport::toy_blobs(128, 5);
    fit_sbn(a, data, 16, 60, 0.05, 13);
    fit_sbn(b, data, 16, 60, 0.05, 13);
    const SbnApprox& sa = *a.bn_layers()[0]->sbn();
    const SbnApprox& sb = *b.bn_layers()[0]->sbn();
    REQUIRE(std::memcmp(sa.t1_mu().data(), sb.t1_mu().data(),
                        sa.channels() * sizeof(double)) == 0);
    REQUIRE(std::memcmp(sa.t2_logsig().data(), sb.t2_logsig().data(),
                        sa.channels() * sizeof(double)) == 0);
  }
  SECTION("fitted mean tracks the running mean") {
    Network net = trained_toy_mlp(23);
    const Dataset data = testsupport::toy_blobs(512, 6);
    const size_t batches = 400;
    fit_sbn(net, data, 32, batches, 0.05, 17);
    const BatchNorm* bn = net.bn_layers()[0];
    const SbnApprox& a = *bn->sbn();
    for (size_t c = 0; c < a.channels(); ++c) {
      // both estimate E[mu(B)]: the fit averages `batches` draws, the running
      // mean is an exponential average with effective weight m/(2-m)
      const double sd = std::sqrt(a.s2_mu(c));
      const double se_fit = sd / std::sqrt(static_cast<double>(batches));
      const double se_run = sd * std::sqrt(bn->momentum() / (2.0 - bn->momentum()));
      const double tol = 3.0 * std::sqrt(se_fit * se_fit + se_run * se_run) + 1e-9;
      REQUIRE(std::abs(a.m_mu(c) - bn->running_mean()[c]) <= tol);
    }
  }
  SECTION("bad arguments") {
    Network net = trained_toy_mlp(24);
    const Dataset data = testsupport::toy_blobs(64, 7);
    REQUIRE_THROWS_AS(fit_sbn(net, data, 1, 10, 0.05, 1), DegenerateBatchError);
    Dataset empty;
    REQUIRE_THROWS_AS(fit_sbn(net, empty, 8, 10, 0.05, 1), DomainError);
  }
}

TEST_CASE("plug-in equivalence is bitwise") {
  Network net = trained_toy_mlp(31);
  const auto bns = net.bn_layers();
  std::vector<SbnSample> samples;
  for (BatchNorm* bn : bns) {
    SbnSample s;
    s.mu = bn->running_mean();
    s.sigma.resize(bn->channels());
    for (size_t c = 0; c < bn->channels(); ++c) {
      s.sigma[c] = std::sqrt(bn->running_var()[c] + bn->epsilon());
    }
    samples.push_back(std::move(s));
  }
  Rng rng(77);
  const Tensor x = testsupport::random_tensor({16, 1, 1, 2}, rng, -3, 3);
  const Tensor via_sample = sbn_forward(net, x, samples);
  net.set_mode(Mode::kBnTest);
  const Tensor via_test = net.forward(x);
  REQUIRE(std::memcmp(via_sample.data(), via_test.data(),
                      via_test.size() * sizeof(double)) == 0);
}

TEST_CASE("plug-in degeneracy of sbn_predict") {
  Network net = trained_toy_mlp(32);
  force_plugin_approx(net);
  Rng rng(78);
  const Tensor x = testsupport::random_tensor({64, 1, 1, 2}, rng, -3, 3);
  net.set_mode(Mode::kBnTest);
  const Tensor ref = softmax(net.forward(x));
  for (size_t k : {1, 7}) {
    const Tensor p = sbn_predict(net, x, k, 4242);
    double worst = 0.0;
    for (size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - ref[i]));
    REQUIRE(worst <= 1e-6);
  }
}

TEST_CASE("sbn_predict contract") {
  Network net = trained_toy_mlp(33);
  const Dataset data = testsupport::toy_blobs(256, 12);
  fit_sbn(net, data, 32, 200, 0.05, 3);
  Rng rng(79);
  const Tensor x = testsupport::random_tensor({8, 1, 1, 2}, rng, -3, 3);

  SECTION("rows stay on the simplex for any K") {
    for (size_t k : {1, 10, 100}) {
      const Tensor p = sbn_predict(net, x, k, 5);
      for (size_t i = 0; i < p.extent(0); ++i) {
        double sum = 0.0;
        for (size_t j = 0; j < p.extent(1); ++j) {
          REQUIRE(p(i, j) >= 0.0);
          sum += p(i, j);
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-10);
      }
    }
  }
  SECTION("deterministic given the seed") {
    const Tensor a = sbn_predict(net, x, 16, 99);
    const Tensor b = sbn_predict(net, x, 16, 99);
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
  SECTION("two disjoint seeds at K=1000 nearly agree") {
    const Tensor a = sbn_predict(net, x, 1000, 1001);
    const Tensor b = sbn_predict(net, x, 1000, 2002);
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    REQUIRE(worst <= 0.05);
  }
  SECTION("bad K and missing fit") {
    REQUIRE_THROWS_AS(sbn_predict(net, x, 0, 1), DomainError);
    Network unfitted = trained_toy_mlp(34);
    REQUIRE_THROWS_AS(sbn_predict(unfitted, x, 4, 1), NotFittedError);
  }
  SECTION("sample count mismatch") {
    std::vector<SbnSample> none;
    REQUIRE_THROWS_AS(sbn_forward(net, x, none), ShapeError);
  }
}

// Samples for different channels are independent: a 4x4 quantile-bin
// chi-squared test on 10,000 paired draws stays under the 0.01 critical value.
TEST_CASE("factorization independence") {
  SbnApprox a(2, 1.0);
  a.t1_mu() = {0.0, 1.0};
  a.t2_mu() = {1.0, 2.0};  // unit variances
  a.t1_logsig() = {0.0, 0.0};
  a.t2_logsig() = {0.04, 0.04};
  a.set_initialized(true);
  Rng rng(314);
  const size_t n = 10000;
  std::vector<double> u(n), v(n);
  for (size_t i = 0; i < n; ++i) {
    const SbnSample s = sbn_sample(a, rng);
    u[i] = s.mu[0];
    v[i] = s.mu[1];
  }
  const auto edges = [&](std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return std::array<double, 3>{xs[n / 4], xs[n / 2], xs[3 * n / 4]};
  };
  const auto ue = edges(u), ve = edges(v);
  const auto bin = [](const std::array<double, 3>& e, double x) {
    return size_t((x > e[0]) + (x > e[1]) + (x > e[2]));
  };
  double counts[4][4] = {};
  for (size_t i = 0; i < n; ++i) counts[bin(ue, u[i])][bin(ve, v[i])] += 1.0;
  double chi2 = 0.0;
  const double expected = n / 16.0;
  for (auto& row : counts)
    for (double cnt : row) chi2 += (cnt - expected) * (cnt - expected) / expected;
  REQUIRE(chi2 <= 21.666);  // chi-squared df=9 at significance 0.01
}
