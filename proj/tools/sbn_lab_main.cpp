// sbn-lab: reproducible experiment driver.
//   train | fit-sbn | evaluate | collect-stats, all driven by one flat
//   key-value config file; flags override config keys. Exit codes: 0 success,
//   1 runtime failure, 2 invalid usage or config.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sbnlab/sbnlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sbnlab;

namespace {

struct CliOverrides {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  std::string mode = "bn-test";
  std::optional<size_t> k;
};

RunConfig load_config(const CliOverrides& o) {
  RunConfig cfg = RunConfig::parse_file(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
  if (o.k) cfg.eval_k = *o.k;
  return cfg;
}

Network build_net(const RunConfig& cfg) {
  if (cfg.arch == "mlp-bn") {
    return build_mlp_bn({784, cfg.mlp_hidden, 10}, cfg.seed);
  }
  return build_lenet5_bn(cfg.seed);
}

Network load_net(const RunConfig& cfg) {
  const std::string path = cfg.checkpoint_path();
  if (!fs::exists(path)) throw ConfigError("checkpoint does not exist: " + path);
  return load_checkpoint(path);
}

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

int cmd_train(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  cfg.train.seed = cfg.seed;
  cfg.validate(true);
  ensure_out_dir(cfg);
  const Dataset train_ds = load_idx_dir(cfg.data_dir, true, "train");
  const Dataset test_ds = load_idx_dir(cfg.data_dir, false, "test");
  Network net = build_net(cfg);

  std::ofstream metrics(cfg.out_dir + "/metrics.jsonl", std::ios::trunc);
  if (!metrics) throw FormatError("cannot open metrics log in " + cfg.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  train(net, train_ds, cfg.train, &test_ds, [&](const EpochMetrics& m) {
    json j{{"epoch", m.epoch},
           {"train_loss", m.train_loss},
           {"test_error", m.test_error ? json(*m.test_error) : json(nullptr)},
           {"lr", m.learning_rate}};
    metrics << j.dump() << "\n";
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("epoch %3zu  loss %.4f  test error %.4f  lr %.4g  (%.1fs)\n", m.epoch,
                m.train_loss, m.test_error.value_or(-1.0), m.learning_rate, secs);
    std::fflush(stdout);
  });
  save_checkpoint(net, cfg.checkpoint_path());
  std::printf("checkpoint written to %s\n", cfg.checkpoint_path().c_str());
  return 0;
}

int cmd_fit_sbn(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  cfg.validate(true);
  Network net = load_net(cfg);
  if (net.bn_count() == 0) throw ConfigError("checkpoint has no BatchNorm layers to fit");
  const Dataset train_ds = load_idx_dir(cfg.data_dir, true, "train");
  fit_sbn(net, train_ds, cfg.fit_batch_size(), cfg.sbn_batches, cfg.sbn_alpha, cfg.seed);
  save_checkpoint(net, cfg.checkpoint_path());
  std::printf("fitted SBN over %zu batches (alpha %.4g), checkpoint rewritten: %s\n",
              cfg.sbn_batches, cfg.sbn_alpha, cfg.checkpoint_path().c_str());
  return 0;
}

BatchPredictor make_predictor(Network& net, const std::string& mode, const RunConfig& cfg,
                              const Dataset* train_ds) {
  if (mode == "bn-test") {
    return [&net](const Tensor& xs) {
      net.set_mode(Mode::kBnTest);
      return softmax(net.forward(xs));
    };
  }
  if (mode == "sbn") {
    require_sbn_fitted(net);
    return [&net, &cfg](const Tensor& xs) {
      return sbn_predict(net, xs, cfg.eval_k, cfg.seed);
    };
  }
  if (mode == "oracle") {
    if (train_ds == nullptr) throw ConfigError("oracle mode needs the training data");
    return [&net, &cfg, train_ds](const Tensor& xs) {
      return mc_predict_oracle(net, xs, *train_ds, cfg.train.batch_size, cfg.eval_k, cfg.seed);
    };
  }
  throw ConfigError("unknown evaluate mode '" + mode + "'");
}

int cmd_evaluate(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  cfg.validate(true);
  ensure_out_dir(cfg);
  Network net = load_net(cfg);
  if ((o.mode == "sbn") && net.bn_count() > 0) {
    for (BatchNorm* bn : net.bn_layers()) {
      if (!bn->sbn().has_value()) {
        throw ConfigError("checkpoint has no SBN block; run fit-sbn before --mode sbn");
      }
    }
  }
  const Dataset train_ds = load_idx_dir(cfg.data_dir, true, "train");
  const Dataset test_ds = load_idx_dir(cfg.data_dir, false, "test");
  const Dataset ood = make_ood_set(parse_ood_kind(cfg.ood_kind), cfg.ood_dir, test_ds, cfg.seed);

  const BatchPredictor predict = make_predictor(net, o.mode, cfg, &train_ds);
  const ErrorNll scores = error_and_nll(predict, test_ds);

  EvalReport report;
  report.error_rate = scores.error;
  report.nll = scores.nll;
  const auto collect = [&](const Dataset& ds, std::vector<double>& out) {
    const size_t chunk = 512;
    for (size_t start = 0; start < ds.size(); start += chunk) {
      std::vector<size_t> idx;
      for (size_t i = start; i < std::min(ds.size(), start + chunk); ++i) idx.push_back(i);
      const auto ent = batch_entropies(predict(ds.subset(idx).images));
      out.insert(out.end(), ent.begin(), ent.end());
    }
  };
  collect(test_ds, report.entropy_in);
  collect(ood, report.entropy_ood);
  report.ecdf_in = ecdf(report.entropy_in);
  report.ecdf_ood = ecdf(report.entropy_ood);
  report.validate();

  write_ecdf_csv(cfg.out_dir + "/entropy_in_ecdf.csv", report.ecdf_in);
  write_ecdf_csv(cfg.out_dir + "/entropy_ood_ecdf.csv", report.ecdf_ood);
  write_kde_csv(cfg.out_dir + "/entropy_in_kde.csv", report.entropy_in);
  write_kde_csv(cfg.out_dir + "/entropy_ood_kde.csv", report.entropy_ood);

  json j{{"mode", o.mode},
         {"k", cfg.eval_k},
         {"seed", cfg.seed},
         {"error_rate", report.error_rate},
         {"nll", report.nll},
         {"ood_kind", cfg.ood_kind},
         {"mean_entropy_in", pairwise_mean(report.entropy_in)},
         {"mean_entropy_ood", pairwise_mean(report.entropy_ood)},
         {"entropy_in", report.entropy_in},
         {"entropy_ood", report.entropy_ood}};
  std::ofstream rj(cfg.out_dir + "/report.json", std::ios::trunc);
  rj << j.dump(2) << "\n";
  std::printf("mode %-8s error %.4f  nll %.4f  H(in) %.4f  H(ood) %.4f  -> %s\n", o.mode.c_str(),
              report.error_rate, report.nll, pairwise_mean(report.entropy_in),
              pairwise_mean(report.entropy_ood), cfg.out_dir.c_str());
  return 0;
}

int cmd_collect_stats(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  cfg.validate(true);
  ensure_out_dir(cfg);
  Network net = load_net(cfg);
  if (net.bn_count() == 0) throw ConfigError("checkpoint has no BatchNorm layers");
  for (BatchNorm* bn : net.bn_layers()) {
    if (!bn->sbn().has_value() || !bn->sbn()->initialized()) {
      throw ConfigError("checkpoint has no fitted SBN block; run fit-sbn first");
    }
  }
  const Dataset train_ds = load_idx_dir(cfg.data_dir, true, "train");
  const StatTrace trace =
      collect_statistics(net, train_ds, cfg.fit_batch_size(), cfg.stats_batches, cfg.seed);

  char line[160];
  for (size_t l = 0; l < trace.layers.size(); ++l) {
    std::ofstream out(cfg.out_dir + "/trace_bn" + std::to_string(l) + ".csv", std::ios::trunc);
    out << "batch,channel,mu,sigma\n";
    const auto& lt = trace.layers[l];
    for (size_t t = 0; t < trace.T; ++t)
      for (size_t c = 0; c < lt.channels; ++c) {
        std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g\n", t, c, lt.mu[c][t],
                      lt.sigma[c][t]);
        out << line;
      }
  }

  std::vector<const SbnApprox*> approx;
  for (BatchNorm* bn : net.bn_layers()) approx.push_back(&*bn->sbn());
  const auto scores = validate_fit(trace, approx, cfg.stats_samples, cfg.seed);
  std::ofstream ks(cfg.out_dir + "/ks.csv", std::ios::trunc);
  ks << "layer,channel,statistic,ks\n";
  for (size_t l = 0; l < scores.size(); ++l)
    for (size_t c = 0; c < scores[l].size(); ++c) {
      std::snprintf(line, sizeof line, "%zu,%zu,mu,%.17g\n", l, c, scores[l][c].ks_mu);
      ks << line;
      std::snprintf(line, sizeof line, "%zu,%zu,sigma,%.17g\n", l, c, scores[l][c].ks_sigma);
      ks << line;
    }
  std::printf("traced %zu batches over %zu BN layers -> %s\n", trace.T, trace.layers.size(),
              cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch-normalized networks with stochastic test-time normalization"};
  app.require_subcommand(1);

  CliOverrides o;
  const auto add_common = [&](CLI::App* sub, bool with_mode) {
    sub->add_option("--config", o.config_path, "flat key-value config file")->required();
    sub->add_option("--seed", o.seed, "override the global seed");
    sub->add_option("--out", o.out, "override the output directory");
    sub->add_option("--checkpoint", o.checkpoint, "override the checkpoint path");
    sub->add_option("--k", o.k, "override the MC sample count");
    if (with_mode) {
      sub->add_option("--mode", o.mode, "bn-test | sbn | oracle")
          ->check(CLI::IsMember({"bn-test", "sbn", "oracle"}));
    }
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a batch-normalized network");
  add_common(train_cmd, false);
  CLI::App* fit_cmd = app.add_subcommand("fit-sbn", "fit SBN onto a trained checkpoint");
  add_common(fit_cmd, false);
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "error/NLL and entropy ECDF report");
  add_common(eval_cmd, true);
  CLI::App* stats_cmd =
      app.add_subcommand("collect-stats", "trace batch statistics and score the SBN fit");
  add_common(stats_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(o);
    if (fit_cmd->parsed()) return cmd_fit_sbn(o);
    if (eval_cmd->parsed()) return cmd_evaluate(o);
    if (stats_cmd->parsed()) return cmd_collect_stats(o);
    std::fprintf(stderr, "error: no subcommand\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
