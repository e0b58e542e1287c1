#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "sbnlab/errors.hpp"
#include "sbnlab/train.hpp"

namespace sbnlab {

// Flat key-value run configuration. One committable file drives a whole
// experiment; command-line flags override individual keys.
struct RunConfig {
  std::string data_dir;                 // data.dir — IDX directory, MNIST-style names
  std::string arch = "mlp-bn";          // arch — mlp-bn | lenet5-bn
  size_t mlp_hidden = 256;              // mlp.hidden

  TrainConfig train;                    // train.epochs/.batch_size/.lr/.momentum
                                        // train.lr_decay_factor/.lr_decay_every

  double sbn_alpha = 0.01;              // sbn.alpha
  size_t sbn_batches = 2000;            // sbn.batches
  size_t sbn_batch_size = 0;            // sbn.batch_size, 0 = train.batch_size

  size_t eval_k = 32;                   // eval.k
  std::string ood_kind = "pixel-shuffle";  // eval.ood
  std::string ood_dir;                  // eval.ood_dir (notmnist-idx only)

  size_t stats_batches = 2000;          // stats.batches (collect-stats T)
  size_t stats_samples = 2000;          // stats.samples_per_channel

  std::string out_dir = "runs/out";     // out
  std::string checkpoint;               // checkpoint, default <out>/model.ckpt
  uint64_t seed = 1;                    // seed

  size_t fit_batch_size() const { return sbn_batch_size ? sbn_batch_size : train.batch_size; }

  std::string checkpoint_path() const {
    return checkpoint.empty() ? out_dir + "/model.ckpt" : checkpoint;
  }

  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "data.dir") data_dir = value;
      else if (key == "arch") arch = value;
      else if (key == "mlp.hidden") mlp_hidden = std::stoul(value);
      else if (key == "train.epochs") train.epochs = std::stoul(value);
      else if (key == "train.batch_size") train.batch_size = std::stoul(value);
      else if (key == "train.lr") train.learning_rate = std::stod(value);
      else if (key == "train.momentum") train.momentum_sgd = std::stod(value);
      else if (key == "train.lr_decay_factor") train.lr_schedule.factor = std::stod(value);
      else if (key == "train.lr_decay_every") {
        train.lr_schedule.every_n_epochs = std::stoul(value);
        train.lr_schedule.kind = train.lr_schedule.every_n_epochs
                                     ? LrSchedule::Kind::kStepDecay
                                     : LrSchedule::Kind::kNone;
      } else if (key == "sbn.alpha") sbn_alpha = std::stod(value);
      else if (key == "sbn.batches") sbn_batches = std::stoul(value);
      else if (key == "sbn.batch_size") sbn_batch_size = std::stoul(value);
      else if (key == "eval.k") eval_k = std::stoul(value);
      else if (key == "eval.ood") ood_kind = value;
      else if (key == "eval.ood_dir") ood_dir = value;
      else if (key == "stats.batches") stats_batches = std::stoul(value);
      else if (key == "stats.samples_per_channel") stats_samples = std::stoul(value);
      else if (key == "out") out_dir = value;
      else if (key == "checkpoint") checkpoint = value;
      else if (key == "seed") seed = std::stoull(value);
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config key '" + key + "' has a malformed value '" + value + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("config key '" + key + "' has an out-of-range value '" + value + "'");
    }
  }

  static RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        value = value.substr(1, value.size() - 2);
      }
      cfg.set(key, value);
    }
    return cfg;
  }

  // Checks ranges and referenced paths. `need_data` distinguishes commands
  // that read datasets from ones that only consume a checkpoint.
  void validate(bool need_data) const {
    if (arch != "mlp-bn" && arch != "lenet5-bn") {
      throw ConfigError("arch must be mlp-bn or lenet5-bn, got '" + arch + "'");
    }
    if (eval_k < 1) throw ConfigError("eval.k must be >= 1");
    if (!(sbn_alpha > 0.0 && sbn_alpha <= 1.0)) throw ConfigError("sbn.alpha must lie in (0,1]");
    if (sbn_batches < 1) throw ConfigError("sbn.batches must be >= 1");
    train.validate();
    if (need_data) {
      if (data_dir.empty()) throw ConfigError("data.dir is required");
      if (!std::filesystem::exists(data_dir)) {
        throw ConfigError("data.dir path does not exist: " + data_dir);
      }
    }
    if (ood_kind == "notmnist-idx" && !ood_dir.empty() && !std::filesystem::exists(ood_dir)) {
      throw ConfigError("eval.ood_dir path does not exist: " + ood_dir);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
};

}  // namespace sbnlab
