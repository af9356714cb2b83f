#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netbooster/expansion.hpp"
#include "netbooster/trainer.hpp"

namespace netbooster {

// JSON run configuration. Unknown keys are rejected by name and line so a
// typo never silently falls back to a default. README.md lists every key.

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "idx"
  std::string train_images, train_labels, test_images, test_labels;
  std::int64_t train_samples = 512;
  std::int64_t test_samples = 1024;
  std::int64_t height = 12, width = 12;
  bool normalize = true;
};

struct SweepConfig {
  std::vector<std::int64_t> ratios = {2, 4, 6, 8};
  std::vector<double> fractions = {0.5};
  std::vector<std::string> locations = {"uniform"};
  std::int64_t epochs = 2;      // expanded-training budget per cell
  std::int64_t plt_epochs = 2;  // linearization budget per cell
};

struct RunConfig {
  std::string dtype = "f32";  // "f32" or "f64"
  std::string model = "desk-tnn";  // or "mlp"
  std::string model_file;     // when set, commands load this instead of building
  std::int64_t classes = 4;
  std::int64_t mlp_hidden = 32;
  DataConfig data;
  TrainConfig train;
  ExpansionPlan plan;
  std::int64_t plt_decay_epochs = 0;     // 0 derives from plt_tuning_epochs
  std::int64_t plt_finetune_epochs = 10;
  std::int64_t plt_tuning_epochs = 0;    // when set, splits by the one-fifth rule
  bool baseline = true;
  std::int64_t eval_batch = 256;
  SweepConfig sweep;
};

/// Parses and validates a config file. Throws Error on unknown keys (with
/// the key name and its line), bad values, or malformed JSON.
RunConfig load_config(const std::string& path);

}  // namespace netbooster
