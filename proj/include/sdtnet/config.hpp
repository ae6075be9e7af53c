#pragma once

#include <string>
#include <vector>

#include "sdtnet/data.hpp"
#include "sdtnet/losses.hpp"
#include "sdtnet/networks.hpp"

namespace sdtnet {

struct TrainingConfig {
  std::string data_root;
  int64_t val_subjects = 15;
  int64_t test_subjects = 15;

  double labels_fraction = 1.0;
  int64_t batch_size = 8;
  int64_t max_epochs = 100;
  int64_t steps_per_epoch = 0;  // 0 = derive from the stream sizes
  double lr_max = 1e-4;
  double lr_min = 1e-5;
  int64_t lr_period_epochs = 20;
  double ema_decay = 0.999;
  int64_t patience_evals = 20;
  uint64_t seed = 0;
  bool deterministic = false;  // single-threaded torch for bit-reproducibility
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  LossWeights weights;

  int64_t image_size = 0;  // 0 = infer from the dataset
  NetworkConfig net;

  bool augment = true;
  AugmentRanges aug;

  std::string run_id;          // empty = derived from seed
  std::string runs_dir = "runs";

  void validate() const;
};

// key = value per line, '#' comments; dotted keys as listed by config_help().
TrainingConfig parse_config_file(const std::string& path);
// last writer wins; unknown keys are rejected
void apply_override(TrainingConfig& cfg, const std::string& key, const std::string& value);
void apply_overrides(TrainingConfig& cfg, const std::vector<std::string>& key_value_pairs);

// one "key  default  description" line per config key
std::string config_help();
// serialize every key of `cfg` in config-file syntax
std::string config_to_text(const TrainingConfig& cfg);

}  // namespace sdtnet
