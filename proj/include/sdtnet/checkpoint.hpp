#pragma once

#include <limits>
#include <map>
#include <memory>
#include <string>

#include "sdtnet/config.hpp"
#include "sdtnet/data.hpp"
#include "sdtnet/networks.hpp"

namespace sdtnet {

struct TrainingState {
  NetworkBundle raw{nullptr};
  NetworkBundle ema{nullptr};  // shadow copy, used for validation and testing
  std::shared_ptr<torch::optim::Adam> opt_main;
  std::shared_ptr<torch::optim::Adam> opt_critic;
  int64_t epoch = 0;
  int64_t step = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int64_t evals_since_improvement = 0;
  int64_t collapse_streak = 0;
  TrainingConfig config;
  DatasetSplit split;
};

TrainingState make_training_state(const TrainingConfig& cfg, const DatasetSplit& split);

// Checkpoint layout: <dir>/manifest.json plus weights.pt, ema.pt,
// optim_main.pt, optim_critic.pt, state.json.
void save_checkpoint(const TrainingState& state, const std::string& dir, bool ema_designated);
TrainingState load_checkpoint(const std::string& dir);

// Loads named parameters from <path> into an existing module; shape or naming
// mismatches raise CheckpointError.
void load_parameters_into(torch::nn::Module& module, const std::string& path);

struct ManifestInfo {
  TrainingConfig config;
  DatasetSplit split;
  bool ema_weights = false;  // the designated evaluation tensors are the EMA set
  int64_t image_height = 0;
  int64_t image_width = 0;
};
ManifestInfo read_manifest(const std::string& dir);

// Rebuilds the bundle from the manifest and loads the designated evaluation
// weights (the EMA set when the manifest flags it).
NetworkBundle load_eval_bundle(const std::string& dir);

}  // namespace sdtnet
