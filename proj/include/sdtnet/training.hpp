#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdtnet/checkpoint.hpp"
#include "sdtnet/config.hpp"
#include "sdtnet/data.hpp"
#include "sdtnet/losses.hpp"

namespace sdtnet {

struct LabelledBatch {
  torch::Tensor images;  // B×1×H×W
  torch::Tensor masks;   // B×4×H×W one-hot
};

struct UnlabelledBatch {
  torch::Tensor images;
};

struct PairBatch {
  torch::Tensor source, target;  // B×1×H×W each
  torch::Tensor t, dt;           // B
};

// One optimization step: critic update on (real, detached fake) masks, then a
// main update of the composed objective, then the EMA shadow update.
LossReport train_step(TrainingState& state, const std::optional<LabelledBatch>& labelled,
                      const std::optional<UnlabelledBatch>& unlabelled,
                      const std::optional<PairBatch>& pairs);

// Validation criterion: dice + 0.1·weighted-CE of h(f_A(x)) on the given
// labelled frames, computed with the passed (EMA) bundle.
double segmentation_loss(NetworkBundle& bundle, const torch::Tensor& images,
                         const torch::Tensor& masks, double ce_weight = 0.1);

struct TrainResult {
  std::string run_dir;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string log_path;
  double best_val_loss = 0.0;
  int64_t epochs_run = 0;
  bool early_stopped = false;
  bool collapse_warning = false;
};

// Full training: splits, streams, epoch loop, per-epoch EMA validation, early
// stopping, checkpointing, CSV logging. Input volumes are normalized here.
TrainResult train(const std::vector<CineSequence>& dataset, TrainingConfig cfg);
TrainResult train_from_root(TrainingConfig cfg);

}  // namespace sdtnet
