#pragma once

#include <torch/torch.h>

#include <vector>

namespace sdtnet {

// Triangular wave: lr_max at epoch 0, lr_min at period/2, back to lr_max at
// the period; piecewise linear in between, periodic thereafter.
double triangular_lr(double epoch, double lr_max, double lr_min, double period_epochs);

// shadow' = decay·shadow + (1−decay)·params
void ema_update(std::vector<torch::Tensor>& shadow, const std::vector<torch::Tensor>& params,
                double decay);
void ema_update(torch::nn::Module& shadow, const torch::nn::Module& params, double decay);

}  // namespace sdtnet
