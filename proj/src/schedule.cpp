#include "sdtnet/schedule.hpp"

#include <cmath>

namespace sdtnet {

double triangular_lr(double epoch, double lr_max, double lr_min, double period_epochs) {
  TORCH_CHECK(epoch >= 0.0, "triangular_lr: epoch must be >= 0");
  TORCH_CHECK(lr_min < lr_max && period_epochs > 0, "triangular_lr: bad schedule parameters");
  const double e = std::fmod(epoch, period_epochs);
  const double half = period_epochs / 2.0;
  if (e <= half) return lr_max + (lr_min - lr_max) * (e / half);
  return lr_min + (lr_max - lr_min) * ((e - half) / half);
}

void ema_update(std::vector<torch::Tensor>& shadow, const std::vector<torch::Tensor>& params,
                double decay) {
  TORCH_CHECK(shadow.size() == params.size(), "ema_update: parameter lists differ in length");
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < shadow.size(); ++i) {
    TORCH_CHECK(shadow[i].sizes() == params[i].sizes(), "ema_update: shape mismatch at index ", i);
    shadow[i].mul_(decay).add_(params[i], 1.0 - decay);
  }
}

void ema_update(torch::nn::Module& shadow, const torch::nn::Module& params, double decay) {
  auto sp = shadow.parameters();
  const auto pp = params.parameters();
  ema_update(sp, pp, decay);
}

}  // namespace sdtnet
