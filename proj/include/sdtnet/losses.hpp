#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace sdtnet {

struct LossWeights {
  double lambda0 = 10.0;  // supervised
  double lambda1 = 1.0;   // unsupervised
  double lambda2 = 10.0;  // adversarial (generator side)
  double lambda3 = 1.0;   // transformer
  double lambda_kl = 0.1;
  double ce_weight = 0.1;
};

// Per-step scalar record; `total` must recompose from the four weighted terms.
struct LossReport {
  int64_t step = 0;
  int64_t epoch = 0;
  double total = 0.0;
  double supervised = 0.0;
  double unsupervised = 0.0;
  double adversarial = 0.0;  // generator side
  double adv_critic = 0.0;   // discriminator side, logged but outside Eq. total
  double transformer = 0.0;
  double dice = 0.0;
  double ce = 0.0;
  double l1 = 0.0;
  double kl = 0.0;
  double mi = 0.0;  // squared-error penalty ||z_hat - z||^2
  bool collapse_warning = false;

  static const char* csv_header();  // step,epoch,total,sup,unsup,adv_g,adv_d,tr,dice,ce,l1,kl,mi
  std::string csv_row() const;
  double recompose(const LossWeights& w, bool has_labelled) const;
};

// 1 - mean over `classes` of (2 Σ y·p + eps) / (Σ y + Σ p + eps); sums run over
// batch and pixels. Empty `classes` means all channels.
torch::Tensor dice_loss(const torch::Tensor& target, const torch::Tensor& pred,
                        const std::vector<int64_t>& classes = {}, double eps = 1e-6);

// Class weights 1/(pixel count + 1), normalized over classes present in the
// target; prediction clipped to [1e-7, 1].
torch::Tensor weighted_cross_entropy(const torch::Tensor& target, const torch::Tensor& pred);

struct SupervisedTerms {
  torch::Tensor total, dice, ce;
};
SupervisedTerms supervised_loss(const torch::Tensor& target, const torch::Tensor& pred,
                                double ce_weight = 0.1);

// 0.5 · mean over batch of Σ_i (μ_i² + exp(lv_i) − 1 − lv_i)
torch::Tensor kl_divergence(const torch::Tensor& mean, const torch::Tensor& log_variance);

struct UnsupervisedTerms {
  torch::Tensor total, l1, kl, mi_penalty;
};
// MAE + λ_KL·KL + mean‖ẑ−z‖² (the MI surrogate enters with its sign folded in)
UnsupervisedTerms unsupervised_loss(const torch::Tensor& x, const torch::Tensor& x_recon,
                                    const torch::Tensor& mean, const torch::Tensor& log_variance,
                                    const torch::Tensor& z, const torch::Tensor& z_hat,
                                    double lambda_kl = 0.1);

struct LsganTerms {
  torch::Tensor critic, generator;
};
LsganTerms lsgan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake);

// Dice over every anatomy channel between the soft pre-binarization prediction
// and a stop-gradient target.
torch::Tensor transformer_loss(const torch::Tensor& soft_pred, const torch::Tensor& target);

// λ0·L_S + λ1·L_US + λ2·L_ADV + λ3·L_TR; the supervised term drops out for
// unlabelled batches.
torch::Tensor total_loss(const torch::Tensor& supervised, const torch::Tensor& unsupervised,
                         const torch::Tensor& adversarial, const torch::Tensor& transformer,
                         const LossWeights& weights, bool has_labelled);

}  // namespace sdtnet
