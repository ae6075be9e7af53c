#include "sdtnet/losses.hpp"

#include <cstdio>

namespace sdtnet {

namespace {

std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

torch::Tensor select_channels(const torch::Tensor& t, const std::vector<int64_t>& classes) {
  if (classes.empty()) return t;
  return t.index_select(1, torch::tensor(classes, torch::kLong));
}

}  // namespace

const char* LossReport::csv_header() {
  return "step,epoch,total,sup,unsup,adv_g,adv_d,tr,dice,ce,l1,kl,mi";
}

std::string LossReport::csv_row() const {
  std::string row = std::to_string(step) + "," + std::to_string(epoch);
  for (double v : {total, supervised, unsupervised, adversarial, adv_critic, transformer, dice, ce,
                   l1, kl, mi})
    row += "," + fmt_g17(v);
  return row;
}

double LossReport::recompose(const LossWeights& w, bool has_labelled) const {
  double total = w.lambda1 * unsupervised + w.lambda2 * adversarial + w.lambda3 * transformer;
  if (has_labelled) total += w.lambda0 * supervised;
  return total;
}

torch::Tensor dice_loss(const torch::Tensor& target, const torch::Tensor& pred,
                        const std::vector<int64_t>& classes, double eps) {
  TORCH_CHECK(target.sizes() == pred.sizes(), "dice_loss: shape mismatch ", target.sizes(), " vs ",
              pred.sizes());
  TORCH_CHECK(target.dim() == 4, "dice_loss expects B×C×H×W");
  const auto y = select_channels(target, classes);
  const auto p = select_channels(pred, classes);
  const auto dims = std::vector<int64_t>{0, 2, 3};
  const auto intersection = (y * p).sum(dims);
  const auto denom = y.sum(dims) + p.sum(dims);
  const auto dice = (2.0 * intersection + eps) / (denom + eps);
  return 1.0 - dice.mean();
}

torch::Tensor weighted_cross_entropy(const torch::Tensor& target, const torch::Tensor& pred) {
  TORCH_CHECK(target.sizes() == pred.sizes(), "weighted_cross_entropy: shape mismatch");
  TORCH_CHECK(target.dim() == 4, "weighted_cross_entropy expects B×C×H×W");
  const auto counts = target.sum({0, 2, 3});
  const auto present = counts > 0;
  auto w = torch::where(present, 1.0 / (counts + 1.0), torch::zeros_like(counts));
  const auto w_sum = w.sum();
  TORCH_CHECK(w_sum.item<double>() > 0, "weighted_cross_entropy: no class present in target");
  w = w / w_sum;

  const auto log_p = pred.clamp(1e-7, 1.0).log();
  const auto w_bc = w.view({1, -1, 1, 1});
  const auto num = -(w_bc * target * log_p).sum();
  const auto den = (w_bc * target).sum();
  return num / den;
}

SupervisedTerms supervised_loss(const torch::Tensor& target, const torch::Tensor& pred,
                                double ce_weight) {
  SupervisedTerms out;
  out.dice = dice_loss(target, pred, {1, 2, 3});
  out.ce = weighted_cross_entropy(target, pred);
  out.total = out.dice + ce_weight * out.ce;
  return out;
}

torch::Tensor kl_divergence(const torch::Tensor& mean, const torch::Tensor& log_variance) {
  TORCH_CHECK(mean.sizes() == log_variance.sizes(), "kl_divergence: shape mismatch");
  const auto per_sample =
      0.5 * (mean.pow(2) + log_variance.exp() - 1.0 - log_variance).sum(-1);
  return per_sample.mean();
}

UnsupervisedTerms unsupervised_loss(const torch::Tensor& x, const torch::Tensor& x_recon,
                                    const torch::Tensor& mean, const torch::Tensor& log_variance,
                                    const torch::Tensor& z, const torch::Tensor& z_hat,
                                    double lambda_kl) {
  TORCH_CHECK(x.sizes() == x_recon.sizes(), "unsupervised_loss: image shape mismatch");
  TORCH_CHECK(z.sizes() == z_hat.sizes(), "unsupervised_loss: code shape mismatch");
  UnsupervisedTerms out;
  out.l1 = (x_recon - x).abs().mean();
  out.kl = kl_divergence(mean, log_variance);
  out.mi_penalty = (z_hat - z).pow(2).sum(-1).mean();
  out.total = out.l1 + lambda_kl * out.kl + out.mi_penalty;
  return out;
}

LsganTerms lsgan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  LsganTerms out;
  out.critic = 0.5 * (d_real - 1.0).pow(2).mean() + 0.5 * d_fake.pow(2).mean();
  out.generator = 0.5 * (d_fake - 1.0).pow(2).mean();
  return out;
}

torch::Tensor transformer_loss(const torch::Tensor& soft_pred, const torch::Tensor& target) {
  TORCH_CHECK(soft_pred.sizes() == target.sizes(), "transformer_loss: shape mismatch");
  return dice_loss(target.detach(), soft_pred);
}

torch::Tensor total_loss(const torch::Tensor& supervised, const torch::Tensor& unsupervised,
                         const torch::Tensor& adversarial, const torch::Tensor& transformer,
                         const LossWeights& weights, bool has_labelled) {
  // composed in float64 so the logged sub-terms recompose exactly
  auto total = weights.lambda1 * unsupervised.to(torch::kDouble) +
               weights.lambda2 * adversarial.to(torch::kDouble) +
               weights.lambda3 * transformer.to(torch::kDouble);
  if (has_labelled) total = total + weights.lambda0 * supervised.to(torch::kDouble);
  return total;
}

}  // namespace sdtnet
