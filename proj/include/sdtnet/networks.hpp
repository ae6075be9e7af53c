#pragma once

#include <torch/torch.h>

#include <utility>
#include <vector>

namespace sdtnet {

// Channel-softmax argmax one-hot with identity backward (straight-through).
torch::Tensor straight_through_onehot(const torch::Tensor& probs, int64_t dim = 1);
// mean + exp(0.5·log_variance)·ε with ε ~ N(0, I)
torch::Tensor reparameterize(const torch::Tensor& mean, const torch::Tensor& log_variance);
// Plain one-hot of the argmax, no gradient path.
torch::Tensor hard_onehot(const torch::Tensor& probs, int64_t dim = 1);

struct NetworkConfig {
  int64_t image_height = 256;
  int64_t image_width = 256;
  int64_t anatomy_channels = 8;  // C_a
  int64_t z_dim = 8;             // n_z
  std::vector<int64_t> anatomy_filters = {16, 32, 64};       // last entry = bottleneck
  std::vector<int64_t> transformer_filters = {16, 24, 32, 48};  // 4 encoder stages
  std::vector<int64_t> decoder_filters = {32, 32, 16};
  std::vector<int64_t> segmentor_filters = {16, 16};
  std::vector<int64_t> discriminator_filters = {16, 32, 64};
  std::vector<int64_t> modality_filters = {16, 32, 64};

  void validate() const;
};

// conv3x3 + instance norm + relu, twice
struct ConvBlockImpl : torch::nn::Module {
  ConvBlockImpl(int64_t in_ch, int64_t out_ch);
  torch::Tensor forward(torch::Tensor x);
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ConvBlock);

struct UNetImpl : torch::nn::Module {
  // filters.back() is the bottleneck width; earlier entries are encoder stages
  UNetImpl(int64_t in_ch, int64_t out_ch, const std::vector<int64_t>& filters);
  torch::Tensor forward(torch::Tensor x);  // logits

  std::vector<ConvBlock> enc, dec;
  std::vector<torch::nn::Conv2d> ups;
  ConvBlock bottleneck{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNet);

// f_A: UNet over the image, channel softmax, straight-through binarization.
struct AnatomyEncoderImpl : torch::nn::Module {
  explicit AnatomyEncoderImpl(const NetworkConfig& cfg);
  torch::Tensor forward(torch::Tensor x);                       // hard one-hot, ST grads
  std::pair<torch::Tensor, torch::Tensor> forward_soft(torch::Tensor x);  // {hard, soft}
  UNet unet{nullptr};
};
TORCH_MODULE(AnatomyEncoder);

// f_M: posterior over the modality code given (x, s).
struct ModalityEncoderImpl : torch::nn::Module {
  struct Output {
    torch::Tensor mean, log_variance, sample;
  };
  explicit ModalityEncoderImpl(const NetworkConfig& cfg);
  Output forward(torch::Tensor x, torch::Tensor s);
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Linear fc{nullptr}, head_mean{nullptr}, head_logvar{nullptr};
};
TORCH_MODULE(ModalityEncoder);

// g: decodes anatomy modulated by per-channel affine conditioning from z.
struct DecoderImpl : torch::nn::Module {
  explicit DecoderImpl(const NetworkConfig& cfg);
  torch::Tensor forward(torch::Tensor s, torch::Tensor z);
  std::vector<torch::nn::Conv2d> convs;
  std::vector<torch::nn::InstanceNorm2d> norms;
  std::vector<torch::nn::Linear> films;  // z -> (scale, shift) per block
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Decoder);

// h: small conv net, per-pixel 4-class softmax.
struct SegmentorImpl : torch::nn::Module {
  explicit SegmentorImpl(const NetworkConfig& cfg);
  torch::Tensor forward(torch::Tensor s);  // soft mask
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Segmentor);

// T: UNet over the anatomy with the (t, dt) code injected at the bottleneck.
// Fixed by design: 4 down/upsampling stages, 64 bottleneck channels, a
// 128-128-(H/16·W/16·16) MLP reshaped to 16 channels, sigmoid bounds on both,
// a long input→output residual, then re-binarization.
struct TemporalTransformerImpl : torch::nn::Module {
  static constexpr int64_t kStages = 4;
  static constexpr int64_t kBottleneckChannels = 64;
  static constexpr int64_t kTimeChannels = 16;

  struct Output {
    torch::Tensor hard, soft;
  };
  struct Shapes {
    std::vector<int64_t> bottleneck, time_features, merged;
  };

  explicit TemporalTransformerImpl(const NetworkConfig& cfg);
  Output forward(torch::Tensor s, torch::Tensor t, torch::Tensor dt);
  std::vector<int64_t> mlp_widths() const;
  const Shapes& last_shapes() const { return shapes_; }

  std::vector<ConvBlock> enc, dec;
  std::vector<torch::nn::Conv2d> ups;
  ConvBlock bottleneck{nullptr};
  ConvBlock merge{nullptr};
  torch::nn::Linear mlp1{nullptr}, mlp2{nullptr}, mlp3{nullptr};
  torch::nn::Conv2d head{nullptr};
  int64_t bottleneck_h_, bottleneck_w_;
  Shapes shapes_;
};
TORCH_MODULE(TemporalTransformer);

// D: least-squares critic over the three foreground mask channels.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const NetworkConfig& cfg);
  torch::Tensor forward(torch::Tensor y_foreground);  // B×1, linear output
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Discriminator);

// InfoGAN-style auxiliary network predicting the modality code from x̃.
struct MiEstimatorImpl : torch::nn::Module {
  explicit MiEstimatorImpl(const NetworkConfig& cfg);
  torch::Tensor forward(torch::Tensor x_recon);  // B×n_z
  torch::nn::Sequential trunk{nullptr};
  torch::nn::Linear fc{nullptr}, head{nullptr};
};
TORCH_MODULE(MiEstimator);

// All seven parameterized functions, wired shape-compatibly.
struct NetworkBundleImpl : torch::nn::Module {
  explicit NetworkBundleImpl(NetworkConfig cfg);

  torch::Tensor anatomy_encode(torch::Tensor x);
  ModalityEncoderImpl::Output modality_encode(torch::Tensor x, torch::Tensor s);
  torch::Tensor decode(torch::Tensor s, torch::Tensor z);
  torch::Tensor segment(torch::Tensor s);
  TemporalTransformerImpl::Output transform(torch::Tensor s, torch::Tensor t, torch::Tensor dt);
  TemporalTransformerImpl::Output transform(torch::Tensor s, double t, double dt);
  torch::Tensor discriminate(torch::Tensor y_foreground);
  torch::Tensor estimate_mi_code(torch::Tensor x_recon);

  std::vector<torch::Tensor> generator_parameters();      // everything but the critic
  std::vector<torch::Tensor> discriminator_parameters();

  NetworkConfig config;
  AnatomyEncoder anatomy{nullptr};
  ModalityEncoder modality{nullptr};
  Decoder decoder{nullptr};
  Segmentor segmentor{nullptr};
  TemporalTransformer transformer{nullptr};
  Discriminator discriminator{nullptr};
  MiEstimator mi{nullptr};
};
TORCH_MODULE(NetworkBundle);

// Drops the background channel of a 4-class mask.
torch::Tensor foreground(const torch::Tensor& mask);

// Int label map (B×H×W or H×W) -> one-hot B×C×H×W float tensor.
torch::Tensor onehot_from_labels(const torch::Tensor& labels, int64_t num_classes = 4);

void validate_image_batch(const torch::Tensor& x);

}  // namespace sdtnet
