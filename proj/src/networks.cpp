#include "sdtnet/networks.hpp"

#include <torch/csrc/autograd/custom_function.h>

#include "sdtnet/common.hpp"

namespace sdtnet {

namespace {

namespace F = torch::nn::functional;

struct BinarizeST : torch::autograd::Function<BinarizeST> {
  static torch::Tensor forward(torch::autograd::AutogradContext* /*ctx*/, torch::Tensor probs,
                               int64_t dim) {
    torch::NoGradGuard no_grad;
    return hard_onehot(probs, dim);
  }
  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* /*ctx*/,
                                               torch::autograd::tensor_list grads) {
    return {grads[0], torch::Tensor()};
  }
};

torch::Tensor pool2(const torch::Tensor& x) {
  return F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
}

torch::Tensor up2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

torch::Tensor hard_onehot(const torch::Tensor& probs, int64_t dim) {
  const auto idx = probs.argmax(dim, /*keepdim=*/true);
  return torch::zeros_like(probs).scatter_(dim, idx, 1.0);
}

torch::Tensor straight_through_onehot(const torch::Tensor& probs, int64_t dim) {
  return BinarizeST::apply(probs, dim);
}

torch::Tensor reparameterize(const torch::Tensor& mean, const torch::Tensor& log_variance) {
  return mean + (0.5 * log_variance).exp() * torch::randn_like(mean);
}

torch::Tensor foreground(const torch::Tensor& mask) {
  TORCH_CHECK(mask.dim() == 4 && mask.size(1) == 4, "foreground expects B×4×H×W");
  return mask.narrow(1, 1, 3);
}

torch::Tensor onehot_from_labels(const torch::Tensor& labels, int64_t num_classes) {
  auto l = labels.dim() == 2 ? labels.unsqueeze(0) : labels;
  TORCH_CHECK(l.dim() == 3, "onehot_from_labels expects B×H×W or H×W");
  return torch::one_hot(l.to(torch::kLong), num_classes).permute({0, 3, 1, 2}).to(torch::kFloat);
}

void validate_image_batch(const torch::Tensor& x) {
  TORCH_CHECK(x.dim() == 4 && x.size(1) == 1, "image batch must be B×1×H×W, got ", x.sizes());
  TORCH_CHECK(x.size(2) % 16 == 0 && x.size(3) % 16 == 0,
              "image H and W must be divisible by 16, got ", x.sizes());
  TORCH_CHECK(x.isfinite().all().item<bool>(), "image batch contains non-finite values");
}

void NetworkConfig::validate() const {
  if (image_height <= 0 || image_width <= 0 || image_height % 16 != 0 || image_width % 16 != 0)
    throw ConfigError("network config: image size must be positive and divisible by 16");
  if (anatomy_channels < 2) throw ConfigError("network config: anatomy_channels must be >= 2");
  if (z_dim < 1) throw ConfigError("network config: z_dim must be >= 1");
  if (anatomy_filters.size() < 2) throw ConfigError("network config: anatomy_filters too short");
  if (transformer_filters.size() != TemporalTransformerImpl::kStages)
    throw ConfigError("network config: transformer_filters must list exactly 4 stages");
  if (decoder_filters.empty() || segmentor_filters.empty() || discriminator_filters.empty() ||
      modality_filters.empty())
    throw ConfigError("network config: empty filter list");
}

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

ConvBlockImpl::ConvBlockImpl(int64_t in_ch, int64_t out_ch) {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
  norm1 = register_module("norm1",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch).affine(true)));
  norm2 = register_module("norm2",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch).affine(true)));
}

torch::Tensor ConvBlockImpl::forward(torch::Tensor x) {
  x = torch::relu(norm1(conv1(x)));
  return torch::relu(norm2(conv2(x)));
}

UNetImpl::UNetImpl(int64_t in_ch, int64_t out_ch, const std::vector<int64_t>& filters) {
  TORCH_CHECK(filters.size() >= 2, "UNet needs at least one encoder stage plus a bottleneck");
  const auto n_stages = static_cast<int64_t>(filters.size()) - 1;
  int64_t prev = in_ch;
  for (int64_t i = 0; i < n_stages; ++i) {
    enc.push_back(register_module("enc" + std::to_string(i), ConvBlock(prev, filters[i])));
    prev = filters[static_cast<size_t>(i)];
  }
  bottleneck = register_module("bottleneck", ConvBlock(prev, filters.back()));
  prev = filters.back();
  for (int64_t i = n_stages - 1; i >= 0; --i) {
    const auto f = filters[static_cast<size_t>(i)];
    ups.push_back(register_module(
        "up" + std::to_string(i), torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 3).padding(1))));
    dec.push_back(register_module("dec" + std::to_string(i), ConvBlock(2 * f, f)));
    prev = f;
  }
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, out_ch, 1)));
}

torch::Tensor UNetImpl::forward(torch::Tensor x) {
  std::vector<torch::Tensor> skips;
  for (auto& block : enc) {
    x = block(x);
    skips.push_back(x);
    x = pool2(x);
  }
  x = bottleneck(x);
  for (size_t i = 0; i < dec.size(); ++i) {
    x = ups[i](up2(x));
    x = torch::cat({x, skips[skips.size() - 1 - i]}, 1);
    x = dec[i](x);
  }
  return head(x);
}

// ---------------------------------------------------------------------------
// f_A
// ---------------------------------------------------------------------------

AnatomyEncoderImpl::AnatomyEncoderImpl(const NetworkConfig& cfg) {
  unet = register_module("unet", UNet(1, cfg.anatomy_channels, cfg.anatomy_filters));
}

std::pair<torch::Tensor, torch::Tensor> AnatomyEncoderImpl::forward_soft(torch::Tensor x) {
  validate_image_batch(x);
  const auto soft = torch::softmax(unet(x), 1);
  return {straight_through_onehot(soft, 1), soft};
}

torch::Tensor AnatomyEncoderImpl::forward(torch::Tensor x) { return forward_soft(x).first; }

// ---------------------------------------------------------------------------
// f_M
// ---------------------------------------------------------------------------

ModalityEncoderImpl::ModalityEncoderImpl(const NetworkConfig& cfg) {
  trunk = torch::nn::Sequential();
  int64_t prev = 1 + cfg.anatomy_channels;
  for (const auto f : cfg.modality_filters) {
    trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 3).stride(2).padding(1)));
    trunk->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    prev = f;
  }
  trunk->push_back(torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions({4, 4})));
  register_module("trunk", trunk);
  fc = register_module("fc", torch::nn::Linear(prev * 16, 128));
  head_mean = register_module("head_mean", torch::nn::Linear(128, cfg.z_dim));
  head_logvar = register_module("head_logvar", torch::nn::Linear(128, cfg.z_dim));
}

ModalityEncoderImpl::Output ModalityEncoderImpl::forward(torch::Tensor x, torch::Tensor s) {
  TORCH_CHECK(x.size(0) == s.size(0) && x.size(2) == s.size(2) && x.size(3) == s.size(3),
              "modality encoder: x and s not spatially aligned");
  auto h = trunk->forward(torch::cat({x, s}, 1)).flatten(1);
  h = torch::relu(fc(h));
  Output out;
  out.mean = head_mean(h);
  out.log_variance = head_logvar(h);
  out.sample = reparameterize(out.mean, out.log_variance);
  return out;
}

// ---------------------------------------------------------------------------
// g
// ---------------------------------------------------------------------------

DecoderImpl::DecoderImpl(const NetworkConfig& cfg) {
  int64_t prev = cfg.anatomy_channels;
  for (size_t i = 0; i < cfg.decoder_filters.size(); ++i) {
    const auto f = cfg.decoder_filters[i];
    convs.push_back(register_module(
        "conv" + std::to_string(i), torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 3).padding(1))));
    norms.push_back(
        register_module("norm" + std::to_string(i),
                        torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(f))));
    films.push_back(register_module("film" + std::to_string(i), torch::nn::Linear(cfg.z_dim, 2 * f)));
    prev = f;
  }
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, 1, 1)));
}

torch::Tensor DecoderImpl::forward(torch::Tensor s, torch::Tensor z) {
  TORCH_CHECK(s.size(0) == z.size(0), "decoder: batch mismatch between s and z");
  auto h = s;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = norms[i](convs[i](h));
    const auto film = films[i](z);
    const auto chunks = film.chunk(2, 1);
    const auto c = h.size(1);
    h = h * (1.0 + chunks[0].view({-1, c, 1, 1})) + chunks[1].view({-1, c, 1, 1});
    h = torch::relu(h);
  }
  return head(h);
}

// ---------------------------------------------------------------------------
// h
// ---------------------------------------------------------------------------

SegmentorImpl::SegmentorImpl(const NetworkConfig& cfg) {
  trunk = torch::nn::Sequential();
  int64_t prev = cfg.anatomy_channels;
  for (const auto f : cfg.segmentor_filters) {
    trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 3).padding(1)));
    trunk->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(f).affine(true)));
    trunk->push_back(torch::nn::ReLU());
    prev = f;
  }
  register_module("trunk", trunk);
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, 4, 1)));
}

torch::Tensor SegmentorImpl::forward(torch::Tensor s) {
  return torch::softmax(head(trunk->forward(s)), 1);
}

// ---------------------------------------------------------------------------
// T
// ---------------------------------------------------------------------------

TemporalTransformerImpl::TemporalTransformerImpl(const NetworkConfig& cfg) {
  cfg.validate();
  bottleneck_h_ = cfg.image_height / 16;
  bottleneck_w_ = cfg.image_width / 16;

  int64_t prev = cfg.anatomy_channels;
  for (int64_t i = 0; i < kStages; ++i) {
    const auto f = cfg.transformer_filters[static_cast<size_t>(i)];
    enc.push_back(register_module("enc" + std::to_string(i), ConvBlock(prev, f)));
    prev = f;
  }
  bottleneck = register_module("bottleneck", ConvBlock(prev, kBottleneckChannels));

  mlp1 = register_module("mlp1", torch::nn::Linear(2, 128));
  mlp2 = register_module("mlp2", torch::nn::Linear(128, 128));
  mlp3 = register_module("mlp3",
                         torch::nn::Linear(128, bottleneck_h_ * bottleneck_w_ * kTimeChannels));

  merge = register_module("merge", ConvBlock(kBottleneckChannels + kTimeChannels,
                                             kBottleneckChannels));
  prev = kBottleneckChannels;
  for (int64_t i = kStages - 1; i >= 0; --i) {
    const auto f = cfg.transformer_filters[static_cast<size_t>(i)];
    ups.push_back(register_module(
        "up" + std::to_string(i), torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 3).padding(1))));
    dec.push_back(register_module("dec" + std::to_string(i), ConvBlock(2 * f, f)));
    prev = f;
  }
  head = register_module("head",
                         torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, cfg.anatomy_channels, 1)));
}

std::vector<int64_t> TemporalTransformerImpl::mlp_widths() const {
  return {mlp1->options.out_features(), mlp2->options.out_features(), mlp3->options.out_features()};
}

TemporalTransformerImpl::Output TemporalTransformerImpl::forward(torch::Tensor s, torch::Tensor t,
                                                                 torch::Tensor dt) {
  TORCH_CHECK(s.dim() == 4, "transform expects B×C×H×W anatomy factors");
  TORCH_CHECK(s.size(2) == bottleneck_h_ * 16 && s.size(3) == bottleneck_w_ * 16,
              "transform: input resolution differs from the configured one");
  const auto batch = s.size(0);
  t = t.to(s.scalar_type()).flatten();
  dt = dt.to(s.scalar_type()).flatten();
  TORCH_CHECK(t.numel() == batch && dt.numel() == batch, "transform: t/dt must have one entry per item");
  TORCH_CHECK((t.min().item<double>() >= -1e-9) && (dt.min().item<double>() > 0),
              "transform: need t in [0,1] and dt in (0,1]");
  TORCH_CHECK((t + dt).max().item<double>() <= 1.0 + 1e-9, "transform: t + dt must not exceed 1");

  auto h = s;
  std::vector<torch::Tensor> skips;
  for (auto& block : enc) {
    h = block(h);
    skips.push_back(h);
    h = pool2(h);
  }
  auto bn = torch::sigmoid(bottleneck(h));

  auto code = torch::stack({t, dt}, 1);
  auto time = torch::relu(mlp1(code));
  time = torch::relu(mlp2(time));
  time = torch::sigmoid(mlp3(time)).view({batch, kTimeChannels, bottleneck_h_, bottleneck_w_});

  auto merged = torch::cat({bn, time}, 1);
  shapes_.bottleneck = bn.sizes().vec();
  shapes_.time_features = time.sizes().vec();
  shapes_.merged = merged.sizes().vec();

  h = merge(merged);
  for (size_t i = 0; i < dec.size(); ++i) {
    h = ups[i](up2(h));
    h = torch::cat({h, skips[skips.size() - 1 - i]}, 1);
    h = dec[i](h);
  }
  // differential changes: the UNet predicts a correction on top of the input
  const auto logits = head(h) + s;
  Output out;
  out.soft = torch::softmax(logits, 1);
  out.hard = straight_through_onehot(out.soft, 1);
  return out;
}

// ---------------------------------------------------------------------------
// D
// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const NetworkConfig& cfg) {
  trunk = torch::nn::Sequential();
  int64_t prev = 3;
  for (const auto f : cfg.discriminator_filters) {
    trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 4).stride(2).padding(1)));
    trunk->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    prev = f;
  }
  trunk->push_back(torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions({4, 4})));
  register_module("trunk", trunk);
  head = register_module("head", torch::nn::Linear(prev * 16, 1));
}

torch::Tensor DiscriminatorImpl::forward(torch::Tensor y_foreground) {
  TORCH_CHECK(y_foreground.dim() == 4 && y_foreground.size(1) == 3,
              "discriminator expects the three foreground channels");
  return head(trunk->forward(y_foreground).flatten(1));
}

// ---------------------------------------------------------------------------
// MI estimator
// ---------------------------------------------------------------------------

MiEstimatorImpl::MiEstimatorImpl(const NetworkConfig& cfg) {
  trunk = torch::nn::Sequential();
  int64_t prev = 1;
  for (const auto f : cfg.modality_filters) {
    trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(prev, f, 3).stride(2).padding(1)));
    trunk->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    prev = f;
  }
  trunk->push_back(torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions({4, 4})));
  register_module("trunk", trunk);
  fc = register_module("fc", torch::nn::Linear(prev * 16, 128));
  head = register_module("head", torch::nn::Linear(128, cfg.z_dim));
}

torch::Tensor MiEstimatorImpl::forward(torch::Tensor x_recon) {
  return head(torch::relu(fc(trunk->forward(x_recon).flatten(1))));
}

// ---------------------------------------------------------------------------
// bundle
// ---------------------------------------------------------------------------

NetworkBundleImpl::NetworkBundleImpl(NetworkConfig cfg) : config(std::move(cfg)) {
  config.validate();
  anatomy = register_module("anatomy", AnatomyEncoder(config));
  modality = register_module("modality", ModalityEncoder(config));
  decoder = register_module("decoder", Decoder(config));
  segmentor = register_module("segmentor", Segmentor(config));
  transformer = register_module("transformer", TemporalTransformer(config));
  discriminator = register_module("discriminator", Discriminator(config));
  mi = register_module("mi", MiEstimator(config));
}

torch::Tensor NetworkBundleImpl::anatomy_encode(torch::Tensor x) { return anatomy(x); }

ModalityEncoderImpl::Output NetworkBundleImpl::modality_encode(torch::Tensor x, torch::Tensor s) {
  return modality(x, s);
}

torch::Tensor NetworkBundleImpl::decode(torch::Tensor s, torch::Tensor z) {
  return decoder(s, z);
}

torch::Tensor NetworkBundleImpl::segment(torch::Tensor s) { return segmentor(s); }

TemporalTransformerImpl::Output NetworkBundleImpl::transform(torch::Tensor s, torch::Tensor t,
                                                             torch::Tensor dt) {
  return transformer(s, t, dt);
}

TemporalTransformerImpl::Output NetworkBundleImpl::transform(torch::Tensor s, double t, double dt) {
  const auto batch = s.size(0);
  return transformer(s, torch::full({batch}, t, torch::kFloat), torch::full({batch}, dt, torch::kFloat));
}

torch::Tensor NetworkBundleImpl::discriminate(torch::Tensor y_foreground) {
  return discriminator(y_foreground);
}

torch::Tensor NetworkBundleImpl::estimate_mi_code(torch::Tensor x_recon) { return mi(x_recon); }

std::vector<torch::Tensor> NetworkBundleImpl::generator_parameters() {
  std::vector<torch::Tensor> params;
  for (auto& module : std::vector<std::shared_ptr<torch::nn::Module>>{
           anatomy.ptr(), modality.ptr(), decoder.ptr(), segmentor.ptr(), transformer.ptr(),
           mi.ptr()}) {
    for (auto& p : module->parameters()) params.push_back(p);
  }
  return params;
}

std::vector<torch::Tensor> NetworkBundleImpl::discriminator_parameters() {
  return discriminator->parameters();
}

}  // namespace sdtnet
