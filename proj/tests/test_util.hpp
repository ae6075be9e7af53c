#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sdtnet/networks.hpp"

namespace sdtnet::testutil {

// linear-interpolation percentile, independent of torch::quantile
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = static_cast<size_t>(std::ceil(h));
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline std::vector<double> to_vector(const torch::Tensor& t) {
  const auto flat = t.to(torch::kDouble).flatten().contiguous();
  const auto* p = flat.data_ptr<double>();
  return {p, p + flat.numel()};
}

// central finite differences of a scalar-valued function at x (float64)
template <typename Fn>
torch::Tensor fd_grad(Fn fn, const torch::Tensor& x, double eps = 1e-5) {
  auto grad = torch::zeros_like(x);
  auto flat = x.clone().flatten();
  auto gflat = grad.flatten();
  for (int64_t i = 0; i < flat.numel(); ++i) {
    auto plus = flat.clone();
    plus[i] += eps;
    auto minus = flat.clone();
    minus[i] -= eps;
    const double fp = fn(plus.view_as(x)).template item<double>();
    const double fm = fn(minus.view_as(x)).template item<double>();
    gflat[i] = (fp - fm) / (2.0 * eps);
  }
  return gflat.view_as(x);
}

inline bool grads_close(const torch::Tensor& analytic, const torch::Tensor& numeric,
                        double rtol = 1e-3, double atol = 1e-7) {
  return torch::allclose(analytic, numeric, rtol, atol);
}

// small network geometry for fast tests
inline NetworkConfig tiny_config(int64_t size = 32) {
  NetworkConfig cfg;
  cfg.image_height = size;
  cfg.image_width = size;
  cfg.anatomy_channels = 4;
  cfg.z_dim = 4;
  cfg.anatomy_filters = {4, 8};
  cfg.transformer_filters = {4, 4, 6, 8};
  cfg.decoder_filters = {8, 8};
  cfg.segmentor_filters = {8};
  cfg.discriminator_filters = {4, 8};
  cfg.modality_filters = {4, 8};
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("sdtnet_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace sdtnet::testutil
