#pragma once

#include <torch/torch.h>

#include <cmath>
#include <vector>

#include "asp/common.hpp"

namespace asp {

struct PyramidConfig {
  std::int64_t levels = 3;
  std::vector<double> level_weights = {1.0, 1.0, 1.0};

  void validate() const {
    if (levels < 1) throw ConfigError("pyramid levels must be >= 1");
    if (level_weights.size() != static_cast<std::size_t>(levels))
      throw ConfigError("pyramid needs one weight per level");
    for (double w : level_weights)
      if (!(w > 0.0)) throw ConfigError("pyramid weights must be positive");
  }

  static PyramidConfig with_levels(std::int64_t n) {
    PyramidConfig cfg;
    cfg.levels = n;
    cfg.level_weights.assign(static_cast<std::size_t>(n), 1.0);
    return cfg;
  }
};

namespace detail {

/// 5x5 binomial blur, replicate-padded so constants are preserved exactly
/// (the kernel taps are exact binary fractions).
inline torch::Tensor binomial_blur(const torch::Tensor& x) {
  auto row = torch::tensor({1.0, 4.0, 6.0, 4.0, 1.0},
                           torch::TensorOptions().dtype(x.dtype())) /
             16.0;
  auto kernel2d = torch::outer(row, row);
  const auto channels = x.size(1);
  auto weight = kernel2d.view({1, 1, 5, 5}).repeat({channels, 1, 1, 1});
  namespace F = torch::nn::functional;
  auto padded = F::pad(x, F::PadFuncOptions({2, 2, 2, 2})
                              .mode(torch::kReplicate));
  return F::conv2d(padded, weight,
                   F::Conv2dFuncOptions().groups(channels));
}

}  // namespace detail

/// Level 0 is the input; level k is level k-1 blurred then decimated by 2.
inline std::vector<torch::Tensor> gaussian_pyramid(const torch::Tensor& image,
                                                   const PyramidConfig& cfg) {
  cfg.validate();
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (x.dim() != 4) throw ShapeError("gaussian_pyramid expects [C,H,W] input");
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto div = std::int64_t{1} << (cfg.levels - 1);
  if (h % div != 0 || w % div != 0)
    throw ShapeError("spatial size must be divisible by 2^(levels-1)");
  const double max_levels =
      std::log2(static_cast<double>(std::min(h, w))) - 2.0;
  if (cfg.levels > 1 && static_cast<double>(cfg.levels) > max_levels)
    throw ConfigError("too many pyramid levels for this image size");

  std::vector<torch::Tensor> levels;
  levels.reserve(static_cast<std::size_t>(cfg.levels));
  levels.push_back(image.dim() == 3 ? x.squeeze(0) : x);
  auto cur = x;
  for (std::int64_t k = 1; k < cfg.levels; ++k) {
    auto blurred = detail::binomial_blur(cur);
    cur = blurred.slice(2, 0, blurred.size(2), 2)
              .slice(3, 0, blurred.size(3), 2);
    levels.push_back(image.dim() == 3 ? cur.squeeze(0) : cur);
  }
  return levels;
}

/// Sum over levels of weight_k * mean absolute difference between the two
/// pyramids. L1 keeps the reconstruction median-seeking under inconsistent
/// targets.
inline torch::Tensor gp_loss(const torch::Tensor& generated,
                             const torch::Tensor& groundtruth,
                             const PyramidConfig& cfg) {
  if (generated.sizes() != groundtruth.sizes())
    throw ShapeError("gp_loss: image shapes differ");
  auto pa = gaussian_pyramid(generated, cfg);
  auto pb = gaussian_pyramid(groundtruth, cfg);
  torch::Tensor loss;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    auto term = cfg.level_weights[k] * (pa[k] - pb[k]).abs().mean();
    loss = k == 0 ? term : loss + term;
  }
  return loss;
}

namespace detail {

inline void check_finite_logits(const torch::Tensor& logits,
                                const char* what) {
  if (!torch::isfinite(logits).all().item<bool>())
    throw NumericError(std::string(what) + ": non-finite logits");
}

}  // namespace detail

/// Least-squares GAN generator loss: mean (fake - 1)^2.
inline torch::Tensor adversarial_g_loss(const torch::Tensor& fake_logits) {
  detail::check_finite_logits(fake_logits, "adversarial_g_loss");
  return (fake_logits - 1.0).square().mean();
}

/// Least-squares GAN discriminator loss:
/// 0.5 mean (real - 1)^2 + 0.5 mean fake^2.
inline torch::Tensor adversarial_d_loss(const torch::Tensor& real_logits,
                                        const torch::Tensor& fake_logits) {
  detail::check_finite_logits(real_logits, "adversarial_d_loss");
  detail::check_finite_logits(fake_logits, "adversarial_d_loss");
  return 0.5 * (real_logits - 1.0).square().mean() +
         0.5 * fake_logits.square().mean();
}

}  // namespace asp
