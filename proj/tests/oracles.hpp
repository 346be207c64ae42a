#pragma once

// Loop-based scalar oracles for the contrastive losses, written directly
// from the loss definitions with plain std::exp/std::log arithmetic. They
// deliberately share no code with the library implementations they check.

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "asp/contrastive.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;         // S rows of dimension D
using Stack = std::vector<Mat>;       // L layers

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double info_nce(const Vec& anchor, const Vec& positive,
                       const Mat& negatives, double tau) {
  const double num = std::exp(dot(anchor, positive) / tau);
  double den = num;
  for (const auto& n : negatives) den += std::exp(dot(anchor, n) / tau);
  return -std::log(num / den);
}

// Mean over layers of the per-layer mean of InfoNCE with internal
// negatives (for location s, the other S-1 key rows).
inline double patch_nce(const Stack& anchors, const Stack& keys, double tau) {
  double layer_sum = 0.0;
  for (std::size_t l = 0; l < anchors.size(); ++l) {
    const auto& A = anchors[l];
    const auto& K = keys[l];
    double s_sum = 0.0;
    for (std::size_t s = 0; s < A.size(); ++s) {
      Mat negs;
      for (std::size_t r = 0; r < K.size(); ++r)
        if (r != s) negs.push_back(K[r]);
      s_sum += info_nce(A[s], K[s], negs, tau);
    }
    layer_sum += s_sum / static_cast<double>(A.size());
  }
  return layer_sum / static_cast<double>(anchors.size());
}

inline double sp(const Stack& out, const Stack& gt, double tau) {
  return patch_nce(out, gt, tau);
}

// Independent re-statements of the weight and schedule families.
inline double weight_h(double c, asp::WeightFamily fam, double sigmoid_gain,
                       double ramp_lo, double ramp_hi) {
  switch (fam) {
    case asp::WeightFamily::kZero:
      return 1.0;
    case asp::WeightFamily::kLinear:
      return 0.5 * c + 0.5;
    case asp::WeightFamily::kSigmoid:
      return 1.0 / (1.0 + std::exp(-sigmoid_gain * c));
    case asp::WeightFamily::kLambda: {
      double v = (c - ramp_lo) / (ramp_hi - ramp_lo);
      return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
  }
  return 1.0;
}

inline double schedule_g(double u, asp::ScheduleFamily fam, double onset) {
  switch (fam) {
    case asp::ScheduleFamily::kUniform:
      return 0.0;
    case asp::ScheduleFamily::kLinear:
      return u;
    case asp::ScheduleFamily::kTop:
      return u < onset ? 0.0 : (u - onset) / (1.0 - onset);
  }
  return 0.0;
}

// Full ASP oracle: computes every w_t and every InfoNCE term explicitly.
inline double asp(const Stack& out, const Stack& gt, double tau,
                  const asp::AdaptiveConfig& cfg) {
  const double u = static_cast<double>(cfg.current_iter) /
                   static_cast<double>(cfg.total_iters);
  const double g = schedule_g(u, cfg.schedule_family, cfg.onset);
  double layer_sum = 0.0;
  for (std::size_t l = 0; l < out.size(); ++l) {
    const auto& A = out[l];
    const auto& K = gt[l];
    std::vector<double> w(A.size()), nce(A.size());
    double W = 0.0;
    for (std::size_t s = 0; s < A.size(); ++s) {
      double c = dot(A[s], K[s]);
      c = std::clamp(c, -1.0, 1.0);
      w[s] = (1.0 - g) + g * weight_h(c, cfg.weight_family, cfg.sigmoid_gain,
                                      cfg.ramp_lo, cfg.ramp_hi);
      W += w[s];
      Mat negs;
      for (std::size_t r = 0; r < K.size(); ++r)
        if (r != s) negs.push_back(K[r]);
      nce[s] = info_nce(A[s], K[s], negs, tau);
    }
    double layer_loss = 0.0;
    for (std::size_t s = 0; s < A.size(); ++s)
      layer_loss += w[s] / W * nce[s];
    layer_sum += layer_loss;
  }
  return layer_sum / static_cast<double>(out.size());
}

// --- conversions and random stack generation -----------------------------

inline Mat from_tensor(const torch::Tensor& t) {
  auto d = t.to(torch::kDouble).contiguous();
  Mat m(static_cast<std::size_t>(d.size(0)),
        Vec(static_cast<std::size_t>(d.size(1))));
  const double* p = d.data_ptr<double>();
  for (std::int64_t r = 0; r < d.size(0); ++r)
    for (std::int64_t c = 0; c < d.size(1); ++c)
      m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
          p[r * d.size(1) + c];
  return m;
}

inline Stack from_stack(const asp::EmbeddingStack& s) {
  Stack out;
  for (const auto& l : s.layers) out.push_back(from_tensor(l.embeddings));
  return out;
}

// Random unit-row embedding stack (double precision); layer l gets
// layer_id = l and placeholder locations 0..S-1.
inline asp::EmbeddingStack random_stack(std::mt19937_64& rng,
                                        std::int64_t layers, std::int64_t S,
                                        std::int64_t D,
                                        bool requires_grad = false) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  asp::EmbeddingStack stack;
  for (std::int64_t l = 0; l < layers; ++l) {
    auto e = torch::empty({S, D}, torch::kDouble);
    auto* p = e.data_ptr<double>();
    for (std::int64_t i = 0; i < S; ++i) {
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (std::int64_t j = 0; j < D; ++j) {
          p[i * D + j] = gauss(rng);
          norm2 += p[i * D + j] * p[i * D + j];
        }
      } while (norm2 < 1e-12);
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::int64_t j = 0; j < D; ++j) p[i * D + j] *= inv;
    }
    if (requires_grad) e.set_requires_grad(true);
    asp::EmbeddingLayer layer;
    layer.layer_id = l;
    layer.locations = torch::arange(S, torch::kLong);
    layer.embeddings = e;
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

// Central finite differences of f over every element of x (double).
inline torch::Tensor finite_diff_grad(
    const std::function<double(const torch::Tensor&)>& f,
    const torch::Tensor& x, double eps = 1e-4) {
  auto grad = torch::zeros_like(x);
  auto flat_x = x.view(-1);
  auto flat_g = grad.view(-1);
  for (std::int64_t i = 0; i < flat_x.numel(); ++i) {
    torch::NoGradGuard ng;
    const double orig = flat_x[i].item<double>();
    flat_x[i] = orig + eps;
    const double fp = f(x);
    flat_x[i] = orig - eps;
    const double fm = f(x);
    flat_x[i] = orig;
    flat_g[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

// Largest elementwise |a-b| / max(|a|, |b|, floor).
inline double max_rel_err(const torch::Tensor& a, const torch::Tensor& b,
                          double floor = 1e-8) {
  auto denom = torch::max(a.abs(), b.abs()).clamp_min(floor);
  return ((a - b).abs() / denom).max().item<double>();
}

}  // namespace oracle
