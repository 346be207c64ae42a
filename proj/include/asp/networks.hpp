#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "asp/common.hpp"
#include "asp/contrastive.hpp"

namespace asp {

enum class NormKind { kNone, kInstance };

inline NormKind parse_norm(const std::string& name) {
  if (name == "none") return NormKind::kNone;
  if (name == "instance") return NormKind::kInstance;
  throw ConfigError("unknown norm kind: " + name);
}

inline const char* to_string(NormKind n) {
  return n == NormKind::kNone ? "none" : "instance";
}

/// ResNet encoder/decoder generator. Encoder stages are numbered
/// 0 (stem), 1..downsample_stages (strided convs), then one id per
/// residual block; tap_layers index into that numbering.
struct GeneratorSpec {
  std::int64_t in_channels = 3;
  std::int64_t out_channels = 3;
  std::int64_t base_width = 64;
  std::int64_t residual_blocks = 6;
  std::int64_t downsample_stages = 2;
  std::vector<std::int64_t> tap_layers;  // empty -> 5 evenly spaced stages
  NormKind norm = NormKind::kInstance;

  std::int64_t stage_count() const {
    return 1 + downsample_stages + residual_blocks;
  }

  std::int64_t stage_channels(std::int64_t stage) const {
    const std::int64_t down = std::min(stage, downsample_stages);
    return base_width << down;
  }

  /// Spatial stride of a stage's output relative to the input image.
  std::int64_t stage_stride(std::int64_t stage) const {
    return std::int64_t{1} << std::min(stage, downsample_stages);
  }

  std::vector<std::int64_t> effective_taps() const {
    if (!tap_layers.empty()) return tap_layers;
    // 5 evenly spaced encoder depths, input stem through last block.
    std::vector<std::int64_t> taps;
    const std::int64_t last = stage_count() - 1;
    for (int i = 0; i < 5; ++i) {
      auto id = static_cast<std::int64_t>(std::llround(i * last / 4.0));
      if (taps.empty() || taps.back() != id) taps.push_back(id);
    }
    return taps;
  }

  void validate() const {
    if (residual_blocks < 1) throw ConfigError("residual_blocks must be >= 1");
    if (downsample_stages < 1)
      throw ConfigError("downsample_stages must be >= 1");
    if (base_width < 1) throw ConfigError("base_width must be >= 1");
    const auto taps = effective_taps();
    if (taps.empty()) throw ConfigError("tap_layers must not be empty");
    for (auto t : taps)
      if (t < 0 || t >= stage_count())
        throw ConfigError("tap layer id out of range: " + std::to_string(t));
  }

  /// Desk-scale preset used by tests and acceptance runs. No normalization
  /// layers, so patch embeddings stay strictly local to their receptive
  /// field.
  static GeneratorSpec tiny() {
    GeneratorSpec s;
    s.base_width = 8;
    s.residual_blocks = 2;
    s.norm = NormKind::kNone;
    return s;
  }
};

struct DiscriminatorSpec {
  std::int64_t in_channels = 3;
  std::int64_t layers = 5;
  std::int64_t base_width = 64;
  NormKind norm = NormKind::kInstance;

  void validate() const {
    if (layers < 1) throw ConfigError("discriminator layers must be >= 1");
    if (base_width < 1) throw ConfigError("base_width must be >= 1");
  }

  static DiscriminatorSpec tiny() {
    DiscriminatorSpec s;
    s.layers = 4;
    s.base_width = 8;
    s.norm = NormKind::kNone;
    return s;
  }
};

/// Per-tap-layer two-layer perceptron mapping feature channels to the
/// shared embedding dimension, followed by unit normalization.
struct ProjectorSpec {
  std::int64_t embed_dim = 256;

  void validate() const {
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  }

  static ProjectorSpec tiny() {
    ProjectorSpec s;
    s.embed_dim = 16;
    return s;
  }
};

namespace detail {

inline void push_norm(torch::nn::Sequential& seq, NormKind norm,
                      std::int64_t channels) {
  if (norm == NormKind::kInstance)
    seq->push_back(torch::nn::InstanceNorm2d(
        torch::nn::InstanceNorm2dOptions(channels)));
}

/// DCGAN-style init shared by all three networks.
inline void init_translation_weights(torch::nn::Module& root) {
  torch::NoGradGuard ng;
  for (const auto& m : root.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) torch::nn::init::zeros_(conv->bias);
    } else if (auto* tconv = m->as<torch::nn::ConvTranspose2d>()) {
      torch::nn::init::normal_(tconv->weight, 0.0, 0.02);
      if (tconv->bias.defined()) torch::nn::init::zeros_(tconv->bias);
    } else if (auto* lin = m->as<torch::nn::Linear>()) {
      torch::nn::init::normal_(lin->weight, 0.0, 0.02);
      if (lin->bias.defined()) torch::nn::init::zeros_(lin->bias);
    }
  }
}

}  // namespace detail

struct ResnetBlockImpl : torch::nn::Module {
  torch::nn::Sequential body;

  ResnetBlockImpl(std::int64_t channels, NormKind norm) {
    body = torch::nn::Sequential();
    body->push_back(torch::nn::ReflectionPad2d(1));
    body->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3)));
    detail::push_norm(body, norm, channels);
    body->push_back(torch::nn::ReLU());
    body->push_back(torch::nn::ReflectionPad2d(1));
    body->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3)));
    detail::push_norm(body, norm, channels);
    register_module("body", body);
  }

  torch::Tensor forward(const torch::Tensor& x) {
    return x + body->forward(x);
  }
};
TORCH_MODULE(ResnetBlock);

class ResnetGeneratorImpl : public torch::nn::Module {
 public:
  explicit ResnetGeneratorImpl(GeneratorSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto w = spec_.base_width;
    const auto norm = spec_.norm;

    torch::nn::Sequential stem;
    stem->push_back(torch::nn::ReflectionPad2d(3));
    stem->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(spec_.in_channels, w, 7)));
    detail::push_norm(stem, norm, w);
    stem->push_back(torch::nn::ReLU());
    stages_.push_back(register_module("stem", stem));

    for (std::int64_t i = 0; i < spec_.downsample_stages; ++i) {
      const auto cin = w << i;
      const auto cout = w << (i + 1);
      torch::nn::Sequential down;
      down->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(cin, cout, 3).stride(2).padding(1)));
      detail::push_norm(down, norm, cout);
      down->push_back(torch::nn::ReLU());
      stages_.push_back(
          register_module("down" + std::to_string(i), down));
    }

    const auto deep = w << spec_.downsample_stages;
    for (std::int64_t b = 0; b < spec_.residual_blocks; ++b) {
      torch::nn::Sequential block;
      block->push_back(ResnetBlock(deep, norm));
      stages_.push_back(
          register_module("block" + std::to_string(b), block));
    }

    decoder_ = torch::nn::Sequential();
    for (std::int64_t i = spec_.downsample_stages; i > 0; --i) {
      const auto cin = w << i;
      const auto cout = w << (i - 1);
      decoder_->push_back(torch::nn::ConvTranspose2d(
          torch::nn::ConvTranspose2dOptions(cin, cout, 3)
              .stride(2)
              .padding(1)
              .output_padding(1)));
      detail::push_norm(decoder_, norm, cout);
      decoder_->push_back(torch::nn::ReLU());
    }
    decoder_->push_back(torch::nn::ReflectionPad2d(3));
    decoder_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(w, spec_.out_channels, 7)));
    decoder_->push_back(torch::nn::Tanh());
    register_module("decoder", decoder_);

    detail::init_translation_weights(*this);
  }

  const GeneratorSpec& spec() const { return spec_; }

  torch::Tensor forward(const torch::Tensor& image) {
    auto x = check_input(image);
    for (auto& stage : stages_) x = stage->forward(x);
    auto y = decoder_->forward(x);
    return image.dim() == 3 ? y.squeeze(0) : y;
  }

  /// Feature maps at the requested encoder stages.
  std::vector<torch::Tensor> encode(const torch::Tensor& image,
                                    const std::vector<std::int64_t>& taps) {
    std::vector<torch::Tensor> out;
    run_encoder(check_input(image), taps, &out);
    return out;
  }

  /// One encoder pass serving both the translation output and the input
  /// image's tap features.
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward_with_taps(
      const torch::Tensor& image, const std::vector<std::int64_t>& taps) {
    std::vector<torch::Tensor> feats;
    auto deep = run_encoder(check_input(image), taps, &feats);
    auto y = decoder_->forward(deep);
    return {image.dim() == 3 ? y.squeeze(0) : y, std::move(feats)};
  }

 private:
  torch::Tensor check_input(const torch::Tensor& image) const {
    auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
    if (x.dim() != 4)
      throw ShapeError("generator expects [C,H,W] or [B,C,H,W] input");
    if (x.size(1) != spec_.in_channels)
      throw ShapeError("generator expects " +
                       std::to_string(spec_.in_channels) + " channels, got " +
                       std::to_string(x.size(1)));
    const auto div = std::int64_t{1} << spec_.downsample_stages;
    if (x.size(2) % div != 0 || x.size(3) % div != 0)
      throw ShapeError("spatial size must be divisible by " +
                       std::to_string(div));
    return x;
  }

  torch::Tensor run_encoder(torch::Tensor x,
                            const std::vector<std::int64_t>& taps,
                            std::vector<torch::Tensor>* out) {
    if (taps.empty())
      throw InvalidInputError("encode: tap layer list is empty");
    for (auto t : taps)
      if (t < 0 || t >= spec_.stage_count())
        throw InvalidInputError("encode: invalid tap layer id " +
                                std::to_string(t));
    out->assign(taps.size(), torch::Tensor());
    for (std::int64_t stage = 0; stage < spec_.stage_count(); ++stage) {
      x = stages_[static_cast<std::size_t>(stage)]->forward(x);
      for (std::size_t i = 0; i < taps.size(); ++i)
        if (taps[i] == stage) (*out)[i] = x;
    }
    return x;
  }

  GeneratorSpec spec_;
  std::vector<torch::nn::Sequential> stages_;
  torch::nn::Sequential decoder_;
};
TORCH_MODULE(ResnetGenerator);

/// PatchGAN: a stack of 4x4 convs emitting a grid of per-patch logits.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(DiscriminatorSpec spec)
      : spec_(std::move(spec)) {
    spec_.validate();
    const auto w = spec_.base_width;
    auto conv = [](std::int64_t cin, std::int64_t cout, std::int64_t stride) {
      return torch::nn::Conv2d(
          torch::nn::Conv2dOptions(cin, cout, 4).stride(stride).padding(1));
    };
    model_ = torch::nn::Sequential();
    std::int64_t ch = spec_.in_channels;
    if (spec_.layers >= 2) {
      model_->push_back(conv(ch, w, 2));
      model_->push_back(torch::nn::LeakyReLU(
          torch::nn::LeakyReLUOptions().negative_slope(0.2)));
      ch = w;
      std::int64_t mult = 1;
      for (std::int64_t i = 0; i + 3 < spec_.layers; ++i) {
        mult = std::min<std::int64_t>(mult * 2, 8);
        model_->push_back(conv(ch, w * mult, 2));
        detail::push_norm(model_, spec_.norm, w * mult);
        model_->push_back(torch::nn::LeakyReLU(
            torch::nn::LeakyReLUOptions().negative_slope(0.2)));
        ch = w * mult;
      }
      if (spec_.layers >= 3) {
        mult = std::min<std::int64_t>(mult * 2, 8);
        model_->push_back(conv(ch, w * mult, 1));
        detail::push_norm(model_, spec_.norm, w * mult);
        model_->push_back(torch::nn::LeakyReLU(
            torch::nn::LeakyReLUOptions().negative_slope(0.2)));
        ch = w * mult;
      }
    }
    model_->push_back(conv(ch, 1, 1));
    register_module("model", model_);
    detail::init_translation_weights(*this);
  }

  const DiscriminatorSpec& spec() const { return spec_; }

  torch::Tensor forward(const torch::Tensor& image) {
    auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
    if (x.dim() != 4 || x.size(1) != spec_.in_channels)
      throw ShapeError("discriminator expects " +
                       std::to_string(spec_.in_channels) +
                       "-channel image input");
    auto y = model_->forward(x);
    return image.dim() == 3 ? y.squeeze(0) : y;
  }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential model_;
};
TORCH_MODULE(PatchDiscriminator);

/// Uniform sample of `count` distinct cell indices from an h x w grid.
/// Deterministic in `seed`; one draw is shared by every stack of a step.
inline torch::Tensor sample_locations(std::int64_t grid_h, std::int64_t grid_w,
                                      std::int64_t count, std::uint64_t seed) {
  const std::int64_t cells = grid_h * grid_w;
  if (count < 1) throw ConfigError("sample_locations: count must be >= 1");
  if (count > cells)
    throw ConfigError("sample_locations: count " + std::to_string(count) +
                      " exceeds grid capacity " + std::to_string(cells));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(cells));
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, cells - 1);
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(pick(rng))]);
  }
  return torch::tensor(
      std::vector<std::int64_t>(idx.begin(), idx.begin() + count),
      torch::kLong);
}

/// Shared feature network F's projection heads H: one two-layer MLP per
/// tap layer, unit-normalized output rows.
class ProjectionHeadsImpl : public torch::nn::Module {
 public:
  ProjectionHeadsImpl(const GeneratorSpec& gen, ProjectorSpec spec)
      : spec_(std::move(spec)), taps_(gen.effective_taps()) {
    spec_.validate();
    for (auto tap : taps_) {
      const auto channels = gen.stage_channels(tap);
      torch::nn::Sequential head(
          torch::nn::Linear(channels, spec_.embed_dim), torch::nn::ReLU(),
          torch::nn::Linear(spec_.embed_dim, spec_.embed_dim));
      heads_.push_back(
          register_module("head" + std::to_string(tap), head));
    }
    detail::init_translation_weights(*this);
  }

  const ProjectorSpec& spec() const { return spec_; }
  const std::vector<std::int64_t>& taps() const { return taps_; }

  /// Project per-layer feature maps into an EmbeddingStack at the given
  /// locations. Each embedding depends only on its feature column; a 1e-8
  /// offset before normalization keeps all-zero columns well-defined.
  EmbeddingStack project(const std::vector<torch::Tensor>& features,
                         const std::vector<torch::Tensor>& locations) {
    if (features.size() != taps_.size())
      throw InvalidInputError("project: expected one feature map per tap");
    if (locations.size() != taps_.size())
      throw InvalidInputError("project: expected one location set per tap");
    EmbeddingStack stack;
    for (std::size_t i = 0; i < taps_.size(); ++i) {
      auto f = features[i];
      if (f.dim() == 3) f = f.unsqueeze(0);
      if (f.dim() != 4 || f.size(0) != 1)
        throw ShapeError("project: features must be [1,C,h,w]");
      const auto h = f.size(2);
      const auto w = f.size(3);
      auto locs = locations[i].to(torch::kLong);
      if (locs.numel() == 0 ||
          locs.min().item<std::int64_t>() < 0 ||
          locs.max().item<std::int64_t>() >= h * w)
        throw InvalidInputError("project: location index out of bounds");
      auto columns = f.squeeze(0)
                         .reshape({f.size(1), h * w})
                         .t()
                         .index_select(0, locs);  // [S, C]
      auto z = heads_[i]->forward(columns) + 1e-8;
      auto norms = z.norm(2, /*dim=*/1, /*keepdim=*/true);
      EmbeddingLayer layer;
      layer.layer_id = taps_[i];
      layer.grid_h = h;
      layer.grid_w = w;
      layer.locations = locs;
      layer.embeddings = z / norms;
      stack.layers.push_back(std::move(layer));
    }
    return stack;
  }

 private:
  ProjectorSpec spec_;
  std::vector<std::int64_t> taps_;
  std::vector<torch::nn::Sequential> heads_;
};
TORCH_MODULE(ProjectionHeads);

inline EmbeddingStack project_patches(
    const std::vector<torch::Tensor>& features,
    const std::vector<torch::Tensor>& locations, ProjectionHeads& projector) {
  return projector->project(features, locations);
}

}  // namespace asp
