#pragma once

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "asp/common.hpp"

namespace asp {

// Embedding rows are validated to unit norm within this tolerance when a
// stack is constructed / checked as a value.
inline constexpr double kUnitNormTol = 1e-5;
// Loss entry points accept a looser deviation so that finite-difference
// probes (which perturb raw elements by ~1e-4) stay legal inputs.
inline constexpr double kLooseUnitNormTol = 5e-3;
inline constexpr double kSimilarityDomainSlack = 1e-6;

struct ContrastiveConfig {
  double temperature = 0.07;
  std::int64_t negatives_per_anchor = 255;
  std::int64_t num_locations = 256;

  void validate() const {
    if (!(temperature > 0.0))
      throw ConfigError("temperature must be positive");
    if (negatives_per_anchor < 1)
      throw ConfigError("negatives_per_anchor must be >= 1");
    if (num_locations < 2)
      throw ConfigError("num_locations must be >= 2");
    if (negatives_per_anchor > num_locations - 1)
      throw ConfigError("negatives_per_anchor must be <= num_locations - 1");
  }
};

enum class WeightFamily { kZero, kLinear, kSigmoid, kLambda };
enum class ScheduleFamily { kUniform, kLinear, kTop };

inline WeightFamily parse_weight_family(const std::string& name) {
  if (name == "zero") return WeightFamily::kZero;
  if (name == "linear") return WeightFamily::kLinear;
  if (name == "sigmoid") return WeightFamily::kSigmoid;
  if (name == "lambda") return WeightFamily::kLambda;
  throw ConfigError("unknown weight family: " + name);
}

inline ScheduleFamily parse_schedule_family(const std::string& name) {
  if (name == "uniform") return ScheduleFamily::kUniform;
  if (name == "linear") return ScheduleFamily::kLinear;
  if (name == "top") return ScheduleFamily::kTop;
  throw ConfigError("unknown schedule family: " + name);
}

inline const char* to_string(WeightFamily f) {
  switch (f) {
    case WeightFamily::kZero: return "zero";
    case WeightFamily::kLinear: return "linear";
    case WeightFamily::kSigmoid: return "sigmoid";
    case WeightFamily::kLambda: return "lambda";
  }
  return "?";
}

inline const char* to_string(ScheduleFamily f) {
  switch (f) {
    case ScheduleFamily::kUniform: return "uniform";
    case ScheduleFamily::kLinear: return "linear";
    case ScheduleFamily::kTop: return "top";
  }
  return "?";
}

/// The (h family, g family, t, T) bundle that names one adaptive variant.
/// Weight families map similarity in [-1,1] to [0,1], monotone
/// non-decreasing; schedule families map progress in [0,1] to [0,1],
/// non-decreasing with g(0) = 0.
struct AdaptiveConfig {
  WeightFamily weight_family = WeightFamily::kZero;
  ScheduleFamily schedule_family = ScheduleFamily::kUniform;
  double sigmoid_gain = 10.0;   // h_sigmoid(c) = 1/(1+exp(-gain*c))
  double ramp_lo = 0.0;         // h_lambda ramps from ramp_lo ...
  double ramp_hi = 0.5;         // ... up to ramp_hi, clamped to [0,1]
  double onset = 0.5;           // g_top stays 0 until progress >= onset
  std::int64_t current_iter = 0;
  std::int64_t total_iters = 1;

  /// How the per-layer weighted InfoNCE terms are aggregated. kNormalized
  /// divides by W = sum of weights (weights sum to 1 per layer); kSummed
  /// rescales weights to mean one and sums over locations.
  enum class LocationAggregation { kNormalized, kSummed };
  LocationAggregation aggregation = LocationAggregation::kNormalized;

  double progress() const {
    return static_cast<double>(current_iter) / static_cast<double>(total_iters);
  }

  AdaptiveConfig at(std::int64_t t) const {
    AdaptiveConfig copy = *this;
    copy.current_iter = t;
    return copy;
  }

  void validate() const {
    if (total_iters < 1) throw ConfigError("total_iters must be positive");
    if (current_iter < 0 || current_iter > total_iters)
      throw ConfigError("current_iter must be in [0, total_iters]");
    if (!(ramp_hi > ramp_lo))
      throw ConfigError("lambda family needs ramp_hi > ramp_lo");
    if (!(onset >= 0.0 && onset < 1.0))
      throw ConfigError("top schedule onset must be in [0, 1)");
  }

  /// "sp" for the (zero, uniform) pair, else "asp(<weight>,<schedule>)".
  std::string variant_name() const {
    if (weight_family == WeightFamily::kZero &&
        schedule_family == ScheduleFamily::kUniform)
      return "sp";
    return std::string("asp(") + to_string(weight_family) + "," +
           to_string(schedule_family) + ")";
  }
};

/// g(progress): fraction of the final weighting in force at this point of
/// training. g(0) = 0 for every family, so early training is unweighted.
inline double schedule_fn(double progress, const AdaptiveConfig& cfg) {
  if (progress < -1e-12 || progress > 1.0 + 1e-12)
    throw InvalidInputError("schedule progress outside [0,1]: " +
                            std::to_string(progress));
  const double u = std::clamp(progress, 0.0, 1.0);
  switch (cfg.schedule_family) {
    case ScheduleFamily::kUniform:
      return 0.0;
    case ScheduleFamily::kLinear:
      return u;
    case ScheduleFamily::kTop:
      return u < cfg.onset ? 0.0 : (u - cfg.onset) / (1.0 - cfg.onset);
  }
  return 0.0;
}

/// h(similarity): relative importance of a location given its
/// anchor-positive cosine similarity. Monotone non-decreasing into [0,1].
inline double weight_fn(double similarity, const AdaptiveConfig& cfg) {
  if (std::abs(similarity) > 1.0 + kSimilarityDomainSlack)
    throw InvalidInputError("similarity outside [-1,1]: " +
                            std::to_string(similarity));
  const double c = std::clamp(similarity, -1.0, 1.0);
  switch (cfg.weight_family) {
    case WeightFamily::kZero:
      return 1.0;
    case WeightFamily::kLinear:
      return (c + 1.0) / 2.0;
    case WeightFamily::kSigmoid:
      return 1.0 / (1.0 + std::exp(-cfg.sigmoid_gain * c));
    case WeightFamily::kLambda:
      return std::clamp((c - cfg.ramp_lo) / (cfg.ramp_hi - cfg.ramp_lo), 0.0,
                        1.0);
  }
  return 1.0;
}

/// Vectorized h over a tensor of similarities.
inline torch::Tensor weight_fn(const torch::Tensor& similarities,
                               const AdaptiveConfig& cfg) {
  if (similarities.numel() > 0 &&
      similarities.abs().max().item<double>() > 1.0 + kSimilarityDomainSlack)
    throw InvalidInputError("similarity outside [-1,1]");
  auto c = similarities.clamp(-1.0, 1.0);
  switch (cfg.weight_family) {
    case WeightFamily::kZero:
      return torch::ones_like(c);
    case WeightFamily::kLinear:
      return (c + 1.0) / 2.0;
    case WeightFamily::kSigmoid:
      return torch::sigmoid(cfg.sigmoid_gain * c);
    case WeightFamily::kLambda:
      return ((c - cfg.ramp_lo) / (cfg.ramp_hi - cfg.ramp_lo)).clamp(0.0, 1.0);
  }
  return torch::ones_like(c);
}

namespace detail {

inline void check_near_unit_rows(const torch::Tensor& rows, double tol,
                                 const char* what) {
  auto norms = rows.norm(2, /*dim=*/-1);
  const double lo = norms.min().item<double>();
  const double hi = norms.max().item<double>();
  if (lo < 1e-7)
    throw InvalidInputError(std::string(what) + ": zero-norm embedding");
  if (std::abs(lo - 1.0) > tol || std::abs(hi - 1.0) > tol)
    throw InvalidInputError(std::string(what) +
                            ": embeddings are not unit-norm (got norms in [" +
                            std::to_string(lo) + ", " + std::to_string(hi) +
                            "])");
}

}  // namespace detail

/// w_t(v, v+) = (1 - g(t/T)) * 1 + g(t/T) * h(v . v+).
/// Exactly 1 whenever g(t/T) == 0, in particular at t = 0.
inline double adaptive_weight(const torch::Tensor& anchor,
                              const torch::Tensor& positive,
                              const AdaptiveConfig& cfg) {
  cfg.validate();
  detail::check_near_unit_rows(anchor, kLooseUnitNormTol, "adaptive_weight");
  detail::check_near_unit_rows(positive, kLooseUnitNormTol, "adaptive_weight");
  const double g = schedule_fn(cfg.progress(), cfg);
  if (g == 0.0) return 1.0;
  const double c =
      std::clamp(anchor.dot(positive).item<double>(), -1.0, 1.0);
  return (1.0 - g) + g * weight_fn(c, cfg);
}

/// One layer of patch embeddings: S rows sampled at `locations` of an
/// h x w spatial grid. grid_h/grid_w may be 0 for stacks built directly in
/// tests; heatmaps require them.
struct EmbeddingLayer {
  std::int64_t layer_id = 0;
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;
  torch::Tensor locations;   // int64 [S]
  torch::Tensor embeddings;  // [S, D], unit-norm rows
};

struct EmbeddingStack {
  std::vector<EmbeddingLayer> layers;

  void validate(double unit_tol = kUnitNormTol) const {
    if (layers.empty()) throw InvalidInputError("EmbeddingStack: no layers");
    for (const auto& l : layers) {
      if (l.embeddings.dim() != 2)
        throw InvalidInputError("EmbeddingStack: embeddings must be [S, D]");
      if (l.embeddings.size(0) < 2)
        throw InvalidInputError(
            "EmbeddingStack: need at least 2 locations per layer");
      if (l.locations.numel() != l.embeddings.size(0))
        throw InvalidInputError(
            "EmbeddingStack: locations/embeddings length mismatch");
      detail::check_near_unit_rows(l.embeddings, unit_tol, "EmbeddingStack");
    }
  }
};

/// Stacks compared in one loss call must agree layer-for-layer.
inline void check_aligned(const EmbeddingStack& a, const EmbeddingStack& b) {
  if (a.layers.size() != b.layers.size())
    throw InvalidInputError("stacks have different layer counts");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.layer_id != lb.layer_id)
      throw InvalidInputError("stacks have different layer ids");
    if (la.embeddings.sizes() != lb.embeddings.sizes())
      throw InvalidInputError("stacks have different embedding shapes");
    if (!torch::equal(la.locations, lb.locations))
      throw InvalidInputError("stacks sample different locations");
  }
}

/// InfoNCE for one anchor against one positive and N explicit negatives:
///   -log[ exp(v.v+ / tau) / (exp(v.v+ / tau) + sum_n exp(v.vn- / tau)) ]
inline torch::Tensor info_nce(const torch::Tensor& anchor,
                              const torch::Tensor& positive,
                              const torch::Tensor& negatives,
                              const ContrastiveConfig& cfg) {
  if (!(cfg.temperature > 0.0))
    throw ConfigError("temperature must be positive");
  if (negatives.dim() != 2 || negatives.size(0) == 0)
    throw ConfigError("info_nce needs at least one negative (N >= 1)");
  detail::check_near_unit_rows(anchor, kLooseUnitNormTol, "info_nce anchor");
  detail::check_near_unit_rows(positive, kLooseUnitNormTol,
                               "info_nce positive");
  detail::check_near_unit_rows(negatives, kLooseUnitNormTol,
                               "info_nce negatives");
  auto pos_logit = anchor.dot(positive).unsqueeze(0);
  auto neg_logits = torch::matmul(negatives, anchor);
  auto logits = torch::cat({pos_logit, neg_logits}) / cfg.temperature;
  return -torch::log_softmax(logits, 0).index({0});
}

namespace detail {

/// Per-location InfoNCE over one layer with internal negatives: for every
/// location s, positive = keys[s] and negatives = the other S-1 key rows.
/// Returns the [S] vector of losses.
inline torch::Tensor info_nce_grid(const torch::Tensor& anchors,
                                   const torch::Tensor& keys,
                                   double temperature) {
  auto logits = torch::matmul(anchors, keys.t()) / temperature;  // [S, S]
  auto target = torch::arange(anchors.size(0),
                              torch::TensorOptions()
                                  .dtype(torch::kLong)
                                  .device(anchors.device()));
  return torch::nn::functional::cross_entropy(
      logits, target,
      torch::nn::functional::CrossEntropyFuncOptions().reduction(
          torch::kNone));
}

}  // namespace detail

/// Weight-modulated aggregation of per-location loss values for one layer.
/// kNormalized: sum_s (w_s / W) v_s with W = sum_s w_s (weights sum to 1).
/// kSummed:     sum_s (w_s S / W) v_s (weights rescaled to mean 1).
/// All-zero weights raise NumericError: a weight family that extinguishes a
/// whole layer is a configuration pathology worth surfacing.
inline torch::Tensor weighted_layer_loss(
    const torch::Tensor& values, const torch::Tensor& weights,
    AdaptiveConfig::LocationAggregation aggregation) {
  if (values.sizes() != weights.sizes())
    throw InvalidInputError("weighted_layer_loss: size mismatch");
  auto total = weights.sum();
  if (!(total.item<double>() > 0.0))
    throw NumericError("degenerate weights: all locations weighted zero");
  auto loss = (values * (weights / total)).sum();
  if (aggregation == AdaptiveConfig::LocationAggregation::kSummed)
    loss = loss * static_cast<double>(values.size(0));
  return loss;
}

struct LayerWeightStats {
  std::int64_t layer_id = 0;
  double min = 1.0;
  double mean = 1.0;
  double max = 1.0;
};

struct StackLossDetail {
  torch::Tensor loss;  // scalar
  std::vector<torch::Tensor> per_location_nce;  // per layer, [S]
  std::vector<torch::Tensor> weights;           // per layer, [S], detached
  std::vector<LayerWeightStats> weight_stats;
};

namespace detail {

/// Shared core of patch_nce_loss / sp_loss / asp_loss. `adaptive` null means
/// uniform weights. When the schedule yields g == 0 (or the zero family is
/// configured) the exact uniform path runs, so SP and early-phase ASP are
/// bitwise identical.
inline StackLossDetail nce_stack_loss(const EmbeddingStack& anchors,
                                      const EmbeddingStack& keys,
                                      const ContrastiveConfig& cfg,
                                      const AdaptiveConfig* adaptive) {
  if (!(cfg.temperature > 0.0))
    throw ConfigError("temperature must be positive");
  anchors.validate(kLooseUnitNormTol);
  keys.validate(kLooseUnitNormTol);
  check_aligned(anchors, keys);

  double g = 0.0;
  bool weights_active = false;
  if (adaptive != nullptr) {
    adaptive->validate();
    g = schedule_fn(adaptive->progress(), *adaptive);
    weights_active = g > 0.0 && adaptive->weight_family != WeightFamily::kZero;
  }

  StackLossDetail out;
  std::vector<torch::Tensor> layer_losses;
  layer_losses.reserve(anchors.layers.size());
  for (std::size_t i = 0; i < anchors.layers.size(); ++i) {
    const auto& a = anchors.layers[i];
    const auto& k = keys.layers[i];
    auto nce = info_nce_grid(a.embeddings, k.embeddings, cfg.temperature);
    const auto S = nce.size(0);
    torch::Tensor w;
    torch::Tensor layer_loss;
    if (weights_active) {
      // Anchor-positive cosine similarities; weights are constants within
      // one step (no gradient flows through them).
      auto sims = (a.embeddings.detach() * k.embeddings.detach())
                      .sum(-1)
                      .clamp(-1.0, 1.0);
      w = (1.0 - g) + g * weight_fn(sims, *adaptive);
      layer_loss = weighted_layer_loss(nce, w, adaptive->aggregation);
    } else {
      w = torch::ones({S}, nce.options().requires_grad(false));
      layer_loss = nce.mean();
    }
    LayerWeightStats ws;
    ws.layer_id = a.layer_id;
    ws.min = w.min().item<double>();
    ws.mean = w.mean().item<double>();
    ws.max = w.max().item<double>();
    out.weight_stats.push_back(ws);
    out.per_location_nce.push_back(nce);
    out.weights.push_back(w.detach());
    layer_losses.push_back(layer_loss);
  }
  out.loss = torch::stack(layer_losses).mean();
  return out;
}

}  // namespace detail

/// L_PatchNCE = InfoNCE(embeddings of the output, embeddings of the input);
/// positives are same-location input patches, negatives the other sampled
/// input patches. Mean over locations and layers.
inline torch::Tensor patch_nce_loss(const EmbeddingStack& output_embeds,
                                    const EmbeddingStack& input_embeds,
                                    const ContrastiveConfig& cfg) {
  return detail::nce_stack_loss(output_embeds, input_embeds, cfg, nullptr)
      .loss;
}

/// L_SP: the PatchNCE contract applied against the groundtruth target image
/// instead of the input.
inline torch::Tensor sp_loss(const EmbeddingStack& output_embeds,
                             const EmbeddingStack& gt_embeds,
                             const ContrastiveConfig& cfg) {
  return detail::nce_stack_loss(output_embeds, gt_embeds, cfg, nullptr).loss;
}

/// L_ASP: SP with per-location weights w_t, normalized per layer so the
/// weighting redistributes rather than rescales the loss. Weights are
/// detached from the graph.
inline StackLossDetail asp_loss_detailed(const EmbeddingStack& output_embeds,
                                         const EmbeddingStack& gt_embeds,
                                         const ContrastiveConfig& cfg,
                                         const AdaptiveConfig& adaptive) {
  return detail::nce_stack_loss(output_embeds, gt_embeds, cfg, &adaptive);
}

inline torch::Tensor asp_loss(const EmbeddingStack& output_embeds,
                              const EmbeddingStack& gt_embeds,
                              const ContrastiveConfig& cfg,
                              const AdaptiveConfig& adaptive) {
  return asp_loss_detailed(output_embeds, gt_embeds, cfg, adaptive).loss;
}

/// Anchor-positive cosine similarities of one layer at the sampled
/// locations.
struct SimilarityMap {
  std::int64_t layer_id = 0;
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;
  torch::Tensor locations;  // int64 [S]
  torch::Tensor values;     // [S] in [-1, 1], location order

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "asp.similarity_map/1";
    j["layer_id"] = layer_id;
    j["grid"] = {grid_h, grid_w};
    auto locs = locations.to(torch::kLong).contiguous();
    auto vals = values.to(torch::kDouble).contiguous();
    std::vector<std::int64_t> lv(locs.data_ptr<std::int64_t>(),
                                 locs.data_ptr<std::int64_t>() + locs.numel());
    std::vector<double> vv(vals.data_ptr<double>(),
                           vals.data_ptr<double>() + vals.numel());
    j["locations"] = lv;
    j["values"] = vv;
    return j;
  }
};

/// C_s = z_out^s . z_gt^s at every sampled location of the layer with the
/// given id.
inline SimilarityMap similarity_heatmap(const EmbeddingStack& output_embeds,
                                        const EmbeddingStack& gt_embeds,
                                        std::int64_t layer_id) {
  output_embeds.validate(kLooseUnitNormTol);
  gt_embeds.validate(kLooseUnitNormTol);
  check_aligned(output_embeds, gt_embeds);
  for (std::size_t i = 0; i < output_embeds.layers.size(); ++i) {
    const auto& a = output_embeds.layers[i];
    if (a.layer_id != layer_id) continue;
    const auto& k = gt_embeds.layers[i];
    SimilarityMap map;
    map.layer_id = layer_id;
    map.grid_h = a.grid_h;
    map.grid_w = a.grid_w;
    map.locations = a.locations.clone();
    map.values =
        (a.embeddings * k.embeddings).sum(-1).clamp(-1.0, 1.0).detach();
    return map;
  }
  throw InvalidInputError("similarity_heatmap: no layer with id " +
                          std::to_string(layer_id));
}

/// Histogram of similarity values over uniform bins spanning [-1, 1].
inline std::vector<std::int64_t> similarity_histogram(
    const std::vector<SimilarityMap>& maps, std::int64_t bins) {
  if (bins < 1) throw ConfigError("histogram needs bins >= 1");
  std::int64_t total = 0;
  for (const auto& m : maps) total += m.values.numel();
  if (total == 0)
    throw DataError("similarity_histogram: no similarity values");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
  for (const auto& m : maps) {
    auto vals = m.values.to(torch::kDouble).contiguous();
    const double* p = vals.data_ptr<double>();
    for (std::int64_t i = 0; i < vals.numel(); ++i) {
      double v = std::clamp(p[i], -1.0, 1.0);
      auto bin = static_cast<std::int64_t>((v + 1.0) / 2.0 * bins);
      bin = std::clamp<std::int64_t>(bin, 0, bins - 1);
      ++counts[static_cast<std::size_t>(bin)];
    }
  }
  return counts;
}

inline nlohmann::ordered_json histogram_to_json(
    const std::vector<std::int64_t>& counts) {
  nlohmann::ordered_json j;
  j["schema"] = "asp.similarity_histogram/1";
  j["bins"] = counts.size();
  j["range"] = {-1.0, 1.0};
  j["counts"] = counts;
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  j["total"] = total;
  return j;
}

}  // namespace asp
