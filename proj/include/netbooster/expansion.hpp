#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "netbooster/graph.hpp"

namespace netbooster {

enum class BlockType { inverted_residual, basic, bottleneck };
enum class TargetLocation { uniform, first, middle, last };

inline const char* to_string(BlockType t) {
  switch (t) {
    case BlockType::inverted_residual: return "inverted_residual";
    case BlockType::basic: return "basic";
    case BlockType::bottleneck: return "bottleneck";
  }
  return "?";
}

inline const char* to_string(TargetLocation l) {
  switch (l) {
    case TargetLocation::uniform: return "uniform";
    case TargetLocation::first: return "first";
    case TargetLocation::middle: return "middle";
    case TargetLocation::last: return "last";
  }
  return "?";
}

struct ExpansionPlan {
  BlockType block_type = BlockType::inverted_residual;
  double fraction = 0.5;
  std::int64_t ratio = 6;
  std::int64_t dw_kernel = 1;
  bool include_skip = true;
  ActKind activation = ActKind::prelu;
  TargetLocation location = TargetLocation::uniform;
  std::vector<std::size_t> explicit_targets;  // node indices; overrides selection

  void validate() const {
    if (fraction < 0.0 || fraction > 1.0)
      throw Error("expansion: fraction must lie in [0,1], got " + std::to_string(fraction));
    if (ratio < 1) throw Error("expansion: ratio must be >= 1, got " + std::to_string(ratio));
    if (dw_kernel < 1 || dw_kernel % 2 == 0)
      throw Error("expansion: depthwise kernel must be odd and >= 1, got " +
                  std::to_string(dw_kernel));
  }
};

/// Node indices eligible for replacement: pointwise (1x1, stride-1,
/// non-grouped) convs and dense layers. Spatial convs and depthwise convs
/// stay as they are.
template <class S>
std::vector<std::size_t> expandable_layers(const ModelGraph<S>& g) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (const auto* l = std::get_if<LayerSpec>(&g.nodes[i])) {
      if (l->kind == LayerKind::conv && l->groups == 1 && l->kernel == 1 && l->stride == 1)
        out.push_back(i);
      if (l->kind == LayerKind::dense) out.push_back(i);
    }
  }
  return out;
}

/// Which of E eligible layers to expand. n = round(fraction*E); the uniform
/// rule picks ranks floor(i*E/n) so choices spread evenly through the depth.
inline std::vector<std::size_t> select_targets(std::size_t eligible, double fraction,
                                               TargetLocation location) {
  if (fraction < 0.0 || fraction > 1.0)
    throw Error("expansion: fraction must lie in [0,1], got " + std::to_string(fraction));
  const auto E = static_cast<std::int64_t>(eligible);
  std::int64_t n = std::llround(fraction * static_cast<double>(E));
  n = std::clamp<std::int64_t>(n, 0, E);
  std::vector<std::size_t> ranks;
  ranks.reserve(static_cast<std::size_t>(n));
  switch (location) {
    case TargetLocation::uniform:
      for (std::int64_t i = 0; i < n; ++i)
        ranks.push_back(static_cast<std::size_t>(i * E / n));
      break;
    case TargetLocation::first:
      for (std::int64_t i = 0; i < n; ++i) ranks.push_back(static_cast<std::size_t>(i));
      break;
    case TargetLocation::middle:
      for (std::int64_t i = 0; i < n; ++i)
        ranks.push_back(static_cast<std::size_t>((E - n) / 2 + i));
      break;
    case TargetLocation::last:
      for (std::int64_t i = 0; i < n; ++i) ranks.push_back(static_cast<std::size_t>(E - n + i));
      break;
  }
  return ranks;
}

/// 1 + sum (k_i - 1) * prod of strides before layer i. Dense layers count
/// as kernel 1. A single layer's field is just its kernel extent.
inline std::int64_t receptive_field(const std::vector<LayerSpec>& layers) {
  std::int64_t rf = 1, jump = 1;
  for (const LayerSpec& l : layers) {
    std::int64_t k = 1, s = 1;
    if (l.kind == LayerKind::conv) {
      k = l.kernel;
      s = l.stride;
    }
    rf += (k - 1) * jump;
    jump *= s;
  }
  return rf;
}

/// Builds the replacement block for one layer. Padding stays on the first
/// block layer and every block layer runs at stride 1, so the block is
/// exactly collapsible later. Bias flags are inherited from the replaced
/// layer so the collapsed result is structurally identical to it.
inline BlockSpec expand_layer(const LayerSpec& replaced, const ExpansionPlan& plan) {
  plan.validate();
  BlockSpec b;
  b.replaced = replaced;
  const LayerSpec act = make_act(plan.activation, 0.0);
  if (replaced.kind == LayerKind::dense) {
    const std::int64_t in = replaced.in_features, out = replaced.out_features;
    const std::int64_t h = plan.block_type == BlockType::bottleneck
                               ? std::max<std::int64_t>(1, in / plan.ratio)
                               : plan.ratio * in;
    b.layers.push_back(make_dense(in, h, replaced.has_bias));
    b.layers.push_back(act);
    b.layers.push_back(make_dense(h, out, replaced.has_bias));
    b.skip = plan.include_skip && in == out;
    return b;
  }
  if (replaced.kind != LayerKind::conv || replaced.groups != 1)
    throw Error("expansion: only pointwise convs and dense layers can be expanded");
  if (replaced.stride != 1)
    throw Error("expansion: strided convs cannot be expanded (stride " +
                std::to_string(replaced.stride) + ")");
  const std::int64_t in = replaced.in_ch, out = replaced.out_ch;
  const bool bias = replaced.has_bias;
  switch (plan.block_type) {
    case BlockType::inverted_residual: {
      const std::int64_t h = plan.ratio * in;
      b.layers.push_back(make_conv(in, h, 1, 1, replaced.padding, 1, bias));
      b.layers.push_back(act);
      b.layers.push_back(make_conv(h, h, plan.dw_kernel, 1, 0, h, bias));
      b.layers.push_back(act);
      b.layers.push_back(make_conv(h, out, 1, 1, 0, 1, bias));
      break;
    }
    case BlockType::basic: {
      const std::int64_t h = plan.ratio * in;
      b.layers.push_back(make_conv(in, h, 3, 1, replaced.padding, 1, bias));
      b.layers.push_back(act);
      b.layers.push_back(make_conv(h, out, 3, 1, 0, 1, bias));
      break;
    }
    case BlockType::bottleneck: {
      const std::int64_t h = std::max<std::int64_t>(1, in / plan.ratio);
      b.layers.push_back(make_conv(in, h, 1, 1, replaced.padding, 1, bias));
      b.layers.push_back(act);
      b.layers.push_back(make_conv(h, h, plan.dw_kernel, 1, 0, 1, bias));
      b.layers.push_back(act);
      b.layers.push_back(make_conv(h, out, 1, 1, 0, 1, bias));
      break;
    }
  }
  b.skip = plan.include_skip && in == out && 2 * replaced.padding == replaced.kernel - 1;
  return b;
}

/// Replaces the planned layers with fresh randomly initialized blocks. The
/// receptive-field check rejects any block shape that would see a different
/// input window than the layer it stands in for.
template <class S>
ModelGraph<S> expand_model(const ModelGraph<S>& g, const ExpansionPlan& plan,
                           std::mt19937_64& rng) {
  plan.validate();
  if (g.provenance != Provenance::vanilla)
    throw Error("expand: model '" + g.name + "' is already " + to_string(g.provenance) +
                "; only vanilla models can be expanded");
  const std::vector<std::size_t> eligible = expandable_layers(g);
  std::vector<std::size_t> targets;
  if (!plan.explicit_targets.empty()) {
    targets = plan.explicit_targets;
    std::sort(targets.begin(), targets.end());
    if (std::adjacent_find(targets.begin(), targets.end()) != targets.end())
      throw Error("expand: duplicate target node");
    for (std::size_t t : targets)
      if (std::find(eligible.begin(), eligible.end(), t) == eligible.end())
        throw Error("expand: node " + std::to_string(t) + " is not an expandable layer");
  } else {
    for (std::size_t rank : select_targets(eligible.size(), plan.fraction, plan.location))
      targets.push_back(eligible[rank]);
  }
  if (targets.empty())
    throw Error("expand: plan selects zero layers (fraction " + std::to_string(plan.fraction) +
                " of " + std::to_string(eligible.size()) + " eligible)");

  ModelGraph<S> out;
  out.name = g.name;
  out.provenance = Provenance::expanded;
  out.input_shape = g.input_shape;
  out.nodes = g.nodes;
  for (std::size_t t : targets) {
    const LayerSpec& replaced = std::get<LayerSpec>(g.nodes[t]);
    BlockSpec block = expand_layer(replaced, plan);
    const std::int64_t rf_block = receptive_field(block.layers);
    const std::int64_t rf_orig = receptive_field({replaced});
    if (rf_block != rf_orig)
      throw Error("expand: " + node_label(t, g.nodes[t]) + ": " + to_string(plan.block_type) +
                  " block would change the receptive field from " + std::to_string(rf_orig) +
                  " to " + std::to_string(rf_block) + "; expansion rejected");
    out.nodes[t] = std::move(block);
  }
  // Untouched nodes keep their tensors; replaced layers get fresh block
  // parameters, drawn in ascending node order for a reproducible expansion.
  for (const auto& [key, tensor] : g.params) {
    bool replaced_key = false;
    for (std::size_t t : targets)
      if (key.rfind(node_key(t) + ".", 0) == 0) replaced_key = true;
    if (!replaced_key) out.params[key] = tensor;
  }
  for (std::size_t t : targets) {
    const auto& block = std::get<BlockSpec>(out.nodes[t]);
    for (std::size_t j = 0; j < block.layers.size(); ++j)
      detail::init_layer_params(block.layers[j], node_key(t) + "." + std::to_string(j), out.params,
                                rng);
  }
  infer_shapes(out);  // validates the rebuilt graph end to end
  return out;
}

}  // namespace netbooster
