#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "netbooster/autodiff.hpp"
#include "netbooster/ops.hpp"
#include "netbooster/tensor.hpp"

namespace netbooster {

enum class LayerKind { conv, dense, act, affine, avgpool, flatten };
enum class ActKind { prelu, relu6_decay };
enum class Provenance { vanilla, expanded, contracted };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::dense: return "dense";
    case LayerKind::act: return "act";
    case LayerKind::affine: return "affine";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

inline const char* to_string(ActKind k) {
  switch (k) {
    case ActKind::prelu: return "prelu";
    case ActKind::relu6_decay: return "relu6_decay";
  }
  return "?";
}

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::vanilla: return "vanilla";
    case Provenance::expanded: return "expanded";
    case Provenance::contracted: return "contracted";
  }
  return "?";
}

/// One primitive layer. Unused fields stay at their defaults; kind decides
/// which ones are read. Kept flat so serialization and signatures are
/// a single switch.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::int64_t in_ch = 0, out_ch = 0;      // conv
  std::int64_t kernel = 1, stride = 1, padding = 0, groups = 1;
  std::int64_t in_features = 0, out_features = 0;  // dense
  bool has_bias = true;                    // conv, dense
  ActKind act = ActKind::prelu;            // act
  double alpha = 0.0;                      // act: blend toward identity
  std::int64_t channels = 0;               // affine
  std::int64_t window = 0;                 // avgpool: 0 means global
  std::int64_t pool_stride = 1;            // avgpool

  bool operator==(const LayerSpec&) const = default;

  void validate(const std::string& where) const {
    auto fail = [&](const std::string& msg) { throw Error(where + ": " + msg); };
    switch (kind) {
      case LayerKind::conv:
        if (in_ch < 1 || out_ch < 1) fail("conv needs positive channel counts");
        if (kernel < 1 || kernel % 2 == 0)
          fail("conv kernel must be odd and >= 1, got " + std::to_string(kernel));
        if (stride < 1) fail("conv stride must be >= 1");
        if (padding < 0) fail("conv padding must be >= 0");
        if (groups < 1 || in_ch % groups != 0 || out_ch % groups != 0)
          fail("conv groups must divide in and out channels");
        break;
      case LayerKind::dense:
        if (in_features < 1 || out_features < 1) fail("dense needs positive feature counts");
        break;
      case LayerKind::act:
        if (alpha < 0.0 || alpha > 1.0)
          fail("activation alpha must lie in [0,1], got " + std::to_string(alpha));
        break;
      case LayerKind::affine:
        if (channels < 1) fail("affine needs a positive channel count");
        break;
      case LayerKind::avgpool:
        if (window < 0) fail("avgpool window must be >= 0 (0 = global)");
        if (window > 0 && pool_stride < 1) fail("avgpool stride must be >= 1");
        break;
      case LayerKind::flatten:
        break;
    }
  }
};

inline LayerSpec make_conv(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kernel,
                           std::int64_t stride, std::int64_t padding, std::int64_t groups,
                           bool bias) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.groups = groups;
  l.has_bias = bias;
  return l;
}

inline LayerSpec make_depthwise(std::int64_t ch, std::int64_t kernel, std::int64_t stride,
                                std::int64_t padding, bool bias) {
  return make_conv(ch, ch, kernel, stride, padding, ch, bias);
}

inline LayerSpec make_dense(std::int64_t in_features, std::int64_t out_features, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.in_features = in_features;
  l.out_features = out_features;
  l.has_bias = bias;
  return l;
}

inline LayerSpec make_act(ActKind kind, double alpha) {
  LayerSpec l;
  l.kind = LayerKind::act;
  l.act = kind;
  l.alpha = alpha;
  return l;
}

inline LayerSpec make_affine(std::int64_t channels) {
  LayerSpec l;
  l.kind = LayerKind::affine;
  l.channels = channels;
  return l;
}

inline LayerSpec make_avgpool(std::int64_t window, std::int64_t stride) {
  LayerSpec l;
  l.kind = LayerKind::avgpool;
  l.window = window;
  l.pool_stride = stride;
  return l;
}

inline LayerSpec make_flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

/// A residual block standing in for one original layer. `replaced` records
/// that layer so contraction can check it rebuilt the exact same thing.
struct BlockSpec {
  std::vector<LayerSpec> layers;
  bool skip = false;
  LayerSpec replaced;
};

using NodeSpec = std::variant<LayerSpec, BlockSpec>;

template <class S>
struct ModelGraph {
  std::string name;
  Provenance provenance = Provenance::vanilla;
  Shape input_shape;  // [C,H,W] for images, [F] for flat vectors
  std::vector<NodeSpec> nodes;
  std::map<std::string, Tensor<S>> params;
};

inline std::string node_key(std::size_t idx) { return "n" + std::to_string(idx); }

inline std::string node_label(std::size_t idx, const NodeSpec& node) {
  if (const auto* l = std::get_if<LayerSpec>(&node))
    return node_key(idx) + "(" + to_string(l->kind) + ")";
  return node_key(idx) + "(block)";
}

// ---------------------------------------------------------------------------
// Shape inference

inline Shape layer_output_shape(const LayerSpec& l, const Shape& in, const std::string& where) {
  auto fail = [&](const std::string& msg) { throw Error(where + ": " + msg); };
  switch (l.kind) {
    case LayerKind::conv: {
      if (in.size() != 4) fail("conv expects a [N,C,H,W] input, got " + shape_str(in));
      if (in[1] != l.in_ch)
        fail("conv expects " + std::to_string(l.in_ch) + " channels, got " + shape_str(in));
      return {in[0], l.out_ch, detail::conv_out_extent(in[2], l.kernel, l.stride, l.padding),
              detail::conv_out_extent(in[3], l.kernel, l.stride, l.padding)};
    }
    case LayerKind::dense: {
      if (in.size() != 2) fail("dense expects a [N,F] input, got " + shape_str(in));
      if (in[1] != l.in_features)
        fail("dense expects " + std::to_string(l.in_features) + " features, got " + shape_str(in));
      return {in[0], l.out_features};
    }
    case LayerKind::act:
      return in;
    case LayerKind::affine: {
      if (in.size() != 4) fail("affine expects a [N,C,H,W] input, got " + shape_str(in));
      if (in[1] != l.channels)
        fail("affine expects " + std::to_string(l.channels) + " channels, got " + shape_str(in));
      return in;
    }
    case LayerKind::avgpool: {
      if (in.size() != 4) fail("avgpool expects a [N,C,H,W] input, got " + shape_str(in));
      const std::int64_t wh = l.window == 0 ? in[2] : l.window;
      const std::int64_t ww = l.window == 0 ? in[3] : l.window;
      const std::int64_t s = l.window == 0 ? 1 : l.pool_stride;
      if (wh > in[2] || ww > in[3]) fail("avgpool window exceeds input " + shape_str(in));
      if ((in[2] - wh) % s != 0 || (in[3] - ww) % s != 0)
        fail("avgpool window/stride do not tile input " + shape_str(in) + " exactly");
      return {in[0], in[1], (in[2] - wh) / s + 1, (in[3] - ww) / s + 1};
    }
    case LayerKind::flatten: {
      if (in.size() < 2) fail("flatten expects a batch axis, got " + shape_str(in));
      std::int64_t rest = 1;
      for (std::size_t d = 1; d < in.size(); ++d) rest *= in[d];
      return {in[0], rest};
    }
  }
  fail("unknown layer kind");
  return {};
}

inline Shape node_output_shape(const NodeSpec& node, const Shape& in, const std::string& where) {
  if (const auto* l = std::get_if<LayerSpec>(&node)) {
    l->validate(where);
    return layer_output_shape(*l, in, where);
  }
  const auto& b = std::get<BlockSpec>(node);
  if (b.layers.empty()) throw Error(where + ": block has no layers");
  Shape cur = in;
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const std::string sub = where + "." + std::to_string(i);
    b.layers[i].validate(sub);
    cur = layer_output_shape(b.layers[i], cur, sub);
  }
  if (b.skip && cur != in)
    throw Error(where + ": skip connection needs matching shapes, block maps " + shape_str(in) +
                " to " + shape_str(cur));
  return cur;
}

/// Output shape after every node for a batch of `batch`. Also serves as the
/// whole-graph validity check.
template <class S>
std::vector<Shape> infer_shapes(const ModelGraph<S>& g, std::int64_t batch = 1) {
  if (g.input_shape.size() != 3 && g.input_shape.size() != 1)
    throw Error("model '" + g.name + "': input shape must be [C,H,W] or [F], got " +
                shape_str(g.input_shape));
  Shape cur;
  cur.push_back(batch);
  for (auto d : g.input_shape) cur.push_back(d);
  std::vector<Shape> out;
  out.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    cur = node_output_shape(g.nodes[i], cur, node_label(i, g.nodes[i]));
    out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

inline std::vector<std::pair<std::string, Shape>> layer_param_shapes(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv: {
      std::vector<std::pair<std::string, Shape>> out = {
          {"weight", {l.out_ch, l.in_ch / l.groups, l.kernel, l.kernel}}};
      if (l.has_bias) out.push_back({"bias", {l.out_ch}});
      return out;
    }
    case LayerKind::dense: {
      std::vector<std::pair<std::string, Shape>> out = {
          {"weight", {l.out_features, l.in_features}}};
      if (l.has_bias) out.push_back({"bias", {l.out_features}});
      return out;
    }
    case LayerKind::affine:
      return {{"scale", {l.channels}}, {"shift", {l.channels}}};
    default:
      return {};
  }
}

template <class S>
std::map<std::string, Shape> parameter_shapes(const ModelGraph<S>& g) {
  std::map<std::string, Shape> out;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (const auto* l = std::get_if<LayerSpec>(&g.nodes[i])) {
      for (auto& [suffix, shape] : layer_param_shapes(*l))
        out[node_key(i) + "." + suffix] = shape;
    } else {
      const auto& b = std::get<BlockSpec>(g.nodes[i]);
      for (std::size_t j = 0; j < b.layers.size(); ++j)
        for (auto& [suffix, shape] : layer_param_shapes(b.layers[j]))
          out[node_key(i) + "." + std::to_string(j) + "." + suffix] = shape;
    }
  }
  return out;
}

namespace detail {

inline std::int64_t layer_fan_in(const LayerSpec& l) {
  if (l.kind == LayerKind::conv) return (l.in_ch / l.groups) * l.kernel * l.kernel;
  return l.in_features;
}

template <class S>
void init_layer_params(const LayerSpec& l, const std::string& prefix,
                       std::map<std::string, Tensor<S>>& params, std::mt19937_64& rng) {
  for (auto& [suffix, shape] : layer_param_shapes(l)) {
    if (suffix == "weight") {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer_fan_in(l)));
      params[prefix + "." + suffix] = random_uniform<S>(shape, -bound, bound, rng);
    } else if (suffix == "scale") {
      params[prefix + "." + suffix] = Tensor<S>::ones(shape);
    } else {
      params[prefix + "." + suffix] = Tensor<S>::zeros(shape);
    }
  }
}

}  // namespace detail

/// Uniform Kaiming weights (bound sqrt(6/fan_in)), zero biases, identity
/// affines. Draw order is the node order, so one seed fixes the whole model.
template <class S>
void init_params(ModelGraph<S>& g, std::mt19937_64& rng) {
  g.params.clear();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (const auto* l = std::get_if<LayerSpec>(&g.nodes[i])) {
      detail::init_layer_params(*l, node_key(i), g.params, rng);
    } else {
      const auto& b = std::get<BlockSpec>(g.nodes[i]);
      for (std::size_t j = 0; j < b.layers.size(); ++j)
        detail::init_layer_params(b.layers[j], node_key(i) + "." + std::to_string(j), g.params,
                                  rng);
    }
  }
}

template <class S>
void check_params_complete(const ModelGraph<S>& g) {
  for (auto& [key, shape] : parameter_shapes(g)) {
    auto it = g.params.find(key);
    if (it == g.params.end()) throw Error("model '" + g.name + "': missing parameter '" + key + "'");
    if (it->second.shape != shape)
      throw Error("model '" + g.name + "': parameter '" + key + "' has shape " +
                  shape_str(it->second.shape) + ", expected " + shape_str(shape));
  }
}

// ---------------------------------------------------------------------------
// Forward

namespace detail {

template <class S>
const Tensor<S>* find_param(const ModelGraph<S>& g, const std::string& key) {
  auto it = g.params.find(key);
  return it == g.params.end() ? nullptr : &it->second;
}

template <class S>
const Tensor<S>& need_param(const ModelGraph<S>& g, const std::string& key) {
  const Tensor<S>* p = find_param(g, key);
  if (!p) throw Error("missing parameter '" + key + "'");
  return *p;
}

template <class S>
Tensor<S> apply_layer(const ModelGraph<S>& g, const LayerSpec& l, const std::string& prefix,
                      const Tensor<S>& x, GradientTape<S>* tape) {
  switch (l.kind) {
    case LayerKind::conv: {
      const Tensor<S>& w = need_param(g, prefix + ".weight");
      const Tensor<S>* b = l.has_bias ? &need_param(g, prefix + ".bias") : nullptr;
      Tensor<S> y = conv2d_forward(x, w, b, l.stride, l.padding, l.groups);
      if (tape) {
        if (l.has_bias) tape->register_param(prefix + ".bias", {l.out_ch});
        tape->register_param(prefix + ".weight", w.shape);
        tape->push_unary([x, w, prefix, l](const Tensor<S>& gy, GradientTape<S>& t) {
          t.add_param_grad(prefix + ".weight",
                           conv2d_weight_grad(gy, x, w.shape, l.stride, l.padding, l.groups));
          if (l.has_bias) t.add_param_grad(prefix + ".bias", conv2d_bias_grad(gy));
          return conv2d_input_grad(gy, w, x.shape, l.stride, l.padding, l.groups);
        });
      }
      return y;
    }
    case LayerKind::dense: {
      const Tensor<S>& w = need_param(g, prefix + ".weight");
      const Tensor<S>* b = l.has_bias ? &need_param(g, prefix + ".bias") : nullptr;
      Tensor<S> y = dense_forward(x, w, b);
      if (tape) {
        if (l.has_bias) tape->register_param(prefix + ".bias", {l.out_features});
        tape->register_param(prefix + ".weight", w.shape);
        tape->push_unary([x, w, prefix, l](const Tensor<S>& gy, GradientTape<S>& t) {
          t.add_param_grad(prefix + ".weight", dense_weight_grad(gy, x));
          if (l.has_bias) t.add_param_grad(prefix + ".bias", dense_bias_grad(gy));
          return dense_input_grad(gy, w);
        });
      }
      return y;
    }
    case LayerKind::act: {
      const S a = static_cast<S>(l.alpha);
      Tensor<S> y = l.act == ActKind::prelu ? prelu_forward(x, a) : relu6_decay_forward(x, a);
      if (tape)
        tape->push_unary([x, a, kind = l.act](const Tensor<S>& gy, GradientTape<S>&) {
          return kind == ActKind::prelu ? prelu_input_grad(gy, x, a)
                                        : relu6_decay_input_grad(gy, x, a);
        });
      return y;
    }
    case LayerKind::affine: {
      const Tensor<S>& scale = need_param(g, prefix + ".scale");
      const Tensor<S>& shift = need_param(g, prefix + ".shift");
      Tensor<S> y = affine_forward(x, scale, shift);
      if (tape) {
        tape->register_param(prefix + ".scale", scale.shape);
        tape->register_param(prefix + ".shift", shift.shape);
        tape->push_unary([x, scale, prefix](const Tensor<S>& gy, GradientTape<S>& t) {
          Tensor<S> gs, gb;
          affine_param_grads(gy, x, gs, gb);
          t.add_param_grad(prefix + ".scale", std::move(gs));
          t.add_param_grad(prefix + ".shift", std::move(gb));
          return affine_input_grad(gy, scale);
        });
      }
      return y;
    }
    case LayerKind::avgpool: {
      Tensor<S> y = avgpool2d_forward(x, l.window, l.pool_stride);
      if (tape)
        tape->push_unary(
            [shape = x.shape, w = l.window, s = l.pool_stride](const Tensor<S>& gy,
                                                               GradientTape<S>&) {
              return avgpool2d_input_grad(gy, shape, w, s);
            });
      return y;
    }
    case LayerKind::flatten: {
      Tensor<S> y = flatten_forward(x);
      if (tape)
        tape->push_unary([shape = x.shape](const Tensor<S>& gy, GradientTape<S>&) {
          Tensor<S> gx = gy;
          gx.shape = shape;
          return gx;
        });
      return y;
    }
  }
  throw Error("unknown layer kind");
}

}  // namespace detail

/// Evaluates a single node on an explicit input. Blocks with a skip record
/// dup/add markers on the tape around their layer ops.
template <class S>
Tensor<S> node_forward(const ModelGraph<S>& g, std::size_t idx, const Tensor<S>& x,
                       GradientTape<S>* tape = nullptr) {
  if (idx >= g.nodes.size())
    throw Error("model '" + g.name + "': node index " + std::to_string(idx) + " out of range");
  if (const auto* l = std::get_if<LayerSpec>(&g.nodes[idx]))
    return detail::apply_layer(g, *l, node_key(idx), x, tape);
  const auto& b = std::get<BlockSpec>(g.nodes[idx]);
  if (b.skip && tape) tape->push_dup();
  Tensor<S> cur = x;
  for (std::size_t j = 0; j < b.layers.size(); ++j)
    cur = detail::apply_layer(g, b.layers[j], node_key(idx) + "." + std::to_string(j), cur, tape);
  if (b.skip) {
    if (!cur.same_shape(x))
      throw Error(node_label(idx, g.nodes[idx]) + ": skip shape mismatch, " + shape_str(x.shape) +
                  " vs " + shape_str(cur.shape));
    cur = cur + x;
    if (tape) tape->push_add();
  }
  return cur;
}

template <class S>
Tensor<S> forward(const ModelGraph<S>& g, const Tensor<S>& x, GradientTape<S>* tape = nullptr) {
  Shape expect;
  expect.push_back(x.shape.empty() ? 0 : x.shape[0]);
  for (auto d : g.input_shape) expect.push_back(d);
  if (x.shape != expect)
    throw Error("model '" + g.name + "': input shape " + shape_str(x.shape) +
                " does not match model input " + shape_str(g.input_shape) + " (plus batch axis)");
  Tensor<S> cur = x;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) cur = node_forward(g, i, cur, tape);
  return cur;
}

/// Output of every node for one input batch (node i's output at index i).
template <class S>
std::vector<Tensor<S>> forward_trace(const ModelGraph<S>& g, const Tensor<S>& x) {
  std::vector<Tensor<S>> out;
  out.reserve(g.nodes.size());
  Tensor<S> cur = x;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    cur = node_forward(g, i, cur);
    out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Complexity

struct NodeCost {
  std::string label;
  std::int64_t params = 0;
  std::int64_t flops = 0;  // multiply-accumulates per sample; 1 MAC = 1 FLOP
  bool operator==(const NodeCost&) const = default;
};

struct ComplexityReport {
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
  std::vector<NodeCost> nodes;
  bool operator==(const ComplexityReport&) const = default;
};

namespace detail {

inline std::int64_t layer_param_count(const LayerSpec& l) {
  std::int64_t n = 0;
  for (auto& [suffix, shape] : layer_param_shapes(l)) n += shape_numel(shape);
  return n;
}

// Per-sample multiply-accumulates. Activations, pooling and reshapes count 0;
// bias adds are not counted.
inline std::int64_t layer_flops(const LayerSpec& l, const Shape& out) {
  switch (l.kind) {
    case LayerKind::conv:
      return out[1] * out[2] * out[3] * (l.kernel * l.kernel * (l.in_ch / l.groups));
    case LayerKind::dense:
      return l.in_features * l.out_features;
    case LayerKind::affine:
      return out[1] * out[2] * out[3];
    default:
      return 0;
  }
}

}  // namespace detail

template <class S>
ComplexityReport count_complexity(const ModelGraph<S>& g) {
  ComplexityReport r;
  Shape cur;
  cur.push_back(1);
  for (auto d : g.input_shape) cur.push_back(d);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    NodeCost cost;
    cost.label = node_label(i, g.nodes[i]);
    if (const auto* l = std::get_if<LayerSpec>(&g.nodes[i])) {
      cur = layer_output_shape(*l, cur, cost.label);
      cost.params = detail::layer_param_count(*l);
      cost.flops = detail::layer_flops(*l, cur);
    } else {
      const auto& b = std::get<BlockSpec>(g.nodes[i]);
      for (std::size_t j = 0; j < b.layers.size(); ++j) {
        cur = layer_output_shape(b.layers[j], cur, cost.label);
        cost.params += detail::layer_param_count(b.layers[j]);
        cost.flops += detail::layer_flops(b.layers[j], cur);
      }
    }
    r.total_params += cost.params;
    r.total_flops += cost.flops;
    r.nodes.push_back(std::move(cost));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Architecture identity

namespace detail {

inline void signature_line(std::ostringstream& os, const LayerSpec& l) {
  os << to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv:
      os << " in=" << l.in_ch << " out=" << l.out_ch << " k=" << l.kernel << " s=" << l.stride
         << " p=" << l.padding << " g=" << l.groups << " bias=" << (l.has_bias ? 1 : 0);
      break;
    case LayerKind::dense:
      os << " in=" << l.in_features << " out=" << l.out_features
         << " bias=" << (l.has_bias ? 1 : 0);
      break;
    case LayerKind::act:
      os << " " << to_string(l.act) << " a=" << l.alpha;
      break;
    case LayerKind::affine:
      os << " c=" << l.channels;
      break;
    case LayerKind::avgpool:
      os << " w=" << l.window << " s=" << l.pool_stride;
      break;
    case LayerKind::flatten:
      break;
  }
  os << "\n";
}

}  // namespace detail

/// Canonical text form of the computation graph (no parameter values, no
/// provenance). Two models compute the same function family iff this matches.
template <class S>
std::string architecture_signature(const ModelGraph<S>& g) {
  std::ostringstream os;
  os << "input";
  for (auto d : g.input_shape) os << " " << d;
  os << "\n";
  for (const auto& node : g.nodes) {
    if (const auto* l = std::get_if<LayerSpec>(&node)) {
      detail::signature_line(os, *l);
    } else {
      const auto& b = std::get<BlockSpec>(node);
      os << "block skip=" << (b.skip ? 1 : 0) << " {\n";
      for (const auto& l : b.layers) {
        os << "  ";
        detail::signature_line(os, l);
      }
      os << "}\n";
    }
  }
  return os.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class S>
std::uint64_t architecture_hash(const ModelGraph<S>& g) {
  return fnv1a64(architecture_signature(g));
}

// ---------------------------------------------------------------------------
// Presets

/// Small depthwise-separable CNN sized for single-digit-minute CPU training.
/// Stem 3x3, seven depthwise+pointwise units, global pool, classifier. The
/// pointwise convs and the classifier are the layers expansion can target.
template <class S>
ModelGraph<S> make_desk_tnn(std::int64_t in_ch, std::int64_t num_classes) {
  ModelGraph<S> g;
  g.name = "desk-tnn";
  g.provenance = Provenance::vanilla;
  g.input_shape = {in_ch, 12, 12};
  g.nodes.push_back(make_conv(in_ch, 8, 3, 1, 1, 1, true));
  g.nodes.push_back(make_act(ActKind::prelu, 0.0));
  struct Unit {
    std::int64_t in, out, stride;
  };
  const Unit units[] = {{8, 16, 1},  {16, 16, 2}, {16, 24, 1}, {24, 24, 1},
                        {24, 32, 2}, {32, 32, 1}, {32, 32, 1}};
  for (const Unit& u : units) {
    g.nodes.push_back(make_depthwise(u.in, 3, u.stride, 1, true));
    g.nodes.push_back(make_act(ActKind::prelu, 0.0));
    g.nodes.push_back(make_conv(u.in, u.out, 1, 1, 0, 1, true));
    g.nodes.push_back(make_act(ActKind::prelu, 0.0));
  }
  g.nodes.push_back(make_avgpool(0, 1));
  g.nodes.push_back(make_flatten());
  g.nodes.push_back(make_dense(32, num_classes, true));
  return g;
}

/// Two-layer perceptron for flat-vector data; used by smoke tests and as the
/// dense-path expansion target.
template <class S>
ModelGraph<S> make_mlp(std::int64_t in_features, std::int64_t hidden, std::int64_t num_classes) {
  ModelGraph<S> g;
  g.name = "mlp";
  g.provenance = Provenance::vanilla;
  g.input_shape = {in_features};
  g.nodes.push_back(make_dense(in_features, hidden, true));
  g.nodes.push_back(make_act(ActKind::prelu, 0.0));
  g.nodes.push_back(make_dense(hidden, num_classes, true));
  return g;
}

}  // namespace netbooster
