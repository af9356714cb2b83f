#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netbooster/graph.hpp"
#include "netbooster/tensor.hpp"

namespace netbooster {

// Collapsing a run of linear layers into one layer. Kernel indices follow
// the layer order: w1 runs first, w2 consumes w1's output. All arithmetic
// here is double; callers cast to the model's scalar at the very end.
//
// Exactness conditions, checked by fuse_chain:
//   - every conv runs at stride 1 (collapsing across strides is out of scope);
//   - only the first chain element may carry padding (and must be a conv);
//   - depthwise convs must have kernel 1 (a per-channel scale);
//   - activations must already be identity (alpha == 1) to appear at all.
// docs/fusion.md derives the merged-kernel index bounds used here.

namespace fusion {

/// Merged kernel of w2(w1(x)) for plain convs: size k1+k2-1, entry (i,j) sums
/// w1[n,c,i-s,j-t]*w2[o,n,s,t] over the s,t for which both factors exist:
/// s in [max(0, i-k1+1), min(k2-1, i)], likewise t with j.
inline Tensor<double> merge_kernels(const Tensor<double>& w1, const Tensor<double>& w2) {
  const std::int64_t C1 = w1.shape[0], C0 = w1.shape[1], K1 = w1.shape[2];
  const std::int64_t C2 = w2.shape[0], K2 = w2.shape[2];
  if (w2.shape[1] != C1)
    throw Error("merge_kernels: channel mismatch " + shape_str(w1.shape) + " then " +
                shape_str(w2.shape));
  const std::int64_t KM = K1 + K2 - 1;
  Tensor<double> m = Tensor<double>::zeros({C2, C0, KM, KM});
  for (std::int64_t o = 0; o < C2; ++o)
    for (std::int64_t c = 0; c < C0; ++c)
      for (std::int64_t i = 0; i < KM; ++i) {
        const std::int64_t s_lo = std::max<std::int64_t>(0, i - K1 + 1);
        const std::int64_t s_hi = std::min<std::int64_t>(K2 - 1, i);
        for (std::int64_t j = 0; j < KM; ++j) {
          const std::int64_t t_lo = std::max<std::int64_t>(0, j - K1 + 1);
          const std::int64_t t_hi = std::min<std::int64_t>(K2 - 1, j);
          double acc = 0.0;
          for (std::int64_t n = 0; n < C1; ++n)
            for (std::int64_t s = s_lo; s <= s_hi; ++s)
              for (std::int64_t t = t_lo; t <= t_hi; ++t)
                acc += w1(n, c, i - s, j - t) * w2(o, n, s, t);
          m(o, c, i, j) = acc;
        }
      }
  return m;
}

/// Bias of the merged conv: the first layer's bias is constant over space,
/// so the second conv turns it into b2[o] + sum_n b1[n] * sum_{s,t} w2[o,n,s,t].
/// Valid only when the second conv has no padding.
inline Tensor<double> merge_bias(const Tensor<double>& b1, const Tensor<double>& w2,
                                 const Tensor<double>& b2) {
  const std::int64_t C2 = w2.shape[0], C1 = w2.shape[1], K2 = w2.shape[2];
  Tensor<double> out = b2;
  for (std::int64_t o = 0; o < C2; ++o)
    for (std::int64_t n = 0; n < C1; ++n) {
      double wsum = 0.0;
      for (std::int64_t s = 0; s < K2; ++s)
        for (std::int64_t t = 0; t < K2; ++t) wsum += w2(o, n, s, t);
      out.data[o] += b1.data[n] * wsum;
    }
  return out;
}

/// Kernel-1 depthwise conv (a per-channel scale) folded into the conv that
/// follows it: the channel sum collapses to n == m.
inline Tensor<double> merge_depthwise_then_conv(const Tensor<double>& dw,
                                                const Tensor<double>& w2) {
  const std::int64_t C = dw.shape[0], K1 = dw.shape[2];
  const std::int64_t C2 = w2.shape[0], K2 = w2.shape[2];
  if (dw.shape[1] != 1 || w2.shape[1] != C)
    throw Error("fuse_depthwise: expected depthwise " + shape_str(dw.shape) + " then conv over " +
                std::to_string(C) + " channels, got " + shape_str(w2.shape));
  if (K1 != 1)
    throw Error("fuse_depthwise: unsupported depthwise kernel " + std::to_string(K1) +
                "; only kernel 1 (per-channel scale) folds exactly here");
  const std::int64_t KM = K1 + K2 - 1;
  Tensor<double> m = Tensor<double>::zeros({C2, C, KM, KM});
  for (std::int64_t o = 0; o < C2; ++o)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < KM; ++i) {
        const std::int64_t s_lo = std::max<std::int64_t>(0, i - K1 + 1);
        const std::int64_t s_hi = std::min<std::int64_t>(K2 - 1, i);
        for (std::int64_t j = 0; j < KM; ++j) {
          const std::int64_t t_lo = std::max<std::int64_t>(0, j - K1 + 1);
          const std::int64_t t_hi = std::min<std::int64_t>(K2 - 1, j);
          double acc = 0.0;
          for (std::int64_t s = s_lo; s <= s_hi; ++s)
            for (std::int64_t t = t_lo; t <= t_hi; ++t)
              acc += dw(c, 0, i - s, j - t) * w2(o, c, s, t);
          m(o, c, i, j) = acc;
        }
      }
  return m;
}

/// [C,1,k,k] depthwise weights as an ordinary [C,C,k,k] conv kernel.
inline Tensor<double> densify_depthwise(const Tensor<double>& dw) {
  const std::int64_t C = dw.shape[0], K = dw.shape[2];
  Tensor<double> out = Tensor<double>::zeros({C, C, K, K});
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i = 0; i < K; ++i)
      for (std::int64_t j = 0; j < K; ++j) out(c, c, i, j) = dw(c, 0, i, j);
  return out;
}

/// fused dense of w2(w1(x)): weights [out,in] so W = w2*w1, b = w2*b1 + b2.
inline void fuse_dense_pair(const Tensor<double>& w1, const Tensor<double>& b1,
                            const Tensor<double>& w2, const Tensor<double>& b2,
                            Tensor<double>& w_out, Tensor<double>& b_out) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::VectorXd;
  const std::int64_t H = w1.shape[0], IN = w1.shape[1], OUT = w2.shape[0];
  if (w2.shape[1] != H)
    throw Error("fuse_dense_pair: shape mismatch " + shape_str(w1.shape) + " then " +
                shape_str(w2.shape));
  Eigen::Map<const Mat> W1(w1.data.data(), H, IN), W2(w2.data.data(), OUT, H);
  Eigen::Map<const Vec> B1(b1.data.data(), H);
  w_out = Tensor<double>({OUT, IN});
  Eigen::Map<Mat>(w_out.data.data(), OUT, IN).noalias() = W2 * W1;
  b_out = b2;
  Eigen::Map<Vec>(b_out.data.data(), OUT).noalias() += W2 * B1;
}

enum class AffineSide { before, after };

/// Per-channel scale/shift absorbed into a conv. `before` rewrites
/// conv(scale*x + shift); `after` rewrites scale*conv(x) + shift. The
/// `before` case requires the conv to be unpadded and plain or depthwise.
inline void fold_affine(AffineSide side, const Tensor<double>& scale, const Tensor<double>& shift,
                        Tensor<double>& w, Tensor<double>& b, std::int64_t groups) {
  const std::int64_t OC = w.shape[0], ICG = w.shape[1], K = w.shape[2], KW = w.shape[3];
  if (side == AffineSide::after) {
    for (std::int64_t o = 0; o < OC; ++o) {
      for (std::int64_t i = 0; i < ICG * K * KW; ++i)
        w.data[o * ICG * K * KW + i] *= scale.data[o];
      b.data[o] = b.data[o] * scale.data[o] + shift.data[o];
    }
    return;
  }
  if (groups != 1 && !(ICG == 1 && groups == OC))
    throw Error("fold_affine: grouped conv must be plain or depthwise");
  for (std::int64_t o = 0; o < OC; ++o) {
    double shift_sum = 0.0;
    for (std::int64_t c = 0; c < ICG; ++c) {
      const std::int64_t ch = groups == 1 ? c : o;  // global input channel
      for (std::int64_t i = 0; i < K * KW; ++i) {
        shift_sum += w.data[(o * ICG + c) * K * KW + i] * shift.data[ch];
        w.data[(o * ICG + c) * K * KW + i] *= scale.data[ch];
      }
    }
    b.data[o] += shift_sum;
  }
}

/// Identity skip absorbed into a shape-preserving conv: +1 at the kernel
/// center of each channel's own map.
inline void fold_skip_conv(Tensor<double>& w) {
  const std::int64_t OC = w.shape[0], IC = w.shape[1], K = w.shape[2];
  if (OC != IC) throw Error("fold_skip: conv must map a channel count to itself");
  if (K % 2 == 0) throw Error("fold_skip: kernel must be odd");
  for (std::int64_t c = 0; c < OC; ++c) w(c, c, K / 2, K / 2) += 1.0;
}

inline void fold_skip_dense(Tensor<double>& w) {
  if (w.shape[0] != w.shape[1])
    throw Error("fold_skip: dense must map a feature count to itself");
  for (std::int64_t i = 0; i < w.shape[0]; ++i) w(i, i) += 1.0;
}

}  // namespace fusion

// ---------------------------------------------------------------------------
// Chains

/// One linear element of a collapsible run, weights already in double.
struct ChainElem {
  LayerSpec spec;         // conv, dense, or affine
  Tensor<double> weight;  // conv/dense
  Tensor<double> bias;    // conv/dense bias or affine shift; zeros if absent
  Tensor<double> scale;   // affine only
  bool has_bias = false;  // structural flag (bias tensor itself always exists)
};

struct FusionChain {
  std::vector<ChainElem> elems;
  bool skip = false;
};

struct FusedResult {
  LayerSpec spec;  // the single conv or dense the chain collapses to
  Tensor<double> weight;
  Tensor<double> bias;  // meaningful iff spec.has_bias
};

namespace fusion {

inline void validate_chain(const FusionChain& chain) {
  if (chain.elems.empty()) throw Error("fuse_chain: chain is empty");
  bool any_linear = false, any_dense = false, any_conv = false;
  for (std::size_t i = 0; i < chain.elems.size(); ++i) {
    const LayerSpec& l = chain.elems[i].spec;
    switch (l.kind) {
      case LayerKind::conv:
        any_conv = any_linear = true;
        if (l.stride != 1)
          throw Error("fuse_chain: element " + std::to_string(i) + " has stride " +
                      std::to_string(l.stride) + "; collapsing across strides is not supported");
        if (i > 0 && l.padding != 0)
          throw Error("fuse_chain: element " + std::to_string(i) +
                      " has padding " + std::to_string(l.padding) +
                      "; only the first element may pad, later padding breaks exactness");
        if (l.groups != 1 && !(l.groups == l.in_ch && l.in_ch == l.out_ch))
          throw Error("fuse_chain: element " + std::to_string(i) +
                      " is a grouped conv that is neither plain nor depthwise");
        if (l.groups > 1 && l.kernel > 1)
          throw Error("fuse_chain: element " + std::to_string(i) + " is a depthwise conv with " +
                      "kernel " + std::to_string(l.kernel) +
                      "; only kernel-1 depthwise layers (per-channel scales) are supported");
        break;
      case LayerKind::dense:
        any_dense = any_linear = true;
        break;
      case LayerKind::affine:
        if (i == 0 && chain.elems.size() > 1) {
          const LayerSpec& next = chain.elems[1].spec;
          if (next.kind == LayerKind::conv && next.padding != 0)
            throw Error("fuse_chain: scale/shift ahead of a padded conv breaks exactness");
        }
        break;
      default:
        throw Error("fuse_chain: element " + std::to_string(i) + " is a " +
                    to_string(l.kind) + " layer, which is not linear");
    }
  }
  if (!any_linear) throw Error("fuse_chain: chain has no conv or dense layer");
  if (any_dense && any_conv)
    throw Error("fuse_chain: chain mixes conv and dense layers");
}

inline bool is_depthwise(const LayerSpec& l) {
  return l.kind == LayerKind::conv && l.groups > 1;
}

}  // namespace fusion

/// Collapses the chain right to left into a single equivalent layer.
inline FusedResult fuse_chain(const FusionChain& chain) {
  fusion::validate_chain(chain);
  ChainElem acc = chain.elems.back();
  for (std::size_t pos = chain.elems.size() - 1; pos-- > 0;) {
    const ChainElem& cur = chain.elems[pos];
    const bool cur_affine = cur.spec.kind == LayerKind::affine;
    const bool acc_affine = acc.spec.kind == LayerKind::affine;
    if (cur_affine && acc_affine) {
      // scale2*(scale1*x + shift1) + shift2
      ChainElem next = cur;
      for (std::int64_t c = 0; c < cur.scale.numel(); ++c) {
        next.scale.data[c] = acc.scale.data[c] * cur.scale.data[c];
        next.bias.data[c] = acc.scale.data[c] * cur.bias.data[c] + acc.bias.data[c];
      }
      acc = std::move(next);
      continue;
    }
    if (cur_affine) {
      if (acc.spec.kind == LayerKind::dense)
        throw Error("fuse_chain: scale/shift layers only fold into convs");
      fusion::fold_affine(fusion::AffineSide::before, cur.scale, cur.bias, acc.weight, acc.bias,
                          acc.spec.groups);
      acc.has_bias = true;
      continue;
    }
    if (acc_affine) {
      if (cur.spec.kind == LayerKind::dense)
        throw Error("fuse_chain: scale/shift layers only fold into convs");
      ChainElem next = cur;
      fusion::fold_affine(fusion::AffineSide::after, acc.scale, acc.bias, next.weight, next.bias,
                          next.spec.groups);
      next.has_bias = true;
      acc = std::move(next);
      continue;
    }
    if (cur.spec.kind == LayerKind::dense) {
      ChainElem next;
      next.spec = make_dense(cur.spec.in_features, acc.spec.out_features, true);
      fusion::fuse_dense_pair(cur.weight, cur.bias, acc.weight, acc.bias, next.weight, next.bias);
      next.has_bias = cur.has_bias || acc.has_bias;
      acc = std::move(next);
      continue;
    }
    // conv into conv
    const bool cur_dw = fusion::is_depthwise(cur.spec);
    const bool acc_dw = fusion::is_depthwise(acc.spec);
    ChainElem next;
    if (cur_dw && !acc_dw) {
      next.weight = fusion::merge_depthwise_then_conv(cur.weight, acc.weight);
    } else {
      const Tensor<double> w1 = cur_dw ? fusion::densify_depthwise(cur.weight) : cur.weight;
      const Tensor<double> w2 = acc_dw ? fusion::densify_depthwise(acc.weight) : acc.weight;
      next.weight = fusion::merge_kernels(w1, w2);
    }
    Tensor<double> b2 = acc.bias;
    if (acc_dw) {
      // depthwise bias is already per output channel; merge_bias wants the
      // second kernel, so route through the densified form's bias directly
      next.bias = fusion::merge_bias(
          cur.bias, acc_dw ? fusion::densify_depthwise(acc.weight) : acc.weight, b2);
    } else {
      next.bias = fusion::merge_bias(cur.bias, acc.weight, b2);
    }
    next.spec = make_conv(cur.spec.in_ch, acc.spec.out_ch, next.weight.shape[2], 1,
                          cur.spec.padding, 1, cur.has_bias || acc.has_bias);
    next.has_bias = cur.has_bias || acc.has_bias;
    acc = std::move(next);
  }
  if (acc.spec.kind == LayerKind::affine)
    throw Error("fuse_chain: chain has no conv or dense layer");
  if (chain.skip) {
    if (acc.spec.kind == LayerKind::conv) {
      if (acc.spec.stride != 1 || 2 * acc.spec.padding != acc.spec.kernel - 1)
        throw Error("fuse_chain: skip needs a shape-preserving collapsed conv, got k=" +
                    std::to_string(acc.spec.kernel) + " s=" + std::to_string(acc.spec.stride) +
                    " p=" + std::to_string(acc.spec.padding));
      fusion::fold_skip_conv(acc.weight);
    } else {
      fusion::fold_skip_dense(acc.weight);
    }
  }
  FusedResult out;
  out.spec = acc.spec;
  out.spec.has_bias = acc.has_bias;
  out.weight = std::move(acc.weight);
  out.bias = std::move(acc.bias);
  return out;
}

/// Chain for one block node: linear layers with their tensors in double,
/// activations checked to be identity (alpha == 1) and dropped.
template <class S>
FusionChain build_fusion_chain(const ModelGraph<S>& g, std::size_t idx) {
  const auto* bp = std::get_if<BlockSpec>(&g.nodes[idx]);
  if (!bp) throw Error("contract: " + node_label(idx, g.nodes[idx]) + " is not a block");
  FusionChain chain;
  chain.skip = bp->skip;
  for (std::size_t j = 0; j < bp->layers.size(); ++j) {
    const LayerSpec& l = bp->layers[j];
    const std::string prefix = node_key(idx) + "." + std::to_string(j);
    if (l.kind == LayerKind::act) {
      if (l.alpha != 1.0)
        throw Error("contract: " + node_key(idx) + "." + std::to_string(j) +
                    ": activation alpha is " + std::to_string(l.alpha) +
                    ", block is not linear yet; finish the linearization schedule first");
      continue;
    }
    ChainElem e;
    e.spec = l;
    if (l.kind == LayerKind::affine) {
      e.scale = cast<double>(detail::need_param(g, prefix + ".scale"));
      e.bias = cast<double>(detail::need_param(g, prefix + ".shift"));
      e.has_bias = true;
    } else {
      e.weight = cast<double>(detail::need_param(g, prefix + ".weight"));
      if (l.has_bias) {
        e.bias = cast<double>(detail::need_param(g, prefix + ".bias"));
        e.has_bias = true;
      } else {
        e.bias = Tensor<double>::zeros(
            {l.kind == LayerKind::conv ? l.out_ch : l.out_features});
      }
    }
    chain.elems.push_back(std::move(e));
  }
  return chain;
}

/// Collapses every block of an expanded model back into the single layer it
/// replaced. Running it on an already contracted model is a no-op; running
/// it on a vanilla model is a usage error.
template <class S>
ModelGraph<S> contract_model(const ModelGraph<S>& g) {
  if (g.provenance == Provenance::contracted) return g;
  if (g.provenance == Provenance::vanilla)
    throw Error("contract: model '" + g.name + "' is vanilla; there are no blocks to collapse");
  ModelGraph<S> out;
  out.name = g.name;
  out.provenance = Provenance::contracted;
  out.input_shape = g.input_shape;
  out.nodes = g.nodes;
  for (const auto& [key, tensor] : g.params) {
    // block parameters are rebuilt below; everything else carries over
    bool inside_block = false;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      if (std::holds_alternative<BlockSpec>(g.nodes[i]) &&
          key.rfind(node_key(i) + ".", 0) == 0)
        inside_block = true;
    if (!inside_block) out.params[key] = tensor;
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto* bp = std::get_if<BlockSpec>(&g.nodes[i]);
    if (!bp) continue;
    FusedResult fused = fuse_chain(build_fusion_chain(g, i));
    if (!(fused.spec == bp->replaced))
      throw Error("contract: " + node_label(i, g.nodes[i]) + " collapsed to a different layer (" +
                  to_string(fused.spec.kind) + " k=" + std::to_string(fused.spec.kernel) +
                  ") than it replaced; the expansion was inconsistent");
    out.nodes[i] = bp->replaced;
    out.params[node_key(i) + ".weight"] = cast<S>(fused.weight);
    if (fused.spec.has_bias) out.params[node_key(i) + ".bias"] = cast<S>(fused.bias);
  }
  infer_shapes(out);
  check_params_complete(out);
  return out;
}

}  // namespace netbooster
