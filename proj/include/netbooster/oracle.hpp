#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "netbooster/tensor.hpp"

namespace netbooster {

// Reference implementations used only to check the engine. Everything here
// is double precision and written the most literal way possible: pad first,
// then sum over full index ranges. None of it shares code with ops.hpp or
// contraction.hpp; keeping the two routes separate is the point.

namespace oracle {

inline Tensor<double> pad_nchw(const Tensor<double>& x, std::int64_t p) {
  if (p == 0) return x;
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  Tensor<double> out = Tensor<double>::zeros({N, C, H + 2 * p, W + 2 * p});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) out(n, c, h + p, w + p) = x(n, c, h, w);
  return out;
}

inline Tensor<double> conv(const Tensor<double>& x, const Tensor<double>& weight,
                           const Tensor<double>* bias, std::int64_t stride, std::int64_t padding,
                           std::int64_t groups) {
  const Tensor<double> xp = pad_nchw(x, padding);
  const std::int64_t N = xp.shape[0], H = xp.shape[2], W = xp.shape[3];
  const std::int64_t OC = weight.shape[0], ICG = weight.shape[1], K = weight.shape[2];
  const std::int64_t KW = weight.shape[3];
  const std::int64_t OH = (H - K) / stride + 1, OW = (W - KW) / stride + 1;
  const std::int64_t ocg = OC / groups;
  Tensor<double> y = Tensor<double>::zeros({N, OC, OH, OW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t oc = 0; oc < OC; ++oc)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          double acc = bias ? bias->data[oc] : 0.0;
          for (std::int64_t ic = 0; ic < ICG; ++ic)
            for (std::int64_t kh = 0; kh < K; ++kh)
              for (std::int64_t kw = 0; kw < KW; ++kw)
                acc += xp(n, (oc / ocg) * ICG + ic, oh * stride + kh, ow * stride + kw) *
                       weight(oc, ic, kh, kw);
          y(n, oc, oh, ow) = acc;
        }
  return y;
}

inline Tensor<double> dense(const Tensor<double>& x, const Tensor<double>& weight,
                            const Tensor<double>* bias) {
  const std::int64_t N = x.shape[0], IN = x.shape[1], OUT = weight.shape[0];
  Tensor<double> y = Tensor<double>::zeros({N, OUT});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < OUT; ++o) {
      double acc = bias ? bias->data[o] : 0.0;
      for (std::int64_t i = 0; i < IN; ++i) acc += x(n, i) * weight(o, i);
      y(n, o) = acc;
    }
  return y;
}

inline Tensor<double> affine(const Tensor<double>& x, const Tensor<double>& scale,
                             const Tensor<double>& shift) {
  Tensor<double> y = x;
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w)
          y(n, c, h, w) = x(n, c, h, w) * scale.data[c] + shift.data[c];
  return y;
}

struct ChainLayer {
  enum class Kind { conv, affine, dense } kind = Kind::conv;
  Tensor<double> weight;  // conv [out,in/g,k,k]; dense [out,in]; affine unused
  Tensor<double> bias;    // conv/dense bias, affine shift
  Tensor<double> scale;   // affine only
  std::int64_t stride = 1, padding = 0, groups = 1;
  bool has_bias = false;
};

/// Ground truth for fusion checks: run the layers one by one, add the input
/// back if the chain carries a skip.
inline Tensor<double> chain(const Tensor<double>& x, const std::vector<ChainLayer>& layers,
                            bool skip) {
  Tensor<double> cur = x;
  for (const ChainLayer& l : layers) {
    switch (l.kind) {
      case ChainLayer::Kind::conv:
        cur = conv(cur, l.weight, l.has_bias ? &l.bias : nullptr, l.stride, l.padding, l.groups);
        break;
      case ChainLayer::Kind::dense:
        cur = dense(cur, l.weight, l.has_bias ? &l.bias : nullptr);
        break;
      case ChainLayer::Kind::affine:
        cur = affine(cur, l.scale, l.bias);
        break;
    }
  }
  if (skip) cur = cur + x;
  return cur;
}

/// Kernel of conv(conv(x, w1), w2) as one conv, by summing over every index
/// combination and skipping the out-of-range ones. No derived loop bounds:
/// this is the definition itself, so it arbitrates any bound dispute.
inline Tensor<double> merged_kernel(const Tensor<double>& w1, const Tensor<double>& w2) {
  const std::int64_t C1 = w1.shape[0], C0 = w1.shape[1], K1 = w1.shape[2];
  const std::int64_t C2 = w2.shape[0], K2 = w2.shape[2];
  if (w2.shape[1] != C1)
    throw Error("merged_kernel: channel mismatch " + shape_str(w1.shape) + " then " +
                shape_str(w2.shape));
  const std::int64_t KM = K1 + K2 - 1;
  Tensor<double> m = Tensor<double>::zeros({C2, C0, KM, KM});
  for (std::int64_t o = 0; o < C2; ++o)
    for (std::int64_t c = 0; c < C0; ++c)
      for (std::int64_t i = 0; i < KM; ++i)
        for (std::int64_t j = 0; j < KM; ++j) {
          double acc = 0.0;
          for (std::int64_t n = 0; n < C1; ++n)
            for (std::int64_t s = 0; s < K2; ++s)
              for (std::int64_t t = 0; t < K2; ++t) {
                const std::int64_t u = i - s, v = j - t;
                if (u < 0 || u >= K1 || v < 0 || v >= K1) continue;
                acc += w1(n, c, u, v) * w2(o, n, s, t);
              }
          m(o, c, i, j) = acc;
        }
  return m;
}

/// Central finite difference of a scalar function, one element at a time.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double h) {
  Tensor<double> g = Tensor<double>::zeros(x.shape);
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    probe.data[i] = x.data[i] + h;
    const double up = f(probe);
    probe.data[i] = x.data[i] - h;
    const double down = f(probe);
    probe.data[i] = x.data[i];
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// One momentum step on a single tensor, the formula written out plainly.
inline void sgd_step(Tensor<double>& param, const Tensor<double>& grad, Tensor<double>& velocity,
                     double lr, double momentum, double weight_decay) {
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    velocity.data[i] = momentum * velocity.data[i] + grad.data[i] + weight_decay * param.data[i];
    param.data[i] = param.data[i] - lr * velocity.data[i];
  }
}

}  // namespace oracle
}  // namespace netbooster
