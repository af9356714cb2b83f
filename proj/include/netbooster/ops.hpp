#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "netbooster/tensor.hpp"
#include "netbooster/threading.hpp"

namespace netbooster {

// Activations are [N, C, H, W]. Conv weights are [outC, inC/groups, kH, kW].
// Dense weights are [out, in], row-major, y = x * W^T + b. Convolution is
// cross-correlation (no kernel flip); every routine in this file and every
// oracle that checks it uses the same orientation.

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                    std::int64_t pad) {
  std::int64_t out = (in + 2 * pad - k) / stride + 1;
  require(in + 2 * pad >= k, "conv: kernel larger than padded input (" +
                                 std::to_string(k) + " vs " + std::to_string(in + 2 * pad) + ")");
  return out;
}

template <class S>
void check_conv_args(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias,
                     std::int64_t stride, std::int64_t pad, std::int64_t groups) {
  require(x.order() == 4, "conv: input must be [N,C,H,W], got " + shape_str(x.shape));
  require(w.order() == 4, "conv: weight must be [outC,inC/g,kH,kW], got " + shape_str(w.shape));
  require(stride >= 1, "conv: stride must be >= 1");
  require(pad >= 0, "conv: padding must be >= 0");
  require(groups >= 1, "conv: groups must be >= 1");
  require(x.shape[1] % groups == 0 && w.shape[0] % groups == 0,
          "conv: groups must divide both channel counts");
  require(w.shape[1] == x.shape[1] / groups,
          "conv: weight expects " + std::to_string(w.shape[1] * groups) + " input channels, got " +
              std::to_string(x.shape[1]));
  if (bias)
    require(bias->shape == Shape{w.shape[0]},
            "conv: bias must be [outC], got " + shape_str(bias->shape));
}

}  // namespace detail

template <class S>
Shape conv2d_out_shape(const Shape& x_shape, const Tensor<S>& w, std::int64_t stride,
                       std::int64_t pad) {
  return {x_shape[0], w.shape[0], detail::conv_out_extent(x_shape[2], w.shape[2], stride, pad),
          detail::conv_out_extent(x_shape[3], w.shape[3], stride, pad)};
}

template <class S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w,
                         std::type_identity_t<const Tensor<S>*> bias, std::int64_t stride,
                         std::int64_t pad, std::int64_t groups) {
  detail::check_conv_args(x, w, bias, stride, pad, groups);
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t OC = w.shape[0], ICG = w.shape[1], KH = w.shape[2], KW = w.shape[3];
  const std::int64_t OH = detail::conv_out_extent(H, KH, stride, pad);
  const std::int64_t OW = detail::conv_out_extent(W, KW, stride, pad);
  const std::int64_t ocg = OC / groups;
  Tensor<S> y({N, OC, OH, OW});
  parallel_for_chunks(N, [&](std::int64_t, std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n)
      for (std::int64_t oc = 0; oc < OC; ++oc) {
        const std::int64_t g = oc / ocg;
        const S* wp = w.data.data() + oc * ICG * KH * KW;
        for (std::int64_t oh = 0; oh < OH; ++oh)
          for (std::int64_t ow = 0; ow < OW; ++ow) {
            S acc = bias ? bias->data[oc] : S(0);
            for (std::int64_t ic = 0; ic < ICG; ++ic) {
              const S* xp = x.data.data() + ((n * C + g * ICG + ic) * H) * W;
              for (std::int64_t kh = 0; kh < KH; ++kh) {
                const std::int64_t ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= H) continue;
                for (std::int64_t kw = 0; kw < KW; ++kw) {
                  const std::int64_t iw = ow * stride - pad + kw;
                  if (iw < 0 || iw >= W) continue;
                  acc += xp[ih * W + iw] * wp[(ic * KH + kh) * KW + kw];
                }
              }
            }
            y.data[((n * OC + oc) * OH + oh) * OW + ow] = acc;
          }
      }
  });
  return y;
}

template <class S>
Tensor<S> conv2d_input_grad(const Tensor<S>& gy, const Tensor<S>& w, const Shape& x_shape,
                            std::int64_t stride, std::int64_t pad, std::int64_t groups) {
  const std::int64_t N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
  const std::int64_t OC = w.shape[0], ICG = w.shape[1], KH = w.shape[2], KW = w.shape[3];
  const std::int64_t OH = gy.shape[2], OW = gy.shape[3];
  const std::int64_t ocg = OC / groups;
  Tensor<S> gx = Tensor<S>::zeros(x_shape);
  // Scatter form; each batch row is written by exactly one chunk, so the
  // per-element accumulation order never depends on the worker count.
  parallel_for_chunks(N, [&](std::int64_t, std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n)
      for (std::int64_t oc = 0; oc < OC; ++oc) {
        const std::int64_t g = oc / ocg;
        const S* wp = w.data.data() + oc * ICG * KH * KW;
        for (std::int64_t oh = 0; oh < OH; ++oh)
          for (std::int64_t ow = 0; ow < OW; ++ow) {
            const S gval = gy.data[((n * OC + oc) * OH + oh) * OW + ow];
            for (std::int64_t ic = 0; ic < ICG; ++ic) {
              S* gp = gx.data.data() + ((n * C + g * ICG + ic) * H) * W;
              for (std::int64_t kh = 0; kh < KH; ++kh) {
                const std::int64_t ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= H) continue;
                for (std::int64_t kw = 0; kw < KW; ++kw) {
                  const std::int64_t iw = ow * stride - pad + kw;
                  if (iw < 0 || iw >= W) continue;
                  gp[ih * W + iw] += gval * wp[(ic * KH + kh) * KW + kw];
                }
              }
            }
          }
      }
  });
  return gx;
}

template <class S>
Tensor<S> conv2d_weight_grad(const Tensor<S>& gy, const Tensor<S>& x, const Shape& w_shape,
                             std::int64_t stride, std::int64_t pad, std::int64_t groups) {
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t OC = w_shape[0], ICG = w_shape[1], KH = w_shape[2], KW = w_shape[3];
  const std::int64_t OH = gy.shape[2], OW = gy.shape[3];
  const std::int64_t ocg = OC / groups;
  // Batch is a reduction axis: accumulate per-chunk partials, then fold them
  // in chunk order so the result is identical for any fixed worker count.
  std::vector<Tensor<S>> partial(static_cast<std::size_t>(chunk_count(N)),
                                 Tensor<S>::zeros(w_shape));
  parallel_for_chunks(N, [&](std::int64_t chunk, std::int64_t n0, std::int64_t n1) {
    Tensor<S>& gw = partial[static_cast<std::size_t>(chunk)];
    for (std::int64_t n = n0; n < n1; ++n)
      for (std::int64_t oc = 0; oc < OC; ++oc) {
        const std::int64_t g = oc / ocg;
        S* gwp = gw.data.data() + oc * ICG * KH * KW;
        for (std::int64_t oh = 0; oh < OH; ++oh)
          for (std::int64_t ow = 0; ow < OW; ++ow) {
            const S gval = gy.data[((n * OC + oc) * OH + oh) * OW + ow];
            for (std::int64_t ic = 0; ic < ICG; ++ic) {
              const S* xp = x.data.data() + ((n * C + g * ICG + ic) * H) * W;
              for (std::int64_t kh = 0; kh < KH; ++kh) {
                const std::int64_t ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= H) continue;
                for (std::int64_t kw = 0; kw < KW; ++kw) {
                  const std::int64_t iw = ow * stride - pad + kw;
                  if (iw < 0 || iw >= W) continue;
                  gwp[(ic * KH + kh) * KW + kw] += gval * xp[ih * W + iw];
                }
              }
            }
          }
      }
  });
  Tensor<S> gw = Tensor<S>::zeros(w_shape);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += p.data[i];
  return gw;
}

template <class S>
Tensor<S> conv2d_bias_grad(const Tensor<S>& gy) {
  const std::int64_t N = gy.shape[0], OC = gy.shape[1], OH = gy.shape[2], OW = gy.shape[3];
  Tensor<S> gb = Tensor<S>::zeros({OC});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t oc = 0; oc < OC; ++oc) {
      S acc = 0;
      const S* gp = gy.data.data() + ((n * OC + oc) * OH) * OW;
      for (std::int64_t i = 0; i < OH * OW; ++i) acc += gp[i];
      gb.data[oc] += acc;
    }
  return gb;
}

// max(alpha*x, x): identity for alpha == 1, standard rectifier for alpha == 0.
template <class S>
Tensor<S> prelu_forward(const Tensor<S>& x, S alpha) {
  Tensor<S> y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const S v = x.data[i];
    y.data[i] = v > S(0) ? v : alpha * v;
  }
  return y;
}

// Slope at x == 0 is alpha (the negative-side branch). The tests pin this.
template <class S>
Tensor<S> prelu_input_grad(const Tensor<S>& gy, const Tensor<S>& x, S alpha) {
  Tensor<S> gx(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    gx.data[i] = x.data[i] > S(0) ? gy.data[i] : alpha * gy.data[i];
  return gx;
}

// (1-alpha)*clamp(x,0,6) + alpha*x: fades a hard-capped rectifier into identity.
template <class S>
Tensor<S> relu6_decay_forward(const Tensor<S>& x, S alpha) {
  Tensor<S> y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const S v = x.data[i];
    const S c = v < S(0) ? S(0) : (v > S(6) ? S(6) : v);
    y.data[i] = (S(1) - alpha) * c + alpha * v;
  }
  return y;
}

// Clamp slope is taken as 0 exactly at both kink points (0 and 6).
template <class S>
Tensor<S> relu6_decay_input_grad(const Tensor<S>& gy, const Tensor<S>& x, S alpha) {
  Tensor<S> gx(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const S v = x.data[i];
    const S inside = (v > S(0) && v < S(6)) ? S(1) : S(0);
    gx.data[i] = gy.data[i] * ((S(1) - alpha) * inside + alpha);
  }
  return gx;
}

// Per-channel y = x*scale[c] + shift[c] on [N,C,H,W].
template <class S>
Tensor<S> affine_forward(const Tensor<S>& x, const Tensor<S>& scale, const Tensor<S>& shift) {
  detail::require(x.order() == 4, "affine: input must be [N,C,H,W], got " + shape_str(x.shape));
  detail::require(scale.shape == Shape{x.shape[1]} && shift.shape == Shape{x.shape[1]},
                  "affine: scale/shift must be [C] with C=" + std::to_string(x.shape[1]));
  const std::int64_t N = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
  Tensor<S> y(x.shape);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const S* xp = x.data.data() + (n * C + c) * HW;
      S* yp = y.data.data() + (n * C + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) yp[i] = xp[i] * scale.data[c] + shift.data[c];
    }
  return y;
}

template <class S>
Tensor<S> affine_input_grad(const Tensor<S>& gy, const Tensor<S>& scale) {
  const std::int64_t N = gy.shape[0], C = gy.shape[1], HW = gy.shape[2] * gy.shape[3];
  Tensor<S> gx(gy.shape);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const S* gp = gy.data.data() + (n * C + c) * HW;
      S* op = gx.data.data() + (n * C + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) op[i] = gp[i] * scale.data[c];
    }
  return gx;
}

template <class S>
void affine_param_grads(const Tensor<S>& gy, const Tensor<S>& x, Tensor<S>& gscale,
                        Tensor<S>& gshift) {
  const std::int64_t N = gy.shape[0], C = gy.shape[1], HW = gy.shape[2] * gy.shape[3];
  gscale = Tensor<S>::zeros({C});
  gshift = Tensor<S>::zeros({C});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const S* gp = gy.data.data() + (n * C + c) * HW;
      const S* xp = x.data.data() + (n * C + c) * HW;
      S gs = 0, gb = 0;
      for (std::int64_t i = 0; i < HW; ++i) {
        gs += gp[i] * xp[i];
        gb += gp[i];
      }
      gscale.data[c] += gs;
      gshift.data[c] += gb;
    }
}

namespace detail {
template <class S>
using MapMat = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using CMapMat =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace detail

template <class S>
Tensor<S> dense_forward(const Tensor<S>& x, const Tensor<S>& w,
                        std::type_identity_t<const Tensor<S>*> bias) {
  detail::require(x.order() == 2, "dense: input must be [N,in], got " + shape_str(x.shape));
  detail::require(w.order() == 2 && w.shape[1] == x.shape[1],
                  "dense: weight [out,in] mismatch, weight " + shape_str(w.shape) + " vs input " +
                      shape_str(x.shape));
  if (bias)
    detail::require(bias->shape == Shape{w.shape[0]},
                    "dense: bias must be [out], got " + shape_str(bias->shape));
  const std::int64_t N = x.shape[0], IN = x.shape[1], OUT = w.shape[0];
  Tensor<S> y({N, OUT});
  detail::CMapMat<S> X(x.data.data(), N, IN), Wm(w.data.data(), OUT, IN);
  detail::MapMat<S> Y(y.data.data(), N, OUT);
  Y.noalias() = X * Wm.transpose();
  if (bias)
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t o = 0; o < OUT; ++o) y.data[n * OUT + o] += bias->data[o];
  return y;
}

template <class S>
Tensor<S> dense_input_grad(const Tensor<S>& gy, const Tensor<S>& w) {
  const std::int64_t N = gy.shape[0], OUT = w.shape[0], IN = w.shape[1];
  Tensor<S> gx({N, IN});
  detail::CMapMat<S> G(gy.data.data(), N, OUT), Wm(w.data.data(), OUT, IN);
  detail::MapMat<S> GX(gx.data.data(), N, IN);
  GX.noalias() = G * Wm;
  return gx;
}

template <class S>
Tensor<S> dense_weight_grad(const Tensor<S>& gy, const Tensor<S>& x) {
  const std::int64_t N = gy.shape[0], OUT = gy.shape[1], IN = x.shape[1];
  Tensor<S> gw({OUT, IN});
  detail::CMapMat<S> G(gy.data.data(), N, OUT), X(x.data.data(), N, IN);
  detail::MapMat<S> GW(gw.data.data(), OUT, IN);
  GW.noalias() = G.transpose() * X;
  return gw;
}

template <class S>
Tensor<S> dense_bias_grad(const Tensor<S>& gy) {
  const std::int64_t N = gy.shape[0], OUT = gy.shape[1];
  Tensor<S> gb = Tensor<S>::zeros({OUT});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < OUT; ++o) gb.data[o] += gy.data[n * OUT + o];
  return gb;
}

// window == 0 means global pooling (one output cell per channel). Non-global
// windows must tile the input exactly; silent edge truncation is refused.
template <class S>
Tensor<S> avgpool2d_forward(const Tensor<S>& x, std::int64_t window, std::int64_t stride) {
  detail::require(x.order() == 4, "avgpool: input must be [N,C,H,W], got " + shape_str(x.shape));
  const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t wh = window == 0 ? H : window;
  const std::int64_t ww = window == 0 ? W : window;
  const std::int64_t s = window == 0 ? 1 : stride;
  detail::require(s >= 1, "avgpool: stride must be >= 1");
  detail::require(wh <= H && ww <= W, "avgpool: window exceeds input " + shape_str(x.shape));
  detail::require((H - wh) % s == 0 && (W - ww) % s == 0,
                  "avgpool: window/stride do not tile input " + shape_str(x.shape) + " exactly");
  const std::int64_t OH = (H - wh) / s + 1, OW = (W - ww) / s + 1;
  Tensor<S> y({N, C, OH, OW});
  const S inv = S(1) / S(wh * ww);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          S acc = 0;
          for (std::int64_t i = 0; i < wh; ++i)
            for (std::int64_t j = 0; j < ww; ++j)
              acc += x(n, c, oh * s + i, ow * s + j);
          y(n, c, oh, ow) = acc * inv;
        }
  return y;
}

template <class S>
Tensor<S> avgpool2d_input_grad(const Tensor<S>& gy, const Shape& x_shape, std::int64_t window,
                               std::int64_t stride) {
  const std::int64_t H = x_shape[2], W = x_shape[3];
  const std::int64_t wh = window == 0 ? H : window;
  const std::int64_t ww = window == 0 ? W : window;
  const std::int64_t s = window == 0 ? 1 : stride;
  const std::int64_t N = gy.shape[0], C = gy.shape[1], OH = gy.shape[2], OW = gy.shape[3];
  Tensor<S> gx = Tensor<S>::zeros(x_shape);
  const S inv = S(1) / S(wh * ww);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          const S g = gy(n, c, oh, ow) * inv;
          for (std::int64_t i = 0; i < wh; ++i)
            for (std::int64_t j = 0; j < ww; ++j)
              gx(n, c, oh * s + i, ow * s + j) += g;
        }
  return gx;
}

template <class S>
Tensor<S> flatten_forward(const Tensor<S>& x) {
  detail::require(x.order() >= 2, "flatten: input must have a batch axis");
  std::int64_t rest = 1;
  for (std::size_t d = 1; d < x.shape.size(); ++d) rest *= x.shape[d];
  Tensor<S> y = x;
  y.shape = {x.shape[0], rest};
  return y;
}

// Mean cross-entropy over the batch; grad is d(mean loss)/d(logits).
template <class S>
double softmax_xent(const Tensor<S>& logits, const std::vector<std::int64_t>& labels,
                    Tensor<S>& grad) {
  detail::require(logits.order() == 2, "loss: logits must be [N,K], got " + shape_str(logits.shape));
  const std::int64_t N = logits.shape[0], K = logits.shape[1];
  detail::require(static_cast<std::int64_t>(labels.size()) == N,
                  "loss: " + std::to_string(labels.size()) + " labels for batch of " +
                      std::to_string(N));
  grad = Tensor<S>({N, K});
  double total = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    detail::require(labels[n] >= 0 && labels[n] < K,
                    "loss: label " + std::to_string(labels[n]) + " outside [0," +
                        std::to_string(K) + ")");
    const S* row = logits.data.data() + n * K;
    S m = row[0];
    for (std::int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0;
    for (std::int64_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k] - m));
    total += std::log(z) - static_cast<double>(row[labels[n]] - m);
    for (std::int64_t k = 0; k < K; ++k) {
      const double p = std::exp(static_cast<double>(row[k] - m)) / z;
      grad.data[n * K + k] =
          static_cast<S>((p - (k == labels[n] ? 1.0 : 0.0)) / static_cast<double>(N));
    }
  }
  return total / static_cast<double>(N);
}

template <class S>
std::vector<std::int64_t> argmax_rows(const Tensor<S>& logits) {
  const std::int64_t N = logits.shape[0], K = logits.shape[1];
  std::vector<std::int64_t> out(static_cast<std::size_t>(N));
  for (std::int64_t n = 0; n < N; ++n) {
    const S* row = logits.data.data() + n * K;
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < K; ++k)
      if (row[k] > row[best]) best = k;
    out[static_cast<std::size_t>(n)] = best;
  }
  return out;
}

}  // namespace netbooster
