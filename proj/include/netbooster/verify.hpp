#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "netbooster/contraction.hpp"
#include "netbooster/graph.hpp"
#include "netbooster/oracle.hpp"
#include "netbooster/ops.hpp"
#include "netbooster/serialize.hpp"

namespace netbooster {

// Self-check suites: every check runs the production route and the oracle
// route on the same random fixtures and compares. `netbooster verify` prints
// one JSON line per check; the acceptance tests call the same functions.

struct CheckResult {
  std::string check;
  bool pass = false;
  double max_err = 0.0;
  double tol = 0.0;
  std::int64_t cases = 0;
  double seconds = 0.0;
};

inline nlohmann::json to_json(const CheckResult& r) {
  nlohmann::json j;
  j["check"] = r.check;
  j["pass"] = r.pass;
  j["max_err"] = r.max_err;
  j["tol"] = r.tol;
  j["cases"] = r.cases;
  j["seconds"] = r.seconds;
  return j;
}

/// A random collapsible run plus its oracle mirror. Both routes share the
/// fixture tensors and nothing else.
struct ChainCase {
  FusionChain chain;
  std::vector<oracle::ChainLayer> ref;
  Shape input_shape;  // [N,C,H,W] or [N,F]
  bool dense = false;
};

namespace verify_detail {

inline void push_conv(ChainCase& cs, const LayerSpec& spec, std::mt19937_64& rng) {
  ChainElem e;
  e.spec = spec;
  const Shape wshape = {spec.out_ch, spec.in_ch / spec.groups, spec.kernel, spec.kernel};
  e.weight = random_normal<double>(wshape, 0.0, 0.5, rng);
  e.bias = spec.has_bias ? random_normal<double>({spec.out_ch}, 0.0, 0.5, rng)
                         : Tensor<double>::zeros({spec.out_ch});
  e.has_bias = spec.has_bias;
  oracle::ChainLayer r;
  r.kind = oracle::ChainLayer::Kind::conv;
  r.weight = e.weight;
  r.bias = e.bias;
  r.has_bias = spec.has_bias;
  r.stride = spec.stride;
  r.padding = spec.padding;
  r.groups = spec.groups;
  cs.chain.elems.push_back(std::move(e));
  cs.ref.push_back(std::move(r));
}

inline void push_affine(ChainCase& cs, std::int64_t channels, std::mt19937_64& rng) {
  ChainElem e;
  e.spec = make_affine(channels);
  e.scale = random_normal<double>({channels}, 1.0, 0.25, rng);
  e.bias = random_normal<double>({channels}, 0.0, 0.5, rng);
  e.has_bias = true;
  oracle::ChainLayer r;
  r.kind = oracle::ChainLayer::Kind::affine;
  r.scale = e.scale;
  r.bias = e.bias;
  cs.chain.elems.push_back(std::move(e));
  cs.ref.push_back(std::move(r));
}

inline void push_dense(ChainCase& cs, const LayerSpec& spec, std::mt19937_64& rng) {
  ChainElem e;
  e.spec = spec;
  e.weight = random_normal<double>({spec.out_features, spec.in_features}, 0.0, 0.5, rng);
  e.bias = spec.has_bias ? random_normal<double>({spec.out_features}, 0.0, 0.5, rng)
                         : Tensor<double>::zeros({spec.out_features});
  e.has_bias = spec.has_bias;
  oracle::ChainLayer r;
  r.kind = oracle::ChainLayer::Kind::dense;
  r.weight = e.weight;
  r.bias = e.bias;
  r.has_bias = spec.has_bias;
  cs.chain.elems.push_back(std::move(e));
  cs.ref.push_back(std::move(r));
}

}  // namespace verify_detail

/// Expansion-block-shaped chain: pointwise, kernel-1 depthwise, pointwise,
/// with scale/shift layers, bias flags, padding and skip drawn at random.
inline ChainCase random_block_chain(std::mt19937_64& rng, std::int64_t ratio) {
  using verify_detail::push_affine;
  using verify_detail::push_conv;
  auto pick = [&rng](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto coin = [&rng] { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; };
  ChainCase cs;
  const bool skip = coin();
  const std::int64_t c0 = pick(1, 8);
  const std::int64_t c1 = skip ? c0 : pick(1, 8);
  const std::int64_t h = ratio * c0;
  const std::int64_t pad = skip ? 0 : pick(0, 1);  // skip needs 2p == k-1 == 0
  const std::int64_t hw = pick(8, 16);
  cs.input_shape = {pick(1, 2), c0, hw, hw};
  cs.chain.skip = skip;
  const bool affine_first = pad == 0 && coin();
  if (affine_first) push_affine(cs, c0, rng);
  push_conv(cs, make_conv(c0, h, 1, 1, pad, 1, coin()), rng);
  if (coin()) push_affine(cs, h, rng);
  push_conv(cs, make_depthwise(h, 1, 1, 0, coin()), rng);
  if (coin()) push_affine(cs, h, rng);
  push_conv(cs, make_conv(h, c1, 1, 1, 0, 1, coin()), rng);
  if (coin()) push_affine(cs, c1, rng);
  return cs;
}

/// Two plain convs, kernels drawn from {1,3,5} independently.
inline ChainCase random_pair_chain(std::mt19937_64& rng) {
  using verify_detail::push_conv;
  auto pick = [&rng](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto coin = [&rng] { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; };
  const std::int64_t kernels[] = {1, 3, 5};
  ChainCase cs;
  const std::int64_t c0 = pick(1, 8), cm = pick(1, 8);
  const std::int64_t k1 = kernels[pick(0, 2)], k2 = kernels[pick(0, 2)];
  const bool skip = coin();
  const std::int64_t c1 = skip ? c0 : pick(1, 8);
  const std::int64_t pad = skip ? (k1 + k2 - 2) / 2 : pick(0, 2);
  const std::int64_t hw = pick(k1 + k2, 16);
  cs.input_shape = {pick(1, 2), c0, hw, hw};
  cs.chain.skip = skip;
  push_conv(cs, make_conv(c0, cm, k1, 1, pad, 1, coin()), rng);
  push_conv(cs, make_conv(cm, c1, k2, 1, 0, 1, coin()), rng);
  return cs;
}

/// Dense expand/project pair with optional skip.
inline ChainCase random_dense_chain(std::mt19937_64& rng, std::int64_t ratio) {
  using verify_detail::push_dense;
  auto pick = [&rng](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto coin = [&rng] { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; };
  ChainCase cs;
  cs.dense = true;
  const bool skip = coin();
  const std::int64_t in = pick(1, 8);
  const std::int64_t out = skip ? in : pick(1, 8);
  const std::int64_t h = ratio * in;
  cs.input_shape = {pick(1, 4), in};
  cs.chain.skip = skip;
  push_dense(cs, make_dense(in, h, coin()), rng);
  push_dense(cs, make_dense(h, out, coin()), rng);
  return cs;
}

/// Collapses the chain with the production code, evaluates the collapsed
/// layer with the production kernels at scalar type S, and compares against
/// the oracle running the original layers one by one in double.
template <class S>
double chain_case_error(const ChainCase& cs, std::mt19937_64& rng) {
  const FusedResult fused = fuse_chain(cs.chain);
  const Tensor<double> x = random_normal<double>(cs.input_shape, 0.0, 1.0, rng);
  const Tensor<double> ref = oracle::chain(x, cs.ref, cs.chain.skip);
  const Tensor<S> xs = cast<S>(x);
  const Tensor<S> w = cast<S>(fused.weight);
  Tensor<S> y;
  if (cs.dense) {
    const Tensor<S> b = cast<S>(fused.bias);
    y = dense_forward(xs, w, fused.spec.has_bias ? &b : nullptr);
  } else {
    const Tensor<S> b = cast<S>(fused.bias);
    y = conv2d_forward(xs, w, fused.spec.has_bias ? &b : nullptr, fused.spec.stride,
                       fused.spec.padding, 1);
  }
  return max_rel_error(cast<double>(y), ref);
}

/// Random collapsible chains at every expansion ratio, compared against the
/// layer-by-layer oracle. `cases` counts chains per ratio and family.
template <class S>
CheckResult run_fusion_suite(std::uint64_t seed, std::int64_t cases_per_ratio, double tol) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  CheckResult r;
  r.check = std::string("fusion-exactness-") + dtype_name<S>();
  r.tol = tol;
  for (std::int64_t ratio : {2, 4, 6, 8})
    for (std::int64_t i = 0; i < cases_per_ratio; ++i) {
      ChainCase block = random_block_chain(rng, ratio);
      r.max_err = std::max(r.max_err, chain_case_error<S>(block, rng));
      ChainCase pair = random_pair_chain(rng);
      r.max_err = std::max(r.max_err, chain_case_error<S>(pair, rng));
      ChainCase dense = random_dense_chain(rng, ratio);
      r.max_err = std::max(r.max_err, chain_case_error<S>(dense, rng));
      r.cases += 3;
    }
  r.pass = r.max_err <= r.tol;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Merged-kernel bounds against the all-indices oracle, including unequal
/// kernel sizes in both orders, plus the size law k1+k2-1 and a functional
/// composition check through the oracle convolution.
inline CheckResult run_merged_bounds_suite(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  CheckResult r;
  r.check = "merged-kernel-bounds";
  r.tol = 1e-13;
  const std::pair<std::int64_t, std::int64_t> sizes[] = {{1, 1}, {1, 3}, {3, 1}, {3, 3},
                                                         {3, 5}, {5, 3}, {1, 5}, {5, 1}};
  for (auto [k1, k2] : sizes) {
    const std::int64_t c0 = 3, c1 = 4, c2 = 2;
    const Tensor<double> w1 = random_normal<double>({c1, c0, k1, k1}, 0.0, 0.7, rng);
    const Tensor<double> w2 = random_normal<double>({c2, c1, k2, k2}, 0.0, 0.7, rng);
    const Tensor<double> engine = fusion::merge_kernels(w1, w2);
    const Tensor<double> truth = oracle::merged_kernel(w1, w2);
    if (engine.shape[2] != k1 + k2 - 1) {
      r.max_err = 1.0;
      break;
    }
    r.max_err = std::max(r.max_err, max_rel_error(engine, truth));
    // functional: one conv with the merged kernel equals the two in sequence
    const std::int64_t hw = k1 + k2 + 4;
    const Tensor<double> x = random_normal<double>({2, c0, hw, hw}, 0.0, 1.0, rng);
    const Tensor<double> seq =
        oracle::conv(oracle::conv(x, w1, nullptr, 1, 0, 1), w2, nullptr, 1, 0, 1);
    const Tensor<double> one = oracle::conv(x, engine, nullptr, 1, 0, 1);
    r.max_err = std::max(r.max_err, max_rel_error(one, seq));
    ++r.cases;
  }
  r.pass = r.max_err <= r.tol;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace detail {

/// Redraws one conv bias channel until every pre-activation of the act node it
/// feeds clears `kinks` by `margin`. Central differences straddling a kink
/// average the slopes of both sides while the tape reports one of them, so a
/// fixture with pre-activations near a kink measures the fixture, not the tape.
template <class S>
void clear_act_kinks(ModelGraph<S>& g, const Tensor<S>& x, std::size_t act_node,
                     const std::string& bias_key, const std::vector<double>& kinks,
                     double margin, std::mt19937_64& rng) {
  Tensor<S>& bias = g.params.at(bias_key);
  Tensor<S> pre = forward_trace(g, x)[act_node - 1];
  std::uniform_real_distribution<double> draw(-1.0, 1.0);
  for (std::int64_t c = 0; c < pre.shape[1]; ++c) {
    const double base = static_cast<double>(bias(c));
    for (int tries = 0;; ++tries) {
      if (tries > 256)
        throw Error("gradient suite: cannot place bias of '" + bias_key +
                    "' clear of activation kinks");
      const double b = draw(rng);
      bool clear = true;
      for (std::int64_t n = 0; clear && n < pre.shape[0]; ++n)
        for (std::int64_t i = 0; clear && i < pre.shape[2]; ++i)
          for (std::int64_t j = 0; clear && j < pre.shape[3]; ++j)
            for (double kink : kinks)
              if (std::abs(static_cast<double>(pre(n, c, i, j)) - base + b - kink) < margin) {
                clear = false;
                break;
              }
      if (clear) {
        bias(c) = static_cast<S>(b);
        break;
      }
    }
  }
}

}  // namespace detail

/// Tape gradients of a small model with every layer kind, against central
/// finite differences in double, at the given activation blend. Conv biases
/// are placed so no pre-activation sits within 10h of a kink; a perturbation
/// of h then never flips any activation branch during differencing.
inline CheckResult run_gradient_suite(std::uint64_t seed, double alpha, ActKind act_kind,
                                      double h, double tol) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  CheckResult r;
  std::ostringstream name;
  name << "gradients-" << to_string(act_kind) << "-alpha-" << alpha;
  r.check = name.str();
  r.tol = tol;

  ModelGraph<double> g;
  g.name = "grad-probe";
  g.input_shape = {2, 6, 6};
  g.nodes.push_back(make_conv(2, 3, 3, 1, 1, 1, true));
  g.nodes.push_back(make_act(act_kind, alpha));
  g.nodes.push_back(make_depthwise(3, 3, 1, 1, true));
  g.nodes.push_back(make_act(act_kind, alpha));
  g.nodes.push_back(make_affine(3));
  g.nodes.push_back(make_conv(3, 4, 1, 1, 0, 1, true));
  g.nodes.push_back(make_act(act_kind, alpha));
  g.nodes.push_back(make_avgpool(3, 3));
  g.nodes.push_back(make_flatten());
  g.nodes.push_back(make_dense(16, 3, true));
  init_params(g, rng);

  const Tensor<double> x = random_normal<double>({2, 2, 6, 6}, 0.0, 1.0, rng);
  if (alpha < 1.0) {
    std::vector<double> kinks = {0.0};
    if (act_kind == ActKind::relu6_decay) kinks.push_back(6.0);
    const double margin = 10.0 * h;
    detail::clear_act_kinks(g, x, 1, "n0.bias", kinks, margin, rng);
    detail::clear_act_kinks(g, x, 3, "n2.bias", kinks, margin, rng);
    detail::clear_act_kinks(g, x, 6, "n5.bias", kinks, margin, rng);
  }
  const std::vector<std::int64_t> labels = {0, 2};
  auto loss_of = [&](const ModelGraph<double>& m, const Tensor<double>& input) {
    Tensor<double> grad;
    return softmax_xent(forward(m, input), labels, grad);
  };

  GradientTape<double> tape;
  const Tensor<double> logits = forward(g, x, &tape);
  Tensor<double> loss_grad;
  softmax_xent(logits, labels, loss_grad);
  const GradMap<double> grads = tape.backward(loss_grad);

  for (const auto& [key, grad] : grads) {
    ModelGraph<double> probe = g;
    const Tensor<double> fd = oracle::finite_diff_grad(
        [&](const Tensor<double>& cand) {
          probe.params[key] = cand;
          return loss_of(probe, x);
        },
        g.params.at(key), h);
    r.max_err = std::max(r.max_err, max_rel_error(grad, fd));
    ++r.cases;
  }
  const Tensor<double> fd_input = oracle::finite_diff_grad(
      [&](const Tensor<double>& cand) { return loss_of(g, cand); }, x, h);
  r.max_err = std::max(r.max_err, max_rel_error(tape.input_gradient(), fd_input));
  ++r.cases;

  r.pass = r.max_err <= r.tol;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::vector<CheckResult> verify_all(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(run_fusion_suite<double>(seed, 10, 1e-12));
  out.push_back(run_fusion_suite<float>(seed + 1, 10, 1e-5));
  out.push_back(run_merged_bounds_suite(seed + 2));
  for (double alpha : {0.0, 0.5, 1.0}) {
    out.push_back(run_gradient_suite(seed + 3, alpha, ActKind::prelu, 1e-3, 1e-4));
    out.push_back(run_gradient_suite(seed + 4, alpha, ActKind::relu6_decay, 1e-3, 1e-4));
  }
  return out;
}

}  // namespace netbooster
