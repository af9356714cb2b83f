#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "netbooster/autodiff.hpp"
#include "netbooster/ops.hpp"
#include "netbooster/oracle.hpp"

using namespace netbooster;

namespace {

// Scalar loss used by the finite-difference probes: sum of squares / 2,
// so dL/dy = y.
double half_sq(const Tensor<double>& y) {
  double s = 0;
  for (double v : y.data) s += v * v;
  return 0.5 * s;
}

Tensor<double> half_sq_grad(const Tensor<double>& y) { return y; }

}  // namespace

TEST_CASE("unary node routes the gradient through its backward fn") {
  GradientTape<double> tape;
  Tensor<double> x({3});
  x.data = {1.0, -2.0, 3.0};
  // y = 2x, so dL/dx = 2 * dL/dy.
  tape.push_unary([](const Tensor<double>& g, GradientTape<double>&) {
    Tensor<double> out = g;
    for (double& v : out.data) v *= 2.0;
    return out;
  });
  Tensor<double> gy({3});
  gy.data = {1.0, 1.0, 1.0};
  tape.backward(gy);
  CHECK(tape.input_gradient().data == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("dup and add implement the residual path") {
  // Forward structure: y = f(x) + x with f = scale by 3.
  // Backward: dL/dx = 3*g + g = 4*g.
  GradientTape<double> tape;
  tape.push_dup();
  tape.push_unary([](const Tensor<double>& g, GradientTape<double>&) {
    Tensor<double> out = g;
    for (double& v : out.data) v *= 3.0;
    return out;
  });
  tape.push_add();
  Tensor<double> gy({2});
  gy.data = {1.0, -1.0};
  tape.backward(gy);
  CHECK(tape.input_gradient().data == std::vector<double>{4.0, -4.0});
}

TEST_CASE("param grads accumulate across uses during replay") {
  // Two recorded ops both feed gradient into the same parameter; backward
  // must sum their contributions.
  GradientTape<double> tape;
  auto contribute = [](double scale) {
    return [scale](const Tensor<double>& g, GradientTape<double>& t) {
      Tensor<double> pg({2});
      pg.data = {scale, 2.0 * scale};
      t.add_param_grad("p", pg);
      return g;
    };
  };
  tape.push_unary(contribute(1.0));
  tape.push_unary(contribute(10.0));
  GradMap<double> grads = tape.backward(Tensor<double>::ones({1}));
  CHECK(grads.at("p").data == std::vector<double>{11.0, 22.0});
}

TEST_CASE("registered param shapes are enforced") {
  GradientTape<double> tape;
  tape.register_param("p", {2, 2});
  tape.push_unary([](const Tensor<double>& g, GradientTape<double>& t) {
    t.add_param_grad("p", Tensor<double>::ones({3}));  // wrong shape
    return g;
  });
  CHECK_THROWS_AS(tape.backward(Tensor<double>::ones({1})), Error);
}

TEST_CASE("backward on an empty tape is an error") {
  GradientTape<float> tape;
  CHECK_THROWS_AS(tape.backward(Tensor<float>::ones({1})), Error);
}

TEST_CASE("conv gradients match central differences") {
  std::mt19937_64 rng(21);
  Tensor<double> x = random_uniform<double>({2, 2, 5, 5}, -1.0, 1.0, rng);
  Tensor<double> w = random_uniform<double>({3, 2, 3, 3}, -0.5, 0.5, rng);
  Tensor<double> b = random_uniform<double>({3}, -0.5, 0.5, rng);
  const std::int64_t stride = 2, pad = 1;

  Tensor<double> y = conv2d_forward(x, w, &b, stride, pad, 1);
  Tensor<double> gy = half_sq_grad(y);

  Tensor<double> gx = conv2d_input_grad(gy, w, x.shape, stride, pad, 1);
  Tensor<double> gw = conv2d_weight_grad(gy, x, w.shape, stride, pad, 1);
  Tensor<double> gb = conv2d_bias_grad(gy);

  Tensor<double> fx = oracle::finite_diff_grad(
      [&](const Tensor<double>& p) { return half_sq(oracle::conv(p, w, &b, stride, pad, 1)); }, x,
      1e-5);
  Tensor<double> fw = oracle::finite_diff_grad(
      [&](const Tensor<double>& p) { return half_sq(oracle::conv(x, p, &b, stride, pad, 1)); }, w,
      1e-5);
  Tensor<double> fb = oracle::finite_diff_grad(
      [&](const Tensor<double>& p) { return half_sq(oracle::conv(x, w, &p, stride, pad, 1)); }, b,
      1e-5);

  CHECK(max_rel_error(gx, fx) < 1e-8);
  CHECK(max_rel_error(gw, fw) < 1e-8);
  CHECK(max_rel_error(gb, fb) < 1e-8);
}

TEST_CASE("depthwise conv gradients match central differences") {
  std::mt19937_64 rng(22);
  Tensor<double> x = random_uniform<double>({1, 4, 6, 6}, -1.0, 1.0, rng);
  Tensor<double> w = random_uniform<double>({4, 1, 3, 3}, -0.5, 0.5, rng);

  Tensor<double> y = conv2d_forward(x, w, nullptr, 1, 1, 4);
  Tensor<double> gy = half_sq_grad(y);
  Tensor<double> gx = conv2d_input_grad(gy, w, x.shape, 1, 1, 4);
  Tensor<double> gw = conv2d_weight_grad(gy, x, w.shape, 1, 1, 4);

  Tensor<double> fx = oracle::finite_diff_grad(
      [&](const Tensor<double>& p) { return half_sq(oracle::conv(p, w, nullptr, 1, 1, 4)); }, x,
      1e-5);
  Tensor<double> fw = oracle::finite_diff_grad(
      [&](const Tensor<double>& p) { return half_sq(oracle::conv(x, p, nullptr, 1, 1, 4)); }, w,
      1e-5);
  CHECK(max_rel_error(gx, fx) < 1e-8);
  CHECK(max_rel_error(gw, fw) < 1e-8);
}

TEST_CASE("dense gradients match central differences") {
  std::mt19937_64 rng(23);
  Tensor<double> x = random_uniform<double>({3, 4}, -1.0, 1.0, rng);
  Tensor<double> w = random_uniform<double>({5, 4}, -0.5, 0.5, rng);
  Tensor<double> b = random_uniform<double>({5}, -0.5, 0.5, rng);

  Tensor<double> y = dense_forward(x, w, &b);
  Tensor<double> gy = half_sq_grad(y);

  CHECK(max_rel_error(dense_input_grad(gy, w),
                      oracle::finite_diff_grad(
                          [&](const Tensor<double>& p) {
                            return half_sq(oracle::dense(p, w, &b));
                          },
                          x, 1e-5)) < 1e-8);
  CHECK(max_rel_error(dense_weight_grad(gy, x),
                      oracle::finite_diff_grad(
                          [&](const Tensor<double>& p) {
                            return half_sq(oracle::dense(x, p, &b));
                          },
                          w, 1e-5)) < 1e-8);
  CHECK(max_rel_error(dense_bias_grad(gy),
                      oracle::finite_diff_grad(
                          [&](const Tensor<double>& p) {
                            return half_sq(oracle::dense(x, w, &p));
                          },
                          b, 1e-5)) < 1e-8);
}

TEST_CASE("affine gradients match central differences") {
  std::mt19937_64 rng(24);
  Tensor<double> x = random_uniform<double>({2, 3, 4, 4}, -1.0, 1.0, rng);
  Tensor<double> sc = random_uniform<double>({3}, 0.5, 1.5, rng);
  Tensor<double> sh = random_uniform<double>({3}, -0.5, 0.5, rng);

  Tensor<double> y = affine_forward(x, sc, sh);
  Tensor<double> gy = half_sq_grad(y);

  Tensor<double> gsc, gsh;
  affine_param_grads(gy, x, gsc, gsh);

  CHECK(max_rel_error(affine_input_grad(gy, sc),
                      oracle::finite_diff_grad(
                          [&](const Tensor<double>& p) {
                            return half_sq(oracle::affine(p, sc, sh));
                          },
                          x, 1e-5)) < 1e-8);
  CHECK(max_rel_error(gsc, oracle::finite_diff_grad(
                               [&](const Tensor<double>& p) {
                                 return half_sq(oracle::affine(x, p, sh));
                               },
                               sc, 1e-5)) < 1e-8);
  CHECK(max_rel_error(gsh, oracle::finite_diff_grad(
                               [&](const Tensor<double>& p) {
                                 return half_sq(oracle::affine(x, sc, p));
                               },
                               sh, 1e-5)) < 1e-8);
}

TEST_CASE("prelu gradient uses slope alpha at zero") {
  Tensor<double> x({3});
  x.data = {-1.0, 0.0, 2.0};
  Tensor<double> gy = Tensor<double>::ones({3});
  Tensor<double> gx = prelu_input_grad(gy, x, 0.3);
  CHECK(gx.data[0] == doctest::Approx(0.3));
  CHECK(gx.data[1] == doctest::Approx(0.3));  // convention at the kink
  CHECK(gx.data[2] == doctest::Approx(1.0));
}

TEST_CASE("relu6 blend gradient at the clamp corners") {
  Tensor<double> x({4});
  x.data = {-1.0, 3.0, 7.0, 6.0};
  Tensor<double> gy = Tensor<double>::ones({4});
  const double a = 0.25;
  Tensor<double> gx = relu6_decay_input_grad(gy, x, a);
  CHECK(gx.data[0] == doctest::Approx(a));            // below 0: clamp slope 0
  CHECK(gx.data[1] == doctest::Approx(1.0));          // interior: slope 1 both parts
  CHECK(gx.data[2] == doctest::Approx(a));            // above 6: clamp slope 0
  CHECK(gx.data[3] == doctest::Approx(a));            // at the corner itself
}

TEST_CASE("avgpool gradient distributes evenly") {
  Tensor<double> x({1, 1, 4, 4});
  std::mt19937_64 rng(25);
  x = random_uniform<double>({1, 1, 4, 4}, -1.0, 1.0, rng);
  Tensor<double> y = avgpool2d_forward(x, 2, 2);
  Tensor<double> gy = half_sq_grad(y);
  Tensor<double> gx = avgpool2d_input_grad(gy, x.shape, 2, 2);

  // Direct check: each input cell sees gy/4 of its window.
  for (std::int64_t oh = 0; oh < 2; ++oh)
    for (std::int64_t ow = 0; ow < 2; ++ow)
      for (std::int64_t dh = 0; dh < 2; ++dh)
        for (std::int64_t dw = 0; dw < 2; ++dw)
          CHECK(gx(0, 0, oh * 2 + dh, ow * 2 + dw) == doctest::Approx(gy(0, 0, oh, ow) / 4.0));
}
