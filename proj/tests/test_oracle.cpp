#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "netbooster/oracle.hpp"

using namespace netbooster;

// The brute-force reference has to be trustworthy on its own, so pin it to
// hand-worked numbers rather than to any engine code.

TEST_CASE("reference conv on a worked 3x3 example") {
  Tensor<double> x({1, 1, 3, 3});
  x.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  Tensor<double> w({1, 1, 3, 3});
  w.data = {0, 0, 0, 0, 1, 0, 0, 0, 0};  // identity kernel
  Tensor<double> y = oracle::conv(x, w, nullptr, 1, 1, 1);
  CHECK(y.shape == Shape{1, 1, 3, 3});
  CHECK(y.data == x.data);

  // Averaging kernel, valid convolution: center window mean.
  Tensor<double> avg({1, 1, 3, 3});
  for (double& v : avg.data) v = 1.0 / 9.0;
  Tensor<double> m = oracle::conv(x, avg, nullptr, 1, 0, 1);
  CHECK(m.shape == Shape{1, 1, 1, 1});
  CHECK(m.data[0] == doctest::Approx(5.0));
}

TEST_CASE("reference conv stride and padding shape law") {
  Tensor<double> x({1, 1, 7, 7});
  Tensor<double> w({1, 1, 3, 3});
  CHECK(oracle::conv(x, w, nullptr, 2, 1, 1).shape == Shape{1, 1, 4, 4});
  CHECK(oracle::conv(x, w, nullptr, 2, 0, 1).shape == Shape{1, 1, 3, 3});
  CHECK(oracle::conv(x, w, nullptr, 3, 1, 1).shape == Shape{1, 1, 3, 3});
}

TEST_CASE("reference conv bias adds per output channel") {
  Tensor<double> x = Tensor<double>::zeros({1, 1, 2, 2});
  Tensor<double> w = Tensor<double>::zeros({2, 1, 1, 1});
  Tensor<double> b({2});
  b.data = {1.5, -2.5};
  Tensor<double> y = oracle::conv(x, w, &b, 1, 0, 1);
  CHECK(y(0, 0, 0, 0) == 1.5);
  CHECK(y(0, 1, 1, 1) == -2.5);
}

TEST_CASE("reference dense on a worked example") {
  Tensor<double> x({1, 2});
  x.data = {3.0, 4.0};
  Tensor<double> w({2, 2});
  w.data = {1.0, 0.0, 10.0, 1.0};  // rows are output neurons
  Tensor<double> b({2});
  b.data = {0.5, 0.0};
  Tensor<double> y = oracle::dense(x, w, &b);
  CHECK(y(0, 0) == doctest::Approx(3.5));
  CHECK(y(0, 1) == doctest::Approx(34.0));
}

TEST_CASE("chain applies layers in order and adds the skip") {
  Tensor<double> x({1, 1, 2, 2});
  x.data = {1, 2, 3, 4};

  oracle::ChainLayer dbl;
  dbl.kind = oracle::ChainLayer::Kind::conv;
  dbl.weight = Tensor<double>({1, 1, 1, 1});
  dbl.weight.data = {2.0};

  Tensor<double> no_skip = oracle::chain(x, {dbl, dbl}, false);
  CHECK(no_skip.data == std::vector<double>{4, 8, 12, 16});
  Tensor<double> with_skip = oracle::chain(x, {dbl, dbl}, true);
  CHECK(with_skip.data == std::vector<double>{5, 10, 15, 20});
}

TEST_CASE("merged kernel size and a delta-kernel identity") {
  std::mt19937_64 rng(31);
  Tensor<double> w1 = random_uniform<double>({3, 2, 3, 3}, -1.0, 1.0, rng);
  Tensor<double> delta = Tensor<double>::zeros({3, 3, 1, 1});
  for (std::int64_t c = 0; c < 3; ++c) delta(c, c, 0, 0) = 1.0;

  // Following with an identity 1x1 must reproduce w1 exactly.
  Tensor<double> m = oracle::merged_kernel(w1, delta);
  CHECK(m.shape == w1.shape);
  CHECK(max_rel_error(m, w1) == 0.0);

  // 3x3 after 3x3 spans 5x5.
  Tensor<double> w2 = random_uniform<double>({4, 3, 3, 3}, -1.0, 1.0, rng);
  CHECK(oracle::merged_kernel(w1, w2).shape == Shape{4, 2, 5, 5});
}

TEST_CASE("merged kernel reproduces composition on a worked 1d-style case") {
  // Two horizontal [1 1 1] box kernels compose to [1 2 3 2 1].
  Tensor<double> w1 = Tensor<double>::zeros({1, 1, 3, 3});
  Tensor<double> w2 = Tensor<double>::zeros({1, 1, 3, 3});
  for (std::int64_t j = 0; j < 3; ++j) {
    w1(0, 0, 1, j) = 1.0;
    w2(0, 0, 1, j) = 1.0;
  }
  Tensor<double> m = oracle::merged_kernel(w1, w2);
  const double expect[5] = {1, 2, 3, 2, 1};
  for (std::int64_t j = 0; j < 5; ++j) CHECK(m(0, 0, 2, j) == doctest::Approx(expect[j]));
  // Everything off the center row is zero.
  CHECK(m(0, 0, 0, 2) == 0.0);
  CHECK(m(0, 0, 4, 2) == 0.0);
}

TEST_CASE("finite differences recover an analytic gradient") {
  std::mt19937_64 rng(32);
  Tensor<double> x = random_uniform<double>({2, 3}, -1.0, 1.0, rng);
  Tensor<double> g = oracle::finite_diff_grad(
      [](const Tensor<double>& p) {
        double s = 0;
        for (double v : p.data) s += v * v * v;
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    CHECK(g.data[i] == doctest::Approx(3.0 * x.data[i] * x.data[i]).epsilon(1e-6));
}

TEST_CASE("reference sgd momentum recurrence") {
  Tensor<double> p = Tensor<double>::full({1}, 1.0);
  Tensor<double> g = Tensor<double>::full({1}, 1.0);
  Tensor<double> v = Tensor<double>::zeros({1});
  // lr=0.1, momentum=0.5, wd=0: v1=1, p1=0.9; v2=1.5, p2=0.75.
  oracle::sgd_step(p, g, v, 0.1, 0.5, 0.0);
  CHECK(p.data[0] == doctest::Approx(0.9));
  oracle::sgd_step(p, g, v, 0.1, 0.5, 0.0);
  CHECK(p.data[0] == doctest::Approx(0.75));
}
