#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "netbooster/ops.hpp"
#include "netbooster/optim.hpp"
#include "netbooster/oracle.hpp"
#include "netbooster/threading.hpp"

using namespace netbooster;

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3});
  CHECK(t.numel() == 6);
  for (float v : t.data) CHECK(v == 0.0f);

  t(1, 2) = 5.0f;
  CHECK(t.data[5] == 5.0f);

  Tensor<float> u = Tensor<float>::full({2, 3}, 1.5f);
  Tensor<float> s = t + u;
  CHECK(s(1, 2) == doctest::Approx(6.5f));
  CHECK(s(0, 0) == doctest::Approx(1.5f));

  CHECK_THROWS_AS(t + Tensor<float>({3, 2}), Error);

  Tensor<double> d = cast<double>(t);
  CHECK(d(1, 2) == 5.0);

  Tensor<float> t2 = t;
  CHECK(bitwise_equal(t, t2));
  t2.data[0] += 1e-8f;
  CHECK(!bitwise_equal(t, t2));
}

TEST_CASE("tensor 4d indexing is row major") {
  Tensor<double> t({2, 3, 4, 5});
  t(1, 2, 3, 4) = 7.0;
  CHECK(t.data[1 * 60 + 2 * 20 + 3 * 5 + 4] == 7.0);
  t(0, 1, 0, 2) = 3.0;
  CHECK(t.data[1 * 20 + 2] == 3.0);
}

TEST_CASE("max_rel_error scales by reference magnitude") {
  Tensor<double> a = Tensor<double>::full({2}, 100.0);
  Tensor<double> b = Tensor<double>::full({2}, 100.0);
  a.data[0] = 100.1;
  CHECK(max_rel_error(a, b) == doctest::Approx(0.1 / 100.0));
  // Zero reference must not divide by zero.
  Tensor<double> z = Tensor<double>::zeros({2});
  CHECK(std::isfinite(max_rel_error(a, z)));
}

TEST_CASE("parallel_for_chunks covers the range exactly once") {
  for (int workers : {1, 3, 8}) {
    set_worker_count(workers);
    std::vector<int> hits(100, 0);
    parallel_for_chunks(100, [&](std::int64_t, std::int64_t b, std::int64_t e) {
      for (std::int64_t i = b; i < e; ++i) hits[static_cast<std::size_t>(i)]++;
    });
    for (int h : hits) CHECK(h == 1);
  }
  set_worker_count(0);  // back to default
}

TEST_CASE("conv forward matches brute force over random shapes") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> kpick(0, 2);
  const std::int64_t kernels[] = {1, 3, 5};
  for (int rep = 0; rep < 30; ++rep) {
    const std::int64_t k = kernels[kpick(rng)];
    const std::int64_t stride = 1 + static_cast<std::int64_t>(rng() % 2);
    const std::int64_t pad = static_cast<std::int64_t>(rng() % 2);
    const std::int64_t ic = 1 + static_cast<std::int64_t>(rng() % 4);
    const std::int64_t oc = 1 + static_cast<std::int64_t>(rng() % 4);
    const std::int64_t hw = k + static_cast<std::int64_t>(rng() % 6);
    Tensor<double> x = random_uniform<double>({2, ic, hw, hw}, -1.0, 1.0, rng);
    Tensor<double> w = random_uniform<double>({oc, ic, k, k}, -1.0, 1.0, rng);
    Tensor<double> b = random_uniform<double>({oc}, -1.0, 1.0, rng);
    Tensor<double> got = conv2d_forward(x, w, &b, stride, pad, 1);
    Tensor<double> ref = oracle::conv(x, w, &b, stride, pad, 1);
    CHECK(max_rel_error(got, ref) < 1e-13);
  }
}

TEST_CASE("grouped and depthwise conv match brute force") {
  std::mt19937_64 rng(12);
  for (std::int64_t groups : {2L, 4L}) {
    const std::int64_t ic = 4, oc = 8, k = 3;
    Tensor<double> x = random_uniform<double>({2, ic, 6, 6}, -1.0, 1.0, rng);
    Tensor<double> w = random_uniform<double>({oc, ic / groups, k, k}, -1.0, 1.0, rng);
    Tensor<double> got = conv2d_forward(x, w, nullptr, 1, 1, groups);
    Tensor<double> ref = oracle::conv(x, w, nullptr, 1, 1, groups);
    CHECK(max_rel_error(got, ref) < 1e-13);
  }
  // Depthwise: groups == channels, one filter per channel.
  Tensor<double> x = random_uniform<double>({1, 3, 5, 5}, -1.0, 1.0, rng);
  Tensor<double> w = random_uniform<double>({3, 1, 3, 3}, -1.0, 1.0, rng);
  Tensor<double> got = conv2d_forward(x, w, nullptr, 2, 1, 3);
  Tensor<double> ref = oracle::conv(x, w, nullptr, 2, 1, 3);
  CHECK(max_rel_error(got, ref) < 1e-13);
}

TEST_CASE("conv rejects malformed arguments") {
  Tensor<float> x({1, 3, 5, 5});
  Tensor<float> w({4, 3, 3, 3});
  CHECK_THROWS_AS(conv2d_forward(x, w, nullptr, 1, 1, 2), Error);  // 3 % 2 != 0
  Tensor<float> wbad({4, 2, 3, 3});
  CHECK_THROWS_AS(conv2d_forward(x, wbad, nullptr, 1, 1, 1), Error);
  Tensor<float> wbig({4, 3, 7, 7});
  CHECK_THROWS_AS(conv2d_forward(x, wbig, nullptr, 1, 0, 1), Error);  // empty output
}

TEST_CASE("dense matches brute force and Eigen path handles bias") {
  std::mt19937_64 rng(13);
  Tensor<double> x = random_uniform<double>({4, 7}, -1.0, 1.0, rng);
  Tensor<double> w = random_uniform<double>({5, 7}, -1.0, 1.0, rng);
  Tensor<double> b = random_uniform<double>({5}, -1.0, 1.0, rng);
  CHECK(max_rel_error(dense_forward(x, w, &b), oracle::dense(x, w, &b)) < 1e-13);
  CHECK(max_rel_error(dense_forward(x, w, nullptr), oracle::dense(x, w, nullptr)) < 1e-13);
}

TEST_CASE("affine applies per channel scale and shift") {
  std::mt19937_64 rng(14);
  Tensor<double> x = random_uniform<double>({2, 3, 4, 4}, -1.0, 1.0, rng);
  Tensor<double> sc = random_uniform<double>({3}, 0.5, 2.0, rng);
  Tensor<double> sh = random_uniform<double>({3}, -1.0, 1.0, rng);
  CHECK(max_rel_error(affine_forward(x, sc, sh), oracle::affine(x, sc, sh)) < 1e-14);
}

TEST_CASE("activation forwards obey their definitions") {
  Tensor<double> x({5});
  x.data = {-2.0, -0.5, 0.0, 3.0, 8.0};

  SUBCASE("prelu is max(ax, x)") {
    Tensor<double> y0 = prelu_forward(x, 0.0);
    CHECK(y0.data == std::vector<double>{0.0, 0.0, 0.0, 3.0, 8.0});
    Tensor<double> yh = prelu_forward(x, 0.5);
    CHECK(yh.data == std::vector<double>{-1.0, -0.25, 0.0, 3.0, 8.0});
    Tensor<double> y1 = prelu_forward(x, 1.0);
    CHECK(y1.data == x.data);  // identity at full slope
  }

  SUBCASE("relu6 blend hits identity at slope 1") {
    Tensor<double> y0 = relu6_decay_forward(x, 0.0);
    CHECK(y0.data == std::vector<double>{0.0, 0.0, 0.0, 3.0, 6.0});
    Tensor<double> y1 = relu6_decay_forward(x, 1.0);
    CHECK(y1.data == x.data);
    Tensor<double> yh = relu6_decay_forward(x, 0.25);
    // 0.75*clamp(x,0,6) + 0.25*x elementwise
    CHECK(yh.data[0] == doctest::Approx(0.25 * -2.0));
    CHECK(yh.data[4] == doctest::Approx(0.75 * 6.0 + 0.25 * 8.0));
  }
}

TEST_CASE("global average pool and exact tiling") {
  Tensor<double> x({1, 1, 2, 2});
  x.data = {1.0, 2.0, 3.0, 6.0};
  Tensor<double> g = avgpool2d_forward(x, 0, 1);  // window 0 = global
  CHECK(g.shape == Shape{1, 1, 1, 1});
  CHECK(g.data[0] == doctest::Approx(3.0));

  Tensor<double> x2({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x2.data[i] = static_cast<double>(i);
  Tensor<double> p = avgpool2d_forward(x2, 2, 2);
  CHECK(p.shape == Shape{1, 1, 2, 2});
  CHECK(p.data[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(p.data[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));

  // 4x4 with window 3 stride 3 leaves a ragged edge: rejected.
  CHECK_THROWS_AS(avgpool2d_forward(x2, 3, 3), Error);
}

TEST_CASE("softmax cross entropy loss and gradient") {
  Tensor<double> logits({2, 3});
  logits.data = {1.0, 2.0, 3.0, 1000.0, 1001.0, 1002.0};  // second row tests stability
  Tensor<double> grad;
  const double loss = softmax_xent(logits, {2, 0}, grad);
  // Row softmax of (1,2,3) = softmax(0,1,2); -log p2 and -log p0.
  const double z = 1.0 + std::exp(1.0) + std::exp(2.0);
  const double expect = 0.5 * (-std::log(std::exp(2.0) / z) - std::log(1.0 / z));
  CHECK(loss == doctest::Approx(expect));
  // Gradient rows sum to zero and match (p - onehot)/N.
  CHECK(grad(0, 0) + grad(0, 1) + grad(0, 2) == doctest::Approx(0.0));
  CHECK(grad(0, 2) == doctest::Approx((std::exp(2.0) / z - 1.0) / 2.0));
  CHECK(std::isfinite(grad(1, 0)));

  CHECK_THROWS_AS(softmax_xent(logits, {0, 3}, grad), Error);   // label out of range
  CHECK_THROWS_AS(softmax_xent(logits, {0}, grad), Error);      // count mismatch
}

TEST_CASE("argmax breaks ties toward the lower index") {
  Tensor<float> logits({2, 3});
  logits.data = {0.0f, 2.0f, 2.0f, -1.0f, -5.0f, -0.5f};
  auto idx = argmax_rows(logits);
  CHECK(idx == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("sgd with momentum matches the reference update") {
  std::mt19937_64 rng(15);
  std::map<std::string, Tensor<double>> params;
  params.emplace("w", random_uniform<double>({3, 3}, -1.0, 1.0, rng));
  GradMap<double> grads;
  grads.emplace("w", random_uniform<double>({3, 3}, -1.0, 1.0, rng));

  Tensor<double> ref_p = params.at("w");
  Tensor<double> ref_v = Tensor<double>::zeros({3, 3});
  std::map<std::string, Tensor<double>> velocity;

  for (int step = 0; step < 5; ++step) {
    sgd_step(params, grads, velocity, 0.1, 0.9, 1e-4);
    oracle::sgd_step(ref_p, grads.at("w"), ref_v, 0.1, 0.9, 1e-4);
    CHECK(max_rel_error(params.at("w"), ref_p) < 1e-14);
  }

  GradMap<double> bad;
  bad.emplace("missing", Tensor<double>::zeros({1}));
  CHECK_THROWS_AS(sgd_step(params, bad, velocity, 0.1, 0.9, 0.0), Error);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.5) == doctest::Approx(0.5));
  CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25));
  CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0));
  CHECK_THROWS_AS(cosine_lr(-1, 100, 0.5), Error);
  CHECK_THROWS_AS(cosine_lr(101, 100, 0.5), Error);
}
