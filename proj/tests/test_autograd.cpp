#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "stylab/autograd.hpp"
#include "stylab/gradcheck.hpp"
#include "stylab/ssl.hpp"

using namespace stylab;

TEST_CASE("relu matches its definition") {
  Tape t;
  Var y = relu(t.leaf(Tensor({3}, {-1.0f, 0.0f, 2.0f})));
  CHECK(y.value()[0] == 0.0f);
  CHECK(y.value()[1] == 0.0f);
  CHECK(y.value()[2] == 2.0f);
}

TEST_CASE("mean of 1..4 is 2.5") {
  Tape t;
  Var y = mean_all(t.leaf(Tensor({4}, {1, 2, 3, 4})));
  CHECK(y.value()[0] == doctest::Approx(2.5));
}

TEST_CASE("conv2d of ones with a full-size kernel of ones sums the window") {
  // 1x1x3x3 input of ones, 1x1x3x3 kernel of ones, no padding: one output, 9.
  Tape t;
  Var x = t.leaf(Tensor::full({1, 1, 3, 3}, 1.0f));
  Var w = t.leaf(Tensor::full({1, 1, 3, 3}, 1.0f));
  Var y = conv2d(x, w, 1, 0);
  CHECK(y.shape() == std::vector<int64_t>{1, 1, 1, 1});
  CHECK(y.value()[0] == doctest::Approx(9.0));
}

TEST_CASE("shape errors name the primitive and both shapes") {
  Tape t;
  Var a = t.leaf(Tensor::full({2, 3}, 1.0f));
  Var b = t.leaf(Tensor::full({3, 3}, 1.0f));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::runtime_error);
  CHECK_THROWS_WITH_AS(matmul(b, b), doctest::Contains("matmul"), std::runtime_error);
}

TEST_CASE("non-finite results surface as errors instead of propagating") {
  Tape t;
  Var x = t.leaf(Tensor({2}, {1.0f, 0.0f}));
  CHECK_THROWS_AS(log(x), std::runtime_error);           // log(0)
  Var zero = t.leaf(Tensor({2}, {0.0f, 0.0f}));
  Var one = t.leaf(Tensor({2}, {1.0f, 1.0f}));
  CHECK_THROWS_AS(div(one, zero), std::runtime_error);   // 1/0
}

TEST_CASE("instance_stats hand example") {
  // channel [[1,3],[5,7]]: mean 4, population std sqrt(5)
  Tape t;
  auto [mean, stdev] = instance_stats(t.leaf(Tensor({1, 2, 2}, {1, 3, 5, 7})));
  CHECK(mean.value()[0] == doctest::Approx(4.0));
  CHECK(stdev.value()[0] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-6));
}

TEST_CASE("instance_stats of a constant channel has zero std") {
  Tape t;
  auto [mean, stdev] = instance_stats(t.leaf(Tensor::full({1, 4, 4}, 0.75f)));
  CHECK(mean.value()[0] == doctest::Approx(0.75));
  CHECK(stdev.value()[0] == doctest::Approx(0.0));
}

TEST_CASE("instance_stats treats channels independently") {
  Tensor two({2, 2, 2}, {1, 3, 5, 7, 2, 2, 2, 2});
  Tape t;
  auto [mean, stdev] = instance_stats(t.leaf(two));
  Tape t1;
  auto [m1, s1] = instance_stats(t1.leaf(Tensor({1, 2, 2}, {1, 3, 5, 7})));
  CHECK(mean.value()[0] == m1.value()[0]);
  CHECK(stdev.value()[0] == s1.value()[0]);
  CHECK(mean.value()[1] == doctest::Approx(2.0));
  CHECK(stdev.value()[1] == doctest::Approx(0.0));
}

TEST_CASE("normalizing with instance stats recenters and rescales") {
  RngStream rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = testutil::random_tensor<float>({3, 6, 6}, rng, 0, 1);
    Tape t;
    Var xv = t.leaf(x);
    auto [mean, stdev] = instance_stats(xv);
    const int64_t C = 3, HW = 36;
    for (int64_t c = 0; c < C; ++c) {
      const double mu = mean.value()[c];
      const double sd = stdev.value()[c];
      if (sd <= 1e-3) continue;
      double acc = 0, acc2 = 0;
      for (int64_t i = 0; i < HW; ++i) {
        const double n = (x[c * HW + i] - mu) / (sd + 1e-12);
        acc += n;
        acc2 += n * n;
      }
      const double nm = acc / HW;
      const double nsd = std::sqrt(acc2 / HW - nm * nm);
      CHECK(std::abs(nm) < 1e-6);
      CHECK(std::abs(nsd - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("forward results are bit-identical across repeated runs") {
  RngStream rng(5);
  Tensor x = testutil::random_tensor<float>({2, 3, 9, 9}, rng);
  Tensor w = testutil::random_tensor<float>({4, 3, 3, 3}, rng);
  auto run = [&] {
    Tape t;
    Var y = global_avg_pool(relu(conv2d(t.leaf(x), t.leaf(w), 2, 1)));
    return y.value();
  };
  Tensor a = run(), b = run();
  CHECK(a.data == b.data);
}

TEST_CASE("grad_check: analytic gradient of sum of squares") {
  // f(x) = sum(x^2) at [1,2]: gradient [2,4]
  Tensor64 point({2}, {1.0, 2.0});
  const double err = grad_check(
      [](Tape64& t, Var64 x) { return sum_all(mul(x, x)); }, point, 1e-5);
  CHECK(err < 1e-7);
}

TEST_CASE("grad_check: constant function has zero gradient") {
  Tensor64 point({3}, {0.3, -0.2, 0.9});
  const double err = grad_check(
      [](Tape64& t, Var64 x) { return scalar_affine(sum_all(x), 0.0, 5.0); }, point, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check: contrastive loss through a one-layer encoder") {
  // Two-sample batch: four inputs through a fixed linear map, then the loss.
  RngStream rng(17);
  Tensor64 weights = testutil::random_tensor<double>({5, 4}, rng);
  Tensor64 point = testutil::random_tensor<double>({4, 5}, rng);
  const double err = grad_check(
      [&weights](Tape64& t, Var64 x) {
        return nt_xent(t, matmul(x, t.constant(weights)), 0.2);
      },
      point, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("every differentiable primitive passes gradient checks at random points") {
  RngStream rng(0xC0FFEE);
  for (const DiffPrimitive& prim : diff_primitive_set()) {
    CAPTURE(prim.name);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial)
      worst = std::max(worst, check_primitive(prim, rng.sub(prim.name).sub(trial), 1e-5));
    CHECK_MESSAGE(worst < 1e-5, prim.name, " worst rel err ", worst);
  }
}

TEST_CASE("backward accumulates through shared subexpressions") {
  // y = x*x + x: dy/dx = 2x + 1
  Tensor64 p({1}, {3.0});
  const double err = grad_check(
      [](Tape64& t, Var64 x) { return sum_all(add(mul(x, x), x)); }, p, 1e-6);
  CHECK(err < 1e-8);
}

TEST_CASE("parameters accumulate gradients via write_back") {
  ParamT<float> p(Tensor({2}, {1.0f, 2.0f}));
  Tape t;
  Var x = t.param(p);
  Var loss = sum_all(mul(x, x));
  t.backward(loss);
  t.write_back_param_grads();
  CHECK(p.grad[0] == doctest::Approx(2.0));
  CHECK(p.grad[1] == doctest::Approx(4.0));
}
