#include <doctest.h>

#include <cmath>

#include "samsgl/engine/ops.hpp"
#include "support.hpp"

using namespace samsgl;
using engine::Tensor;
using T = Tensor<double>;
using samsgl::testing::random_const;
using samsgl::testing::random_param;

TEST_CASE("matmul by identity and hand example") {
  std::mt19937_64 rng(1);
  auto b = random_const({3, 5}, rng);
  auto eye = T::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto out = engine::matmul(eye, b);
  CHECK(std::vector<double>(out.values().begin(), out.values().end()) ==
        std::vector<double>(b.values().begin(), b.values().end()));

  auto a = T::constant({2, 2}, {1, 2, 3, 4});
  auto ones = T::constant({2, 1}, {1, 1});
  auto r = engine::matmul(a, ones);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.values()[0] == 3.0);
  CHECK(r.values()[1] == 7.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = T::zeros({2, 3});
  auto b = T::zeros({4, 2});
  try {
    engine::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match finite differences") {
  std::mt19937_64 rng(2);
  auto a = random_param({5, 4}, rng);
  auto b = random_param({4, 6}, rng);
  auto w = random_const({5, 6}, rng);
  auto rep = engine::grad_check<double>([&] { return engine::sum(engine::mul(engine::matmul(a, b), w)); },
                                        {{"a", a}, {"b", b}}, 1e-5, 1e-6);
  CHECK(rep.passed);
  CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("conv1d_same identity kernel, zero padding, gradients") {
  std::mt19937_64 rng(3);
  const std::size_t L = 6, D = 3, k = 3;
  auto x = random_const({L, D}, rng);
  std::vector<double> kv(k * D * D, 0.0);
  for (std::size_t d = 0; d < D; ++d) kv[(1 * D + d) * D + d] = 1.0;
  auto y = engine::conv1d_same(x, T::constant({k, D, D}, kv));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);

  auto ones = engine::conv1d_same(T::constant({4, 1}, {1, 1, 1, 1}), T::constant({3, 1, 1}, {1, 1, 1}));
  CHECK(std::vector<double>(ones.values().begin(), ones.values().end()) == std::vector<double>{2, 3, 3, 2});

  CHECK_THROWS_AS(engine::conv1d_same(x, T::zeros({2, D, D})), ConfigError);

  auto xp = random_param({2, L, D}, rng);
  auto kp = random_param({k, D, 2}, rng);
  auto w = random_const({2, L, 2}, rng);
  auto rep = engine::grad_check<double>([&] { return engine::sum(engine::mul(engine::conv1d_same(xp, kp), w)); },
                                        {{"x", xp}, {"kernel", kp}}, 1e-5, 1e-6);
  CHECK(rep.passed);
}

TEST_CASE("fully_connected identity, hand example and gradients") {
  std::mt19937_64 rng(4);
  auto x = T::constant({2}, {1, 2});
  auto eye = T::constant({2, 2}, {1, 0, 0, 1});
  auto y = engine::fully_connected(x, eye, T::constant({2}, {1, 1}));
  CHECK(y.values()[0] == 2.0);
  CHECK(y.values()[1] == 3.0);
  auto same = engine::fully_connected(x, eye, T::constant({2}, {0, 0}));
  CHECK(same.values()[0] == 1.0);
  CHECK(same.values()[1] == 2.0);
  CHECK_THROWS_AS(engine::fully_connected(x, T::zeros({3, 2})), DimensionError);

  auto xp = random_param({3, 2, 4}, rng);
  auto wp = random_param({4, 5}, rng);
  auto bp = random_param({5}, rng);
  auto w = random_const({3, 2, 5}, rng);
  auto rep = engine::grad_check<double>(
      [&] { return engine::sum(engine::mul(engine::fully_connected(xp, wp, bp), w)); },
      {{"x", xp}, {"w", wp}, {"b", bp}}, 1e-5, 1e-6);
  CHECK(rep.passed);
}

TEST_CASE("activations: values and gradients away from the relu kink") {
  CHECK(engine::sigmoid(T::scalar(0.0)).item() == 0.5);
  CHECK(engine::relu(T::scalar(-3.0)).item() == 0.0);

  std::mt19937_64 rng(5);
  auto x = random_param({20}, rng, 2.0);
  std::vector<double> v(x.values().begin(), x.values().end());
  for (auto& e : v)
    if (std::abs(e) < 1e-2) e = 0.5;
  x.assign(v);
  for (auto kind : {engine::Activation::relu, engine::Activation::sigmoid, engine::Activation::tanh,
                    engine::Activation::softplus}) {
    auto w = random_const({20}, rng);
    auto rep = engine::grad_check<double>([&] { return engine::sum(engine::mul(engine::activation(x, kind), w)); },
                                          {{"x", x}}, 1e-5, 1e-6);
    CHECK(rep.passed);
  }
}

TEST_CASE("backward: hand derivatives and misuse") {
  auto x = T::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  engine::backward(engine::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = T::parameter({3}, {1, 2, 3});
  auto loss = engine::mean(engine::square(y));
  engine::backward(loss);
  CHECK(y.grad()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(y.grad()[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(y.grad()[2] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(engine::backward(loss), UsageError);

  auto z = T::parameter({2}, {1, 2});
  CHECK_THROWS_AS(engine::backward(engine::scale(z, 2.0)), UsageError);
}

TEST_CASE("grad_check: linear functions are exact, sigmoid chains are tight") {
  std::mt19937_64 rng(6);
  auto x = random_param({7}, rng);
  auto w = random_const({7}, rng);
  auto lin = engine::grad_check<double>([&] { return engine::sum(engine::mul(x, w)); }, {{"x", x}}, 1e-5, 1e-9);
  CHECK(lin.max_rel_error < 1e-9);

  auto chain = engine::grad_check<double>(
      [&] { return engine::sum(engine::sigmoid(engine::scale(engine::sigmoid(engine::mul(x, w)), 3.0))); },
      {{"x", x}}, 1e-5, 1e-6);
  CHECK(chain.passed);
  CHECK(chain.max_rel_error <= 1e-6);
}

TEST_CASE("ops do not mutate inputs and are deterministic") {
  std::mt19937_64 rng(7);
  auto a = random_const({4, 3}, rng);
  auto b = random_const({3, 2}, rng);
  std::vector<double> before(a.values().begin(), a.values().end());
  auto r1 = engine::matmul(engine::tanh(a), b);
  auto r2 = engine::matmul(engine::tanh(a), b);
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) == before);
  CHECK(std::vector<double>(r1.values().begin(), r1.values().end()) ==
        std::vector<double>(r2.values().begin(), r2.values().end()));
}

TEST_CASE("graph_aggregate, roll_time, scale_rows and softmax gradients") {
  std::mt19937_64 rng(8);
  auto A = random_param({3, 3}, rng);
  auto x = random_param({2, 3, 4, 2}, rng);
  auto w = random_const({2, 3, 4, 2}, rng);
  auto rep = engine::grad_check<double>(
      [&] { return engine::sum(engine::mul(engine::graph_aggregate(A, x), w)); }, {{"A", A}, {"x", x}}, 1e-5, 1e-6);
  CHECK(rep.passed);

  auto rolled = engine::grad_check<double>(
      [&] { return engine::sum(engine::mul(engine::roll_time(x, 2, {0, 1, 2, 3, 1, 2}, true), w)); }, {{"x", x}},
      1e-5, 1e-6);
  CHECK(rolled.passed);

  auto s = random_param({2, 3, 4}, rng);
  auto rows = engine::grad_check<double>(
      [&] { return engine::sum(engine::mul(engine::scale_rows(x, engine::softmax_last(s)), w)); },
      {{"x", x}, {"s", s}}, 1e-5, 1e-6);
  CHECK(rows.passed);
}

TEST_CASE("logit rejects values outside (0, 1)") {
  CHECK_THROWS_AS(engine::logit(T::constant({2}, {0.5, 1.0})), DomainError);
  CHECK(engine::logit(T::scalar(0.5)).item() == 0.0);
}

TEST_CASE("float tensors run the same ops") {
  auto a = Tensor<float>::parameter({2, 2}, {1, 2, 3, 4});
  auto loss = engine::sum(engine::matmul(a, a));
  engine::backward(loss);
  CHECK(loss.item() == doctest::Approx(54.0));
  CHECK(a.grad().size() == 4);
}
