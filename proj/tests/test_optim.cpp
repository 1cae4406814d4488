#include <cmath>

#include "doctest.h"
#include "spft/digest.hpp"
#include "spft/ops.hpp"
#include "spft/optim.hpp"
#include "spft/rng.hpp"

using namespace spft;

TEST_CASE("bias-corrected first Adam step moves a scalar by about lr") {
  ParameterStore store;
  Tensor& w = store.create("w", Tensor::scalar(1.0));
  w.grad()[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamOptimizer adam(cfg);
  adam.step(store);
  CHECK(w.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(adam.step_count() == 1);
  CHECK_FALSE(w.has_grad());  // grads zeroed after the update
}

TEST_CASE("frozen parameter with a nonzero grad is untouched, bit for bit") {
  ParameterStore store;
  Tensor& w = store.create("w", Tensor::from_data({3}, {0.5, -1.25, 2.0}));
  std::vector<double> before = w.data();
  w.grad() = {1.0, 1.0, 1.0};  // grads forced in despite freezing
  store.freeze("w");
  w.grad() = {1.0, 1.0, 1.0};
  AdamOptimizer adam({});
  adam.step(store);
  for (size_t i = 0; i < 3; ++i) CHECK(w.data()[i] == before[i]);
}

TEST_CASE("optimizer step with every parameter frozen is a byte-level no-op") {
  Rng rng(3);
  ParameterStore store;
  for (int i = 0; i < 4; ++i) {
    Tensor t = Tensor::zeros({5, 5});
    for (double& v : t.data()) v = rng.gaussian();
    store.create("p" + std::to_string(i), std::move(t));
  }
  store.freeze_all();
  std::string before = store_digest(store);
  AdamOptimizer adam({});
  adam.step(store);
  CHECK(store_digest(store) == before);
}

TEST_CASE("missing grad on a trainable parameter is a contract error") {
  ParameterStore store;
  store.create("w", Tensor::scalar(1.0));
  AdamOptimizer adam({});
  CHECK_THROWS_AS(adam.step(store), Error);
}

// Independent oracle: a textbook scalar Adam run, written out longhand here.
TEST_CASE("100 Adam steps on (w-3)^2 from w=0 reach the minimum region") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double ref_w = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    double g = 2.0 * (ref_w - 3.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mhat = m / (1 - std::pow(b1, t));
    double vhat = v / (1 - std::pow(b2, t));
    ref_w -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  ParameterStore store;
  Tensor& w = store.create("w", Tensor::scalar(0.0));
  AdamConfig cfg;
  cfg.lr = lr;
  AdamOptimizer adam(cfg);
  for (int t = 0; t < 100; ++t) {
    Tensor delta = add(w, Tensor::scalar(-3.0));
    Tensor loss = mul(delta, delta);
    backward(loss);
    adam.step(store);
  }
  CHECK(w.data()[0] == doctest::Approx(ref_w).epsilon(1e-12));
  CHECK(std::fabs(w.data()[0] - 3.0) < 0.05);
}

TEST_CASE("global norm clipping rescales trainable grads only") {
  ParameterStore store;
  Tensor& a = store.create("a", Tensor::from_data({2}, {0.0, 0.0}));
  Tensor& b = store.create("b", Tensor::from_data({2}, {0.0, 0.0}));
  store.freeze("b");
  a.grad() = {3.0, 4.0};  // norm 5
  b.grad() = {8.0, 6.0};
  double norm = clip_global_norm(store, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));
  CHECK(b.grad()[0] == doctest::Approx(8.0));  // frozen grads untouched
}

TEST_CASE("duplicate parameter names are rejected") {
  ParameterStore store;
  store.create("w", Tensor::scalar(1.0));
  CHECK_THROWS_AS(store.create("w", Tensor::scalar(2.0)), Error);
}
