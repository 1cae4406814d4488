#include <benchmark/benchmark.h>

#include "spft/gradcheck.hpp"
#include "spft/ops.hpp"
#include "spft/rng.hpp"

using namespace spft;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double sigma = 0.5) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.gaussian(0.0, sigma);
  return t;
}

}  // namespace

static void BM_matmul_64(benchmark::State& state) {
  Rng rng(1);
  Tensor a = random_tensor({64, 64}, rng);
  Tensor b = random_tensor({64, 256}, rng);
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
}
BENCHMARK(BM_matmul_64);

static void BM_attention_fwd_bwd(benchmark::State& state) {
  Rng rng(2);
  int64_t t = state.range(0);
  ParameterStore store;
  Tensor& q = store.create("q", random_tensor({t, 64}, rng));
  Tensor& k = store.create("k", random_tensor({t, 64}, rng));
  Tensor& v = store.create("v", random_tensor({t, 64}, rng));
  for (auto _ : state) {
    Tensor out = attention(q, k, v, 4, true);
    backward(mean(out));
    store.zero_grads();
  }
}
BENCHMARK(BM_attention_fwd_bwd)->Arg(32)->Arg(64)->Arg(96);

static void BM_softmax_rows(benchmark::State& state) {
  Rng rng(3);
  Tensor x = random_tensor({64, 64}, rng, 2.0);
  NoGradGuard ng;
  for (auto _ : state) {
    Tensor y = softmax_rows(x);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_softmax_rows);
