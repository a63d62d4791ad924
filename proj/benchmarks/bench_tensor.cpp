#include <benchmark/benchmark.h>

#include "lfr/rng.hpp"
#include "lfr/tensor.hpp"

namespace {

lfr::Tensor random_tensor(lfr::Shape shape, std::uint64_t seed) {
  lfr::CounterRng rng(seed);
  lfr::Tensor t = lfr::Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_values()) v = rng.normal();
  return t;
}

void BM_MatmulF32(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  lfr::Tensor a = random_tensor({128, n}, 1);
  lfr::Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lfr::matmul(a, b));
  }
  state.counters["mac/s"] = benchmark::Counter(
      static_cast<double>(128 * n * n) * static_cast<double>(state.iterations()),
      benchmark::Counter::kIsRate);
}
BENCHMARK(BM_MatmulF32)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulF64Acc(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  lfr::Tensor a = random_tensor({128, n}, 1);
  lfr::Tensor b = random_tensor({n, 128}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lfr::matmul(a, b, lfr::MatmulAccum::f64));
  }
}
BENCHMARK(BM_MatmulF64Acc)->Arg(128)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  lfr::Tensor w1 = random_tensor({n, n}, 1).set_requires_grad(true);
  lfr::Tensor w2 = random_tensor({n, n}, 2).set_requires_grad(true);
  lfr::Tensor x = random_tensor({128, n}, 3);
  for (auto _ : state) {
    lfr::GradTape tape;
    lfr::TapeScope scope(tape);
    lfr::Tensor loss = lfr::sum(lfr::relu(lfr::matmul(lfr::relu(lfr::matmul(x, w1)), w2)));
    w1.zero_grad();
    w2.zero_grad();
    lfr::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(128)->Arg(256);

}  // namespace
