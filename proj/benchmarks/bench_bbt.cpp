#include <benchmark/benchmark.h>

#include "lfr/bbt.hpp"
#include "lfr/rng.hpp"

namespace {

std::vector<lfr::Tensor> random_outputs(int k, std::int64_t m, std::int64_t d, std::uint64_t seed,
                                        bool requires_grad) {
  lfr::CounterRng rng(seed);
  std::vector<lfr::Tensor> out;
  for (int i = 0; i < k; ++i) {
    lfr::Tensor t = lfr::Tensor::zeros({m, d}, requires_grad);
    for (auto& v : t.mutable_values()) v = rng.normal();
    out.push_back(std::move(t));
  }
  return out;
}

void BM_BbtLossForward(benchmark::State& state) {
  const std::int64_t m = state.range(0);
  auto y = random_outputs(6, m, 256, 1, false);
  auto yhat = random_outputs(6, m, 256, 2, false);
  lfr::BBTConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lfr::bbt_loss(y, yhat, cfg).item());
  }
}
BENCHMARK(BM_BbtLossForward)->Arg(128)->Arg(256)->Arg(512);

void BM_BbtLossBackward(benchmark::State& state) {
  const std::int64_t m = state.range(0);
  auto y = random_outputs(6, m, 256, 1, false);
  auto yhat = random_outputs(6, m, 256, 2, true);
  lfr::BBTConfig cfg;
  for (auto _ : state) {
    lfr::GradTape tape;
    lfr::TapeScope scope(tape);
    lfr::Tensor loss = lfr::bbt_loss(y, yhat, cfg);
    for (auto& t : yhat) t.zero_grad();
    lfr::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_BbtLossBackward)->Arg(128)->Arg(256);

}  // namespace
