#include <benchmark/benchmark.h>

#include "lfr/diversity.hpp"
#include "lfr/rng.hpp"

namespace {

lfr::Tensor random_probe(std::int64_t m, std::int64_t d, std::uint64_t seed) {
  lfr::CounterRng rng(seed);
  lfr::Tensor t = lfr::Tensor::zeros({m, d});
  for (auto& v : t.mutable_values()) v = rng.normal();
  return t;
}

void BM_ComputeSignature(benchmark::State& state) {
  const std::int64_t m = state.range(0);
  lfr::Tensor probe = random_probe(m, 100, 1);
  lfr::ProjectorModel proj = lfr::make_projector(100, 256, 2, 256, lfr::InitSpec{}, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lfr::compute_signature(proj, probe));
  }
}
BENCHMARK(BM_ComputeSignature)->Arg(128)->Arg(256);

void BM_SelectDiverse(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  lfr::Tensor probe = random_probe(128, 100, 1);
  std::vector<lfr::ProjectorSignature> sigs;
  int index = 0;
  while (static_cast<int>(sigs.size()) < n) {
    lfr::ProjectorModel proj = lfr::make_projector(100, 64, 2, 64, lfr::InitSpec{},
                                                   1000 + static_cast<std::uint64_t>(index));
    try {
      auto sig = lfr::compute_signature(proj, probe);
      sig.projector_index = index;
      sigs.push_back(std::move(sig));
    } catch (const lfr::DegenerateSignatureError&) {
    }
    ++index;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(lfr::select_diverse(sigs, 6));
  }
}
BENCHMARK(BM_SelectDiverse)->Arg(20)->Arg(60);

}  // namespace
