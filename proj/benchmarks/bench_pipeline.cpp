#include <benchmark/benchmark.h>

#include "lfr/pipeline.hpp"

namespace {

/// One alternating epoch (E + M) at census-like shapes, scaled-down rows.
void BM_TrainEpoch(benchmark::State& state) {
  const std::int64_t rows = state.range(0);
  auto [train, test] = lfr::make_synthetic_clusters(rows, 50, 50, 2, 2.0, 3);
  (void)test;

  lfr::TrainConfig cfg;
  cfg.k = 6;
  cfg.n_candidates = 12;  // keep setup cheap; selection cost is benchmarked separately
  cfg.latent_dim = 256;
  cfg.encoder_hidden = 256;
  cfg.encoder_layers = 4;
  cfg.projector_hidden = 256;
  cfg.projector_layers = 2;
  cfg.batch_size = 128;
  cfg.seed = 5;

  lfr::TrainState ts = lfr::build_state(cfg, train);
  std::uint64_t epoch = 0;
  for (auto _ : state) {
    lfr::e_step_epoch(ts, train, cfg, epoch);
    lfr::m_step_epochs(ts, train, cfg, epoch);
    ++epoch;
  }
  state.counters["rows/s"] = benchmark::Counter(
      static_cast<double>(ts.encoder_steps) * 128.0, benchmark::Counter::kIsRate);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond)->Arg(1024)->Arg(4096);

}  // namespace
