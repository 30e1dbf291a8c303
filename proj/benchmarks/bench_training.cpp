#include <benchmark/benchmark.h>

#include "tenet/dataset.hpp"
#include "tenet/tenet.hpp"

using namespace tenet;

namespace {

Batch synthetic_batch(std::size_t n) {
  const Dataset d = make_synthetic(n, 1);
  return d.range(0, n);
}

void BM_BaselineStep(benchmark::State& state) {
  ConvNet net = ConvNet::init(ModelSpec::desk_default(), 2);
  SgdState opt;
  const Batch batch = synthetic_batch(static_cast<std::size_t>(state.range(0)));
  std::uint64_t step = 0;
  for (auto _ : state) baseline_step(net, batch, SgdConfig{}, opt, step++);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BaselineStep)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TenetStep(benchmark::State& state) {
  ConvNet net = ConvNet::init(ModelSpec::desk_default(), 2);
  SgdState opt;
  const Batch batch = synthetic_batch(static_cast<std::size_t>(state.range(0)));
  const TenetConfig cfg;
  std::uint64_t step = 0;
  for (auto _ : state) tenet_step(net, batch, cfg, SgdConfig{}, opt, 3, step++);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TenetStep)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
