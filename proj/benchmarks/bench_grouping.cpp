#include <benchmark/benchmark.h>

#include <random>

#include "tenet/grouping.hpp"

using namespace tenet;

namespace {

// CFG on one sample's feature maps at the default split (128 x 8 x 8).
void BM_CfgGroup(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 2.0f);
  Tensor maps({128, 8, 8});
  for (float& v : maps.data()) v = u(rng);
  const CfgOptions cfg{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 20};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(cfg_group(maps, cfg, seed++));
}
BENCHMARK(BM_CfgGroup)->Args({6, 1})->Args({6, 4})->Args({16, 4});

}  // namespace
