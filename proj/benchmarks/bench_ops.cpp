#include <benchmark/benchmark.h>

#include <random>

#include "tenet/convnet.hpp"
#include "tenet/ops.hpp"

using namespace tenet;

namespace {

Tensor random_input(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t(shape);
  for (float& v : t.data()) v = u(rng);
  return t;
}

// Forward and backward of one 3x3 convolution at the default model's widths.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto cin = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  const std::size_t cout = cin * 2;
  const Tensor x = random_input({16, cin, side, side}, 1);
  const Tensor w = random_input({cout, cin, 3, 3}, 2);
  for (auto _ : state) {
    Tape tape;
    Var xv = tape.leaf(x);
    Var wv = tape.leaf(w);
    tape.backward(ops::mean(ops::conv2d(xv, wv, 1, 1)));
    benchmark::DoNotOptimize(xv.grad());
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({3, 32})->Args({32, 16})->Args({64, 8});

void BM_ModelForward(benchmark::State& state) {
  const ConvNet net = ConvNet::init(ModelSpec::desk_default(), 3);
  const Tensor x = random_input({static_cast<std::size_t>(state.range(0)), 3, 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.logits(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(64);

}  // namespace
