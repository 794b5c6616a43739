#include "bench_data.hpp"

#include "disa/cnn.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace disa;

Tensor random_tensor(int channels, int n, std::uint64_t seed) {
  Tensor t(channels, {n, n, n});
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (float& x : t.data) x = d(rng);
  return t;
}

void BM_Conv3d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const LayerSpec layer = LayerSpec::conv(c, c, 3);
  ConvWeights w;
  w.kernel = random_tensor(c * c * 27, 1, 1).data;
  w.bias.assign(static_cast<std::size_t>(c), 0.01f);
  const Tensor in = random_tensor(c, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d(in, layer, w));
  // Multiply-adds per output voxel: c_in * c_out * 27.
  state.counters["GMAC"] = benchmark::Counter(static_cast<double>(state.iterations()) * c * c * 27.0 * n * n * n / 1e9,
                                                benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv3d)->Args({16, 32})->Args({24, 16})->Unit(benchmark::kMillisecond);

void BM_BlurPool(benchmark::State& state) {
  const Tensor in = random_tensor(16, static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(blurpool(in));
}
BENCHMARK(BM_BlurPool)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Infer(benchmark::State& state) {
  const Network net = Network::random(NetworkSpec::reference(), 1);
  const Volume v = normalize(bench::textured_volume(static_cast<int>(state.range(0)), 2.0, 4));
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(v));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * v.size()));
}
BENCHMARK(BM_Infer)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
