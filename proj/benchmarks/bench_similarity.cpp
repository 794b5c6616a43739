#include "bench_data.hpp"

#include "disa/features.hpp"
#include "disa/metrics.hpp"
#include "disa/mind.hpp"
#include "disa/parallel.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace disa;

TransformChain pose() {
  VecX p(6);
  p << 3.3, -2.1, 1.7, 0.05, -0.03, 0.02;
  return TransformChain::identity(TransformMode::Rigid).with_parameters(p);
}

struct DotFixture {
  FeatureMap fixed, moving;
  WeightMap weights;
  std::vector<std::size_t> samples;

  explicit DotFixture(bool quantized) {
    // 32^3 cells at stride 4 over a 128^3, 2 mm source grid: 32768 samples.
    const Geometry src = bench::cube_grid(128, 2.0);
    const Index3 cells{32, 32, 32};
    fixed = FeatureMap(src, 4, cells, 16, bench::unit_descriptors(product(cells), 16, 1));
    moving = FeatureMap(src, 4, cells, 16, bench::unit_descriptors(product(cells), 16, 2));
    if (quantized) {
      fixed = quantize(fixed);
      moving = quantize(moving);
    }
    weights = WeightMap::from_volume(Volume(fixed.cell_geometry(), 1.0f));
    samples = default_samples(weights);
  }
};

void BM_DotValue(benchmark::State& state) {
  parallel::set_thread_count(static_cast<int>(state.range(1)));
  const DotFixture d(state.range(0) != 0);
  const DotObjective obj(d.fixed, d.moving, d.weights, d.samples);
  const TransformChain t = pose();
  for (auto _ : state) benchmark::DoNotOptimize(obj.value(t));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * obj.sample_count()));
  state.SetLabel(state.range(0) ? "int8" : "float32");
  parallel::set_thread_count(0);
}
BENCHMARK(BM_DotValue)->ArgsProduct({{0, 1}, {1, 0}})->ArgNames({"int8", "threads"})->Unit(benchmark::kMicrosecond);

void BM_DotValueAndGradient(benchmark::State& state) {
  parallel::set_thread_count(1);
  const DotFixture d(false);
  const DotObjective obj(d.fixed, d.moving, d.weights, d.samples);
  const TransformChain t = pose();
  VecX g;
  for (auto _ : state) benchmark::DoNotOptimize(obj.value_and_gradient(t, g));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * obj.sample_count()));
  parallel::set_thread_count(0);
}
BENCHMARK(BM_DotValueAndGradient)->Unit(benchmark::kMicrosecond);

void BM_Lc2Global(benchmark::State& state) {
  parallel::set_thread_count(1);
  const int n = static_cast<int>(state.range(0));
  const Volume f = bench::textured_volume(n, 2.0, 1);
  const Volume m = bench::textured_volume(n, 2.0, 2);
  const WeightMap w = weight_map(f);
  const Lc2GlobalObjective obj(f, m, w);
  const TransformChain t = pose();
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(t));
  state.counters["centres"] = static_cast<double>(obj.center_count());
  parallel::set_thread_count(0);
}
BENCHMARK(BM_Lc2Global)->Arg(48)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_MindSsc(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Volume v = bench::textured_volume(n, 2.0, 3);
  for (auto _ : state) benchmark::DoNotOptimize(mind_ssc(v));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * v.size()));
}
BENCHMARK(BM_MindSsc)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
