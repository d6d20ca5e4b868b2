#include <benchmark/benchmark.h>

#include "bench_data.hpp"
#include "splatedit/spatial_index.hpp"

namespace {

using namespace splatedit;

void BM_KdBuild(benchmark::State& state) {
  const auto scene = bench::uniform_scene(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto index = KdIndex::build(scene);
    benchmark::DoNotOptimize(index);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdBuild)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_KdQuery16(benchmark::State& state) {
  const auto scene = bench::uniform_scene(static_cast<std::size_t>(state.range(0)));
  const auto index = KdIndex::build(scene);
  const auto queries = bench::uniform_scene(10'000, 99);
  std::size_t q = 0;
  for (auto _ : state) {
    auto r = index.knn(queries[q++ % queries.size()].center(), 16);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KdQuery16)->Arg(100'000)->Arg(1'000'000);

void BM_RelabelRoi(benchmark::State& state) {
  const auto scene = bench::uniform_scene(1'000'000);
  const auto overlay = bench::grid_labels(scene, 20);
  const auto index = KdIndex::build(scene);
  const Aabb roi = instance_aabb(scene, overlay, 0);
  for (auto _ : state) {
    auto out = relabel_roi(scene, overlay, roi, 16, &index);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_RelabelRoi)->Unit(benchmark::kMillisecond);

}  // namespace
