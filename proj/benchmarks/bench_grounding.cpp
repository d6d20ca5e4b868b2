#include <benchmark/benchmark.h>

#include "bench_data.hpp"
#include "splatedit/grounding.hpp"
#include "splatedit/scorer.hpp"

namespace {

using namespace splatedit;

void BM_CatalogBuild(benchmark::State& state) {
  const auto scene = bench::uniform_scene(1'000'000);
  const auto overlay = bench::grid_labels(scene, 20);
  for (auto _ : state) {
    auto cat = InstanceCatalog::build(scene, overlay);
    benchmark::DoNotOptimize(cat);
  }
}
BENCHMARK(BM_CatalogBuild)->Unit(benchmark::kMillisecond);

void BM_GroundQuery(benchmark::State& state) {
  const auto scene = bench::uniform_scene(1'000'000);
  const auto overlay = bench::grid_labels(scene, 20);
  const auto cat = InstanceCatalog::build(scene, overlay);
  const auto cmd = parse_prompt("remove the chair to the left of the table");
  LexicalScorer scorer;
  for (auto _ : state) {
    auto r = ground_query(cat, "remove the chair to the left of the table", primary_query(cmd), scorer);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_GroundQuery)->Unit(benchmark::kMicrosecond);

}  // namespace
