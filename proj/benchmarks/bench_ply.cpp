#include <benchmark/benchmark.h>

#include "bench_data.hpp"

namespace {

using namespace splatedit;

void BM_SerializePly(benchmark::State& state) {
  const auto scene = bench::uniform_scene(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto bytes = serialize_ply(scene.splats());
    benchmark::DoNotOptimize(bytes);
  }
  state.SetBytesProcessed(state.iterations() * state.range(0) * sizeof(GaussianSplat));
}
BENCHMARK(BM_SerializePly)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_ParsePly(benchmark::State& state) {
  const auto scene = bench::uniform_scene(static_cast<std::size_t>(state.range(0)));
  const auto bytes = serialize_ply(scene.splats());
  for (auto _ : state) {
    auto parsed = parse_ply(bytes);
    benchmark::DoNotOptimize(parsed);
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_ParsePly)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

}  // namespace
