#include <benchmark/benchmark.h>

#include "bench_data.hpp"
#include "splatedit/preview.hpp"

namespace {

using namespace splatedit;

void BM_RenderPreview(benchmark::State& state) {
  const auto scene = bench::uniform_scene(static_cast<std::size_t>(state.range(0)));
  ViewParams view;
  for (auto _ : state) {
    auto img = render_preview(scene, view);
    benchmark::DoNotOptimize(img);
  }
}
BENCHMARK(BM_RenderPreview)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_EncodePng(benchmark::State& state) {
  const auto scene = bench::uniform_scene(100'000);
  const auto img = render_preview(scene, ViewParams{});
  for (auto _ : state) {
    auto png = encode_png(img);
    benchmark::DoNotOptimize(png);
  }
}
BENCHMARK(BM_EncodePng)->Unit(benchmark::kMillisecond);

}  // namespace
