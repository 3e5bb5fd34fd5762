#include <benchmark/benchmark.h>

#include <random>

#include "aiasim/engine.hpp"
#include "aiasim/iommu.hpp"
#include "aiasim/synth.hpp"
#include "aiasim/validator.hpp"

using namespace aiasim;

namespace {

std::vector<PageIndex> page_stream(std::size_t n, PageIndex span) {
  std::mt19937_64 rng(1);
  std::vector<PageIndex> out(n);
  for (auto& p : out) p = rng() % span;
  return out;
}

void BM_ValidatorCharge(benchmark::State& state) {
  const auto pages = page_stream(1 << 14, state.range(0));
  for (auto _ : state) {
    Validator v;
    Tick now = 0;
    for (PageIndex p : pages) now += v.charge(1, {AccessType::Load, PhysAddr::of_page(p, 12)}, now).defer + 100;
    benchmark::DoNotOptimize(now);
  }
  state.SetItemsProcessed(state.iterations() * pages.size());
}
BENCHMARK(BM_ValidatorCharge)->Arg(64)->Arg(4096);

void BM_IotlbTranslate(benchmark::State& state) {
  const auto pages = page_stream(1 << 14, 256);
  for (auto _ : state) {
    Iotlb t({.tlb_size = static_cast<std::size_t>(state.range(0))});
    Tick now = 0;
    for (PageIndex p : pages) now += t.translate_charge(p, now).defer;
    benchmark::DoNotOptimize(now);
  }
  state.SetItemsProcessed(state.iterations() * pages.size());
}
BENCHMARK(BM_IotlbTranslate)->Arg(8)->Arg(64)->Arg(512);

void BM_EngineRun(benchmark::State& state) {
  SynthParams p;
  p.pipelines = 4;
  p.ops_per_pipeline = 2500;
  p.unique_pages = 64;
  p.pattern = {PatternKind::Random, 1};
  const Workload w = synth(p, 42);
  const Defense d = state.range(0) == 0 ? Defense{ValidatorConfig{}} : Defense{IommuConfig{}};
  for (auto _ : state) benchmark::DoNotOptimize(run(w, {ns_to_ticks(100), d, true}));
  state.SetItemsProcessed(state.iterations() * w.op_count() * 2);
}
BENCHMARK(BM_EngineRun)->Arg(0)->Arg(1);

}  // namespace
BENCHMARK_MAIN();
