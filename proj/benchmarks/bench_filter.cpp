#include "hbac/dataset.hpp"
#include "hbac/filter.hpp"
#include "hbac/signals.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace hbac;

namespace {

void BM_BandpassFilter(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<float> x(n);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g(0.0f, 30.0f);
  for (auto& v : x) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(signals::bandpass_filter(std::span<const float>(x), 200.0, 0.5, 20.0, 4));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_BandpassFilter)->Arg(10000)->Arg(120000)->Unit(benchmark::kMicrosecond);

void BM_ConditionWindow(benchmark::State& state) {
  signals::EegWindow w;
  w.electrodes = dataset::synth_electrodes();
  w.samples = MatrixF(w.electrodes.size(), 10000);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> g(0.0f, 30.0f);
  for (auto& v : w.samples.values()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(signals::condition_window(w, {}));
}
BENCHMARK(BM_ConditionWindow)->Unit(benchmark::kMillisecond);

}  // namespace
