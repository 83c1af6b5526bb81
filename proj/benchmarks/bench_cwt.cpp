#include "hbac/cwt.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace hbac;

namespace {

signals::MontageSignals random_montage(std::size_t n) {
  signals::MontageSignals ms;
  ms.signals = MatrixF(signals::kNumDifferentials, n);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g(0.0f, 20.0f);
  for (auto& v : ms.signals.values()) v = g(rng);
  return ms;
}

void BM_CwtPower(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto bank = cwt::scales_for_band(0.5, 40.0, 40, 200.0);
  cwt::CwtEngine engine(bank, n);
  std::vector<float> x(n);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  for (auto& v : x) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(engine.power(x));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_CwtPower)->Arg(10000)->Arg(12000)->Unit(benchmark::kMillisecond);

void BM_SpecHr(benchmark::State& state) {
  const auto ms = random_montage(10000);
  for (auto _ : state) benchmark::DoNotOptimize(cwt::build_spec_hr(ms));
}
BENCHMARK(BM_SpecHr)->Unit(benchmark::kMillisecond);

void BM_SpecLr(benchmark::State& state) {
  const auto ms = random_montage(120000);
  for (auto _ : state) benchmark::DoNotOptimize(cwt::build_spec_lr(ms));
}
BENCHMARK(BM_SpecLr)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace
