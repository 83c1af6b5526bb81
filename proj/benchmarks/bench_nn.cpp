#include "hbac/nn/loss.hpp"
#include "hbac/nn/model.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace hbac;
using namespace hbac::nn;

namespace {

ModelInput<float> random_input(const ModelSpec& s, std::size_t batch) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g;
  ModelInput<float> in;
  if (s.uses_waveform()) {
    in.waveform = Tensor<float>({batch, s.channels, s.samples});
    for (auto& v : in.waveform.values()) v = g(rng);
  }
  if (s.uses_spectrogram()) {
    in.spectrogram = Tensor<float>({batch, s.spec_chains, s.spec_scales, s.spec_bins});
    for (auto& v : in.spectrogram.values()) v = g(rng);
  }
  return in;
}

ModelSpec spec_for(int topology) {
  ModelSpec s;
  s.topology = static_cast<Topology>(topology);
  if (s.topology == Topology::mlp) s.spec_bins = 25;
  return s;
}

void BM_Forward(benchmark::State& state) {
  const auto s = spec_for(static_cast<int>(state.range(0)));
  ModelGraph<float> model(s);
  const auto in = random_input(s, 8);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(in, Mode::eval));
  state.SetLabel(std::string(to_string(s.topology)));
}
BENCHMARK(BM_Forward)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto s = spec_for(static_cast<int>(state.range(0)));
  ModelGraph<float> model(s);
  const auto in = random_input(s, 8);
  const std::vector<ClassDistribution> targets(8, ClassDistribution::uniform());
  for (auto _ : state) {
    const auto out = kl_loss(model.forward(in, Mode::train), targets);
    model.zero_grad();
    model.backward(out.grad);
  }
  state.SetLabel(std::string(to_string(s.topology)));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace
