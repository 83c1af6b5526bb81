#pragma once

#include "hbac/nn/layers.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

namespace hbac::nn {

enum class Topology { mlp, eegnet, multimodal };

std::string_view to_string(Topology t);
Topology topology_from_string(std::string_view s);

struct ModelSpec {
  Topology topology = Topology::eegnet;

  // waveform branch (EEGNet)
  std::size_t channels = 16;
  std::size_t samples = 2000;
  std::size_t temporal_kernel = 64;
  std::size_t f1 = 8;
  std::size_t depth = 2;
  std::size_t f2 = 16;
  std::size_t separable_kernel = 16;
  std::size_t pool1 = 4;
  std::size_t pool2 = 8;
  double eeg_dropout = 0.25;

  // spectrogram input [chains, scales, bins]
  std::size_t spec_chains = 4;
  std::size_t spec_scales = 40;
  std::size_t spec_bins = 625;

  // MLP: dense -> batchnorm -> relu per hidden layer, dropout after every
  // hidden layer but the last
  std::vector<std::size_t> mlp_hidden{512, 256};
  double mlp_dropout = 0.3;

  // 2-D branch: conv -> bn -> elu -> pool per entry
  std::vector<std::size_t> conv_channels{8, 16, 16, 32};
  std::size_t conv_kernel = 3;
  std::size_t conv_pool = 2;

  std::uint64_t seed = 0;

  bool uses_waveform() const { return topology != Topology::mlp; }
  bool uses_spectrogram() const { return topology != Topology::eegnet; }

  std::size_t wave_feature_width() const;
  std::size_t spec_feature_width() const;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep defaults; unknown keys are rejected.
  static ModelSpec from_json(const nlohmann::json& j);
};

// Closed-form trainable parameter count of the EEGNet topology.
std::size_t eegnet_parameter_count(const ModelSpec& s);

template <typename T>
struct ModelInput {
  Tensor<T> waveform;     // [B, channels, samples]
  Tensor<T> spectrogram;  // [B, chains, scales, bins]
};

template <typename T>
class ModelGraph {
 public:
  // Builds and initializes from spec.seed.
  explicit ModelGraph(ModelSpec spec);

  const ModelSpec& spec() const { return model_; }
  Topology topology() const { return model_.topology; }

  // Logits [B, 6].
  Tensor<T> forward(const ModelInput<T>& in, Mode mode);
  // Accumulates into every parameter gradient.
  void backward(const Tensor<T>& grad_logits);

  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  Parameter<T>& parameter(std::string_view id);
  void zero_grad();
  std::size_t parameter_count();

  Sequential<T>& wave_branch() { return wave_; }
  Sequential<T>& spec_branch() { return spec_branch_; }
  Dense<T>& head() { return *head_; }

  void for_each_layer(const std::function<void(Layer<T>&)>& fn);
  void freeze_dropout(bool frozen);

 private:
  ModelSpec model_;
  Sequential<T> wave_{"wave"};
  Sequential<T> spec_branch_{"spec"};
  std::unique_ptr<Dense<T>> head_;
  Concat<T> concat_;
  std::size_t batch_ = 0;
  bool has_forward_ = false;
};

extern template class ModelGraph<float>;
extern template class ModelGraph<double>;

}  // namespace hbac::nn
