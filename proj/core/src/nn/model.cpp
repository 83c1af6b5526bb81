#include "hbac/nn/model.hpp"

#include "hbac/types.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace hbac::nn {

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::mlp: return "mlp";
    case Topology::eegnet: return "eegnet";
    case Topology::multimodal: return "multimodal";
  }
  return "unknown";
}

Topology topology_from_string(std::string_view s) {
  if (s == "mlp") return Topology::mlp;
  if (s == "eegnet") return Topology::eegnet;
  if (s == "multimodal") return Topology::multimodal;
  throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected mlp, eegnet or multimodal)");
}

std::size_t ModelSpec::wave_feature_width() const {
  return f2 * (samples / pool1 / pool2);
}

std::size_t ModelSpec::spec_feature_width() const {
  if (topology == Topology::mlp) return mlp_hidden.empty() ? spec_chains * spec_scales * spec_bins : mlp_hidden.back();
  std::size_t h = spec_scales, w = spec_bins;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    h /= conv_pool;
    w /= conv_pool;
  }
  return (conv_channels.empty() ? spec_chains : conv_channels.back()) * h * w;
}

void ModelSpec::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("model: " + msg);
  };
  if (uses_waveform()) {
    need(channels >= 1 && samples >= 1, "waveform dims must be positive");
    need(temporal_kernel >= 1 && f1 >= 1 && depth >= 1 && f2 >= 1 && separable_kernel >= 1, "EEGNet sizes must be positive");
    need(pool1 >= 1 && pool2 >= 1, "pool sizes must be positive");
    need(samples / pool1 / pool2 >= 1, "samples " + std::to_string(samples) + " too short for pooling " +
                                           std::to_string(pool1) + "x" + std::to_string(pool2));
    need(eeg_dropout >= 0.0 && eeg_dropout < 1.0, "eeg_dropout must be in [0, 1)");
  }
  if (uses_spectrogram()) {
    need(spec_chains >= 1 && spec_scales >= 1 && spec_bins >= 1, "spectrogram dims must be positive");
    if (topology == Topology::mlp) {
      for (auto h : mlp_hidden) need(h >= 1, "mlp hidden sizes must be positive");
      need(mlp_dropout >= 0.0 && mlp_dropout < 1.0, "mlp_dropout must be in [0, 1)");
    } else {
      need(conv_kernel >= 1 && conv_pool >= 1, "conv kernel and pool must be positive");
      for (auto c : conv_channels) need(c >= 1, "conv channels must be positive");
      need(spec_feature_width() >= 1, "spectrogram too small for " + std::to_string(conv_channels.size()) +
                                          " pooling blocks");
    }
  }
}

nlohmann::json ModelSpec::to_json() const {
  return {
      {"topology", std::string(to_string(topology))},
      {"channels", channels},
      {"samples", samples},
      {"temporal_kernel", temporal_kernel},
      {"f1", f1},
      {"depth", depth},
      {"f2", f2},
      {"separable_kernel", separable_kernel},
      {"pool1", pool1},
      {"pool2", pool2},
      {"eeg_dropout", eeg_dropout},
      {"spec_chains", spec_chains},
      {"spec_scales", spec_scales},
      {"spec_bins", spec_bins},
      {"mlp_hidden", mlp_hidden},
      {"mlp_dropout", mlp_dropout},
      {"conv_channels", conv_channels},
      {"conv_kernel", conv_kernel},
      {"conv_pool", conv_pool},
      {"seed", seed},
  };
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("model: expected an object");
  ModelSpec s;
  for (const auto& [key, v] : j.items()) {
    if (key == "topology") s.topology = topology_from_string(v.get<std::string>());
    else if (key == "channels") s.channels = v.get<std::size_t>();
    else if (key == "samples") s.samples = v.get<std::size_t>();
    else if (key == "temporal_kernel") s.temporal_kernel = v.get<std::size_t>();
    else if (key == "f1") s.f1 = v.get<std::size_t>();
    else if (key == "depth") s.depth = v.get<std::size_t>();
    else if (key == "f2") s.f2 = v.get<std::size_t>();
    else if (key == "separable_kernel") s.separable_kernel = v.get<std::size_t>();
    else if (key == "pool1") s.pool1 = v.get<std::size_t>();
    else if (key == "pool2") s.pool2 = v.get<std::size_t>();
    else if (key == "eeg_dropout") s.eeg_dropout = v.get<double>();
    else if (key == "spec_chains") s.spec_chains = v.get<std::size_t>();
    else if (key == "spec_scales") s.spec_scales = v.get<std::size_t>();
    else if (key == "spec_bins") s.spec_bins = v.get<std::size_t>();
    else if (key == "mlp_hidden") s.mlp_hidden = v.get<std::vector<std::size_t>>();
    else if (key == "mlp_dropout") s.mlp_dropout = v.get<double>();
    else if (key == "conv_channels") s.conv_channels = v.get<std::vector<std::size_t>>();
    else if (key == "conv_kernel") s.conv_kernel = v.get<std::size_t>();
    else if (key == "conv_pool") s.conv_pool = v.get<std::size_t>();
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("model: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

std::size_t eegnet_parameter_count(const ModelSpec& s) {
  const std::size_t fd = s.f1 * s.depth;
  return s.f1 * s.temporal_kernel          // temporal conv
         + 2 * s.f1                        // bn
         + fd * s.channels                 // depthwise spatial
         + 2 * fd                          // bn
         + fd * s.separable_kernel         // separable: depthwise
         + fd * s.f2                       // separable: pointwise
         + 2 * s.f2                        // bn
         + s.wave_feature_width() * kNumClasses + kNumClasses;
}

namespace {

std::uint64_t layer_seed(std::uint64_t seed, std::uint64_t ordinal) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(ordinal), 0xd50u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

template <typename T>
ModelGraph<T>::ModelGraph(ModelSpec spec) : model_(std::move(spec)) {
  model_.validate();
  const auto& s = model_;
  std::uint64_t ordinal = 0;

  if (s.uses_waveform()) {
    const std::size_t fd = s.f1 * s.depth;
    wave_.template add<TemporalConv<T>>(s.f1, s.temporal_kernel);
    wave_.template add<BatchNorm<T>>(s.f1);
    wave_.template add<DepthwiseConv2d<T>>(s.f1, s.depth, s.channels, 1);
    wave_.template add<BatchNorm<T>>(fd);
    wave_.template add<Elu<T>>();
    wave_.template add<AvgPool<T>>(1, s.pool1);
    wave_.template add<Dropout<T>>(s.eeg_dropout, layer_seed(s.seed, ++ordinal));
    wave_.template add<SeparableConv2d<T>>(fd, s.f2, 1, s.separable_kernel);
    wave_.template add<BatchNorm<T>>(s.f2);
    wave_.template add<Elu<T>>();
    wave_.template add<AvgPool<T>>(1, s.pool2);
    wave_.template add<Dropout<T>>(s.eeg_dropout, layer_seed(s.seed, ++ordinal));
    wave_.template add<Flatten<T>>();
  }
  if (s.uses_spectrogram()) {
    if (s.topology == Topology::mlp) {
      spec_branch_.template add<Flatten<T>>();
      std::size_t in = s.spec_chains * s.spec_scales * s.spec_bins;
      for (std::size_t i = 0; i < s.mlp_hidden.size(); ++i) {
        spec_branch_.template add<Dense<T>>(in, s.mlp_hidden[i]);
        spec_branch_.template add<BatchNorm<T>>(s.mlp_hidden[i]);
        spec_branch_.template add<Relu<T>>();
        if (i + 1 < s.mlp_hidden.size()) spec_branch_.template add<Dropout<T>>(s.mlp_dropout, layer_seed(s.seed, ++ordinal));
        in = s.mlp_hidden[i];
      }
    } else {
      std::size_t in = s.spec_chains;
      for (auto c : s.conv_channels) {
        spec_branch_.template add<Conv2d<T>>(in, c, s.conv_kernel, s.conv_kernel);
        spec_branch_.template add<BatchNorm<T>>(c);
        spec_branch_.template add<Elu<T>>();
        spec_branch_.template add<AvgPool<T>>(s.conv_pool, s.conv_pool);
        in = c;
      }
      spec_branch_.template add<Flatten<T>>();
    }
  }

  std::size_t features = 0;
  if (s.uses_waveform()) features += s.wave_feature_width();
  if (s.uses_spectrogram()) features += s.spec_feature_width();
  head_ = std::make_unique<Dense<T>>(features, kNumClasses);
  head_->weight().id = "head.weight";
  head_->bias().id = "head.bias";

  Rng rng(s.seed);
  wave_.initialize(rng);
  spec_branch_.initialize(rng);
  head_->initialize(rng);
}

template <typename T>
Tensor<T> ModelGraph<T>::forward(const ModelInput<T>& in, Mode mode) {
  const auto& s = model_;
  Tensor<T> wave_features, spec_features;
  std::size_t batch = 0;
  if (s.uses_waveform()) {
    const auto& x = in.waveform;
    if (x.rank() != 3 || x.dim(1) != s.channels || x.dim(2) != s.samples || x.dim(0) == 0)
      throw std::invalid_argument("waveform input expects [B," + std::to_string(s.channels) + "," +
                                  std::to_string(s.samples) + "], got " + shape_string(x.shape()));
    batch = x.dim(0);
    wave_features = wave_.forward(x.reshaped({batch, 1, s.channels, s.samples}), mode);
  }
  if (s.uses_spectrogram()) {
    const auto& x = in.spectrogram;
    if (x.rank() != 4 || x.dim(1) != s.spec_chains || x.dim(2) != s.spec_scales || x.dim(3) != s.spec_bins ||
        x.dim(0) == 0)
      throw std::invalid_argument("spectrogram input expects [B," + std::to_string(s.spec_chains) + "," +
                                  std::to_string(s.spec_scales) + "," + std::to_string(s.spec_bins) + "], got " +
                                  shape_string(x.shape()));
    if (batch != 0 && x.dim(0) != batch)
      throw std::invalid_argument("waveform and spectrogram batch sizes differ: " + std::to_string(batch) + " vs " +
                                  std::to_string(x.dim(0)));
    batch = x.dim(0);
    spec_features = spec_branch_.forward(x, mode);
  }

  Tensor<T> features;
  switch (s.topology) {
    case Topology::eegnet: features = std::move(wave_features); break;
    case Topology::mlp: features = std::move(spec_features); break;
    case Topology::multimodal: features = concat_.forward(wave_features, spec_features); break;
  }
  Tensor<T> logits = head_->forward(features, mode);
  batch_ = batch;
  has_forward_ = true;
  return logits;
}

template <typename T>
void ModelGraph<T>::backward(const Tensor<T>& grad_logits) {
  if (!has_forward_) throw std::logic_error("backward called before forward");
  if (grad_logits.shape() != Shape{batch_, kNumClasses})
    throw std::invalid_argument("logit gradient expects [" + std::to_string(batch_) + ",6], got " +
                                shape_string(grad_logits.shape()));
  Tensor<T> g = head_->backward(grad_logits);
  switch (model_.topology) {
    case Topology::eegnet: wave_.backward(g); break;
    case Topology::mlp: spec_branch_.backward(g); break;
    case Topology::multimodal: {
      auto [ga, gb] = concat_.backward(g);
      wave_.backward(ga);
      spec_branch_.backward(gb);
      break;
    }
  }
}

template <typename T>
std::vector<Parameter<T>*> ModelGraph<T>::parameters() {
  auto out = wave_.parameters();
  for (auto* p : spec_branch_.parameters()) out.push_back(p);
  for (auto* p : head_->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelGraph<T>::buffers() {
  auto out = wave_.buffers();
  for (auto& b : spec_branch_.buffers()) out.push_back(b);
  return out;
}

template <typename T>
Parameter<T>& ModelGraph<T>::parameter(std::string_view id) {
  for (auto* p : parameters())
    if (p->id == id) return *p;
  throw std::out_of_range("no parameter '" + std::string(id) + "'");
}

template <typename T>
void ModelGraph<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T{});
}

template <typename T>
std::size_t ModelGraph<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void ModelGraph<T>::for_each_layer(const std::function<void(Layer<T>&)>& fn) {
  wave_.for_each(fn);
  spec_branch_.for_each(fn);
  fn(*head_);
}

template <typename T>
void ModelGraph<T>::freeze_dropout(bool frozen) {
  for_each_layer([frozen](Layer<T>& l) {
    if (auto* d = dynamic_cast<Dropout<T>*>(&l)) d->freeze(frozen);
  });
}

template class ModelGraph<float>;
template class ModelGraph<double>;

}  // namespace hbac::nn
