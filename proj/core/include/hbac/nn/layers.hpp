#pragma once

#include "hbac/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hbac::nn {

enum class LayerKind {
  dense,
  conv2d,
  depthwise_conv2d,
  separable_conv2d,
  conv1d_temporal,
  batchnorm,
  elu,
  relu,
  avgpool,
  dropout,
  flatten,
  concat,
};

std::string_view to_string(LayerKind k);

enum class Mode { train, eval };

template <typename T>
struct Parameter {
  std::string id;
  Tensor<T> value;
  Tensor<T> grad;
};

using Rng = std::mt19937_64;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  // Accumulates parameter gradients and returns dL/dx.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  // Non-trainable state that must survive a checkpoint (batchnorm stats).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
  virtual void initialize(Rng& /*rng*/) {}
  virtual std::string describe() const { return std::string(to_string(kind())); }
};

// Grouped 2-D convolution, stride 1. "same" padding puts the extra sample of
// an even kernel on the bottom/right.
template <typename T>
class ConvCore {
 public:
  ConvCore() = default;
  ConvCore(std::size_t in_c, std::size_t out_c, std::size_t groups, std::size_t kh, std::size_t kw, bool same,
           bool bias, std::string prefix);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void initialize(Rng& rng);
  std::vector<Parameter<T>*> parameters();
  Shape output_shape(const Shape& in) const;
  std::size_t in_channels() const { return in_c_; }
  std::size_t out_channels() const { return out_c_; }

 private:
  std::size_t in_c_ = 0, out_c_ = 0, groups_ = 1, kh_ = 1, kw_ = 1;
  bool same_ = true;
  bool has_bias_ = false;
  Parameter<T> weight_;  // [out_c, in_c / groups, kh, kw]
  Parameter<T> bias_;    // [out_c]
  Tensor<T> input_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in, std::size_t out);
  LayerKind kind() const override { return LayerKind::dense; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;
  std::string describe() const override;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter<T>& weight() { return weight_; }  // [out, in]
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// Full 2-D convolution with "same" padding and bias.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw);
  LayerKind kind() const override { return LayerKind::conv2d; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return core_.forward(x); }
  Tensor<T> backward(const Tensor<T>& g) override { return core_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return core_.parameters(); }
  void initialize(Rng& rng) override { core_.initialize(rng); }

 private:
  ConvCore<T> core_;
};

// Input [B, 1, C, T] -> [B, filters, C, T]; kernel (1 x length), no bias.
template <typename T>
class TemporalConv final : public Layer<T> {
 public:
  TemporalConv(std::size_t filters, std::size_t length);
  LayerKind kind() const override { return LayerKind::conv1d_temporal; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return core_.forward(x); }
  Tensor<T> backward(const Tensor<T>& g) override { return core_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return core_.parameters(); }
  void initialize(Rng& rng) override { core_.initialize(rng); }

 private:
  ConvCore<T> core_;
};

// Per-channel filters (depth multiplier D), "valid" padding, no bias.
template <typename T>
class DepthwiseConv2d final : public Layer<T> {
 public:
  DepthwiseConv2d(std::size_t channels, std::size_t multiplier, std::size_t kh, std::size_t kw);
  LayerKind kind() const override { return LayerKind::depthwise_conv2d; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return core_.forward(x); }
  Tensor<T> backward(const Tensor<T>& g) override { return core_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return core_.parameters(); }
  void initialize(Rng& rng) override { core_.initialize(rng); }

 private:
  ConvCore<T> core_;
};

// Depthwise (kh x kw, "same") followed by pointwise 1x1, no biases.
template <typename T>
class SeparableConv2d final : public Layer<T> {
 public:
  SeparableConv2d(std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw);
  LayerKind kind() const override { return LayerKind::separable_conv2d; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return pointwise_.forward(depthwise_.forward(x)); }
  Tensor<T> backward(const Tensor<T>& g) override { return depthwise_.backward(pointwise_.backward(g)); }
  std::vector<Parameter<T>*> parameters() override;
  void initialize(Rng& rng) override;

 private:
  ConvCore<T> depthwise_, pointwise_;
};

// Normalizes over every axis but 1 (features for [B,F], channels for NCHW).
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  LayerKind kind() const override { return LayerKind::batchnorm; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override;
  void initialize(Rng& rng) override;

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::eval;
};

template <typename T>
class Elu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::elu; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override;
  Tensor<T> backward(const Tensor<T>& g) override;

 private:
  Tensor<T> input_, output_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override;
  Tensor<T> backward(const Tensor<T>& g) override;

 private:
  Tensor<T> input_;
};

// Non-overlapping average pooling over the last two axes; remainders dropped.
template <typename T>
class AvgPool final : public Layer<T> {
 public:
  AvgPool(std::size_t ph, std::size_t pw);
  LayerKind kind() const override { return LayerKind::avgpool; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override;
  Tensor<T> backward(const Tensor<T>& g) override;
  std::string describe() const override;

 private:
  std::size_t ph_, pw_;
  Shape in_shape_;
};

template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double p, std::uint64_t seed);
  LayerKind kind() const override { return LayerKind::dropout; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& g) override;
  // Reuse the last drawn mask (finite-difference checks need a fixed graph).
  void freeze(bool frozen) { frozen_ = frozen; }
  double rate() const { return p_; }

 private:
  double p_;
  Rng rng_;
  bool frozen_ = false;
  Tensor<T> mask_;
  Mode last_mode_ = Mode::eval;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override;
  Tensor<T> backward(const Tensor<T>& g) override;

 private:
  Shape in_shape_;
};

// Two-input feature concatenation [B, Fa] ++ [B, Fb] -> [B, Fa + Fb].
template <typename T>
class Concat {
 public:
  static constexpr LayerKind kind() { return LayerKind::concat; }
  Tensor<T> forward(const Tensor<T>& a, const Tensor<T>& b);
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& g) const;

 private:
  std::size_t width_a_ = 0, width_b_ = 0;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  explicit Sequential(std::string name) : name_(std::move(name)) {}

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    if (ids_assigned_) throw std::logic_error("cannot add layers to '" + name_ + "' after parameters were registered");
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  LayerKind kind() const override;
  // Shape errors are rethrown with the failing layer index and kind.
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  // Ids are "<name>.<index>.<kind>.<local>".
  std::vector<Parameter<T>*> parameters() override;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override;
  void initialize(Rng& rng) override;

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }
  void for_each(const std::function<void(Layer<T>&)>& fn);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  bool ids_assigned_ = false;
  void assign_ids();
};

}  // namespace hbac::nn
