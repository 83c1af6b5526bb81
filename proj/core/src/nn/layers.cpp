#include "hbac/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hbac::nn {

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::depthwise_conv2d: return "depthwise_conv2d";
    case LayerKind::separable_conv2d: return "separable_conv2d";
    case LayerKind::conv1d_temporal: return "conv1d_temporal";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::elu: return "elu";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::concat: return "concat";
  }
  return "unknown";
}

namespace {

template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
Parameter<T> make_param(std::string id, Shape shape) {
  Parameter<T> p;
  p.id = std::move(id);
  p.value = Tensor<T>(shape);
  p.grad = Tensor<T>(std::move(shape));
  return p;
}

std::string shape_error(std::string_view what, const Shape& got) {
  return std::string(what) + ", got " + shape_string(got);
}

}  // namespace

// ---- ConvCore ----

template <typename T>
ConvCore<T>::ConvCore(std::size_t in_c, std::size_t out_c, std::size_t groups, std::size_t kh, std::size_t kw,
                      bool same, bool bias, std::string prefix)
    : in_c_(in_c), out_c_(out_c), groups_(groups), kh_(kh), kw_(kw), same_(same), has_bias_(bias) {
  if (in_c == 0 || out_c == 0 || groups == 0 || kh == 0 || kw == 0)
    throw std::invalid_argument("convolution dimensions must be positive");
  if (in_c % groups != 0 || out_c % groups != 0)
    throw std::invalid_argument("channels " + std::to_string(in_c) + "->" + std::to_string(out_c) +
                                " not divisible by groups " + std::to_string(groups));
  weight_ = make_param<T>(prefix + "weight", {out_c, in_c / groups, kh, kw});
  if (bias) bias_ = make_param<T>(prefix + "bias", {out_c});
}

template <typename T>
Shape ConvCore<T>::output_shape(const Shape& in) const {
  if (in.size() != 4 || in[1] != in_c_)
    throw std::invalid_argument(shape_error("convolution expects [B," + std::to_string(in_c_) + ",H,W]", in));
  if (same_) return in;
  if (in[2] < kh_ || in[3] < kw_)
    throw std::invalid_argument(shape_error("kernel " + std::to_string(kh_) + "x" + std::to_string(kw_) +
                                                " larger than input",
                                            in));
  return {in[0], out_c_, in[2] - kh_ + 1, in[3] - kw_ + 1};
}

template <typename T>
Tensor<T> ConvCore<T>::forward(const Tensor<T>& x) {
  Shape os = output_shape(x.shape());
  os[1] = out_c_;
  input_ = x;
  const auto B = x.dim(0);
  const auto H = static_cast<std::ptrdiff_t>(x.dim(2)), W = static_cast<std::ptrdiff_t>(x.dim(3));
  const auto OH = static_cast<std::ptrdiff_t>(os[2]), OW = static_cast<std::ptrdiff_t>(os[3]);
  const auto pad_t = same_ ? static_cast<std::ptrdiff_t>((kh_ - 1) / 2) : 0;
  const auto pad_l = same_ ? static_cast<std::ptrdiff_t>((kw_ - 1) / 2) : 0;
  const std::size_t ipg = in_c_ / groups_, opg = out_c_ / groups_;

  Tensor<T> out(os);
  const T* wdata = weight_.value.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      T* o = out.data() + (b * out_c_ + oc) * OH * OW;
      if (has_bias_) std::fill(o, o + OH * OW, bias_.value[oc]);
      const std::size_t g = oc / opg;
      for (std::size_t icg = 0; icg < ipg; ++icg) {
        const T* in = x.data() + (b * in_c_ + g * ipg + icg) * H * W;
        const T* w = wdata + (oc * ipg + icg) * kh_ * kw_;
        for (std::ptrdiff_t ki = 0; ki < static_cast<std::ptrdiff_t>(kh_); ++ki) {
          const std::ptrdiff_t oh0 = std::max<std::ptrdiff_t>(0, pad_t - ki);
          const std::ptrdiff_t oh1 = std::min<std::ptrdiff_t>(OH, H + pad_t - ki);
          for (std::ptrdiff_t oh = oh0; oh < oh1; ++oh) {
            T* orow = o + oh * OW;
            const T* irow = in + (oh + ki - pad_t) * W;
            for (std::ptrdiff_t kj = 0; kj < static_cast<std::ptrdiff_t>(kw_); ++kj) {
              const T wv = w[ki * kw_ + kj];
              const std::ptrdiff_t off = kj - pad_l;
              const std::ptrdiff_t ow0 = std::max<std::ptrdiff_t>(0, -off);
              const std::ptrdiff_t ow1 = std::min<std::ptrdiff_t>(OW, W - off);
              for (std::ptrdiff_t ow = ow0; ow < ow1; ++ow) orow[ow] += wv * irow[ow + off];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> ConvCore<T>::backward(const Tensor<T>& grad_out) {
  if (input_.empty()) throw std::logic_error("convolution backward called before forward");
  const auto& x = input_;
  Shape os = output_shape(x.shape());
  os[1] = out_c_;
  if (grad_out.shape() != os)
    throw std::invalid_argument(shape_error("convolution gradient expected " + shape_string(os), grad_out.shape()));
  const auto B = x.dim(0);
  const auto H = static_cast<std::ptrdiff_t>(x.dim(2)), W = static_cast<std::ptrdiff_t>(x.dim(3));
  const auto OH = static_cast<std::ptrdiff_t>(os[2]), OW = static_cast<std::ptrdiff_t>(os[3]);
  const auto pad_t = same_ ? static_cast<std::ptrdiff_t>((kh_ - 1) / 2) : 0;
  const auto pad_l = same_ ? static_cast<std::ptrdiff_t>((kw_ - 1) / 2) : 0;
  const std::size_t ipg = in_c_ / groups_, opg = out_c_ / groups_;

  Tensor<T> dx(x.shape());
  const T* wdata = weight_.value.data();
  T* dw = weight_.grad.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < out_c_; ++oc) {
      const T* go = grad_out.data() + (b * out_c_ + oc) * OH * OW;
      if (has_bias_) {
        T s{};
        for (std::ptrdiff_t i = 0; i < OH * OW; ++i) s += go[i];
        bias_.grad[oc] += s;
      }
      const std::size_t g = oc / opg;
      for (std::size_t icg = 0; icg < ipg; ++icg) {
        const std::size_t in_off = (b * in_c_ + g * ipg + icg) * H * W;
        const T* in = x.data() + in_off;
        T* din = dx.data() + in_off;
        const std::size_t woff = (oc * ipg + icg) * kh_ * kw_;
        for (std::ptrdiff_t ki = 0; ki < static_cast<std::ptrdiff_t>(kh_); ++ki) {
          const std::ptrdiff_t oh0 = std::max<std::ptrdiff_t>(0, pad_t - ki);
          const std::ptrdiff_t oh1 = std::min<std::ptrdiff_t>(OH, H + pad_t - ki);
          for (std::ptrdiff_t kj = 0; kj < static_cast<std::ptrdiff_t>(kw_); ++kj) {
            const T wv = wdata[woff + ki * kw_ + kj];
            const std::ptrdiff_t off = kj - pad_l;
            const std::ptrdiff_t ow0 = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t ow1 = std::min<std::ptrdiff_t>(OW, W - off);
            T acc{};
            for (std::ptrdiff_t oh = oh0; oh < oh1; ++oh) {
              const T* grow = go + oh * OW;
              const T* irow = in + (oh + ki - pad_t) * W;
              T* drow = din + (oh + ki - pad_t) * W;
              for (std::ptrdiff_t ow = ow0; ow < ow1; ++ow) {
                acc += grow[ow] * irow[ow + off];
                drow[ow + off] += wv * grow[ow];
              }
            }
            dw[woff + ki * kw_ + kj] += acc;
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
void ConvCore<T>::initialize(Rng& rng) {
  kaiming_uniform(weight_.value, (in_c_ / groups_) * kh_ * kw_, rng);
  if (has_bias_) bias_.value.fill(T{});
}

template <typename T>
std::vector<Parameter<T>*> ConvCore<T>::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

// ---- Dense ----

template <typename T>
Dense<T>::Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {
  if (in == 0 || out == 0) throw std::invalid_argument("dense layer dimensions must be positive");
  weight_ = make_param<T>("weight", {out, in});
  bias_ = make_param<T>("bias", {out});
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, Mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw std::invalid_argument(shape_error("dense expects [B," + std::to_string(in_) + "]", x.shape()));
  input_ = x;
  const std::size_t B = x.dim(0);
  Tensor<T> y({B, out_});
  for (std::size_t b = 0; b < B; ++b) {
    const T* xr = x.data() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const T* wr = weight_.value.data() + o * in_;
      T acc{};
      for (std::size_t i = 0; i < in_; ++i) acc += wr[i] * xr[i];
      y[b * out_ + o] = acc + bias_.value[o];
    }
  }
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& g) {
  if (input_.empty()) throw std::logic_error("dense backward called before forward");
  const std::size_t B = input_.dim(0);
  if (g.shape() != Shape{B, out_})
    throw std::invalid_argument(shape_error("dense gradient expects [" + std::to_string(B) + "," +
                                                std::to_string(out_) + "]",
                                            g.shape()));
  Tensor<T> dx({B, in_});
  for (std::size_t b = 0; b < B; ++b) {
    const T* xr = input_.data() + b * in_;
    T* dxr = dx.data() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const T go = g[b * out_ + o];
      bias_.grad[o] += go;
      if (go == T{}) continue;
      T* dwr = weight_.grad.data() + o * in_;
      const T* wr = weight_.value.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        dwr[i] += go * xr[i];
        dxr[i] += go * wr[i];
      }
    }
  }
  return dx;
}

template <typename T>
void Dense<T>::initialize(Rng& rng) {
  kaiming_uniform(weight_.value, in_, rng);
  bias_.value.fill(T{});
}

template <typename T>
std::string Dense<T>::describe() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

// ---- convolution wrappers ----

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw)
    : core_(in_c, out_c, 1, kh, kw, true, true, "") {}

template <typename T>
TemporalConv<T>::TemporalConv(std::size_t filters, std::size_t length)
    : core_(1, filters, 1, 1, length, true, false, "") {}

template <typename T>
DepthwiseConv2d<T>::DepthwiseConv2d(std::size_t channels, std::size_t multiplier, std::size_t kh, std::size_t kw)
    : core_(channels, channels * multiplier, channels, kh, kw, false, false, "") {}

template <typename T>
SeparableConv2d<T>::SeparableConv2d(std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw)
    : depthwise_(in_c, in_c, in_c, kh, kw, true, false, "depthwise."),
      pointwise_(in_c, out_c, 1, 1, 1, true, false, "pointwise.") {}

template <typename T>
std::vector<Parameter<T>*> SeparableConv2d<T>::parameters() {
  auto ps = depthwise_.parameters();
  for (auto* p : pointwise_.parameters()) ps.push_back(p);
  return ps;
}

template <typename T>
void SeparableConv2d<T>::initialize(Rng& rng) {
  depthwise_.initialize(rng);
  pointwise_.initialize(rng);
}

// ---- BatchNorm ----

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = make_param<T>("gamma", {channels});
  beta_ = make_param<T>("beta", {channels});
  running_mean_ = Tensor<T>({channels}, T{0});
  running_var_ = Tensor<T>({channels}, T{1});
  gamma_.value.fill(T{1});
}

namespace {

// (batch, channels, spatial) view of [B,F] or [B,C,...].
struct BnView {
  std::size_t batch, channels, spatial;
};

BnView bn_view(const Shape& s, std::size_t channels) {
  if (s.size() < 2 || s[1] != channels)
    throw std::invalid_argument(shape_error("batchnorm expects [B," + std::to_string(channels) + ",...]", s));
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < s.size(); ++i) spatial *= s[i];
  return {s[0], channels, spatial};
}

}  // namespace

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  const BnView v = bn_view(x.shape(), channels_);
  Tensor<T> y(x.shape());
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(channels_, 0.0);
  last_mode_ = mode;
  const double n = static_cast<double>(v.batch * v.spatial);
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < v.batch; ++b) {
        const T* p = x.data() + (b * channels_ + c) * v.spatial;
        for (std::size_t i = 0; i < v.spatial; ++i) s += p[i];
      }
      mean = s / n;
      double ss = 0.0;
      for (std::size_t b = 0; b < v.batch; ++b) {
        const T* p = x.data() + (b * channels_ + c) * v.spatial;
        for (std::size_t i = 0; i < v.spatial; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / n;
      const double unbiased = n > 1 ? ss / (n - 1) : var;
      running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double gm = gamma_.value[c], bt = beta_.value[c];
    for (std::size_t b = 0; b < v.batch; ++b) {
      const std::size_t off = (b * channels_ + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const double xh = (x[off + i] - mean) * inv;
        xhat_[off + i] = static_cast<T>(xh);
        y[off + i] = static_cast<T>(gm * xh + bt);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& g) {
  if (xhat_.empty()) throw std::logic_error("batchnorm backward called before forward");
  if (g.shape() != xhat_.shape())
    throw std::invalid_argument(shape_error("batchnorm gradient expects " + shape_string(xhat_.shape()), g.shape()));
  const BnView v = bn_view(g.shape(), channels_);
  const double n = static_cast<double>(v.batch * v.spatial);
  Tensor<T> dx(g.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sg = 0.0, sgx = 0.0;
    for (std::size_t b = 0; b < v.batch; ++b) {
      const std::size_t off = (b * channels_ + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        sg += g[off + i];
        sgx += static_cast<double>(g[off + i]) * xhat_[off + i];
      }
    }
    gamma_.grad[c] += static_cast<T>(sgx);
    beta_.grad[c] += static_cast<T>(sg);
    const double k = gamma_.value[c] * inv_std_[c];
    for (std::size_t b = 0; b < v.batch; ++b) {
      const std::size_t off = (b * channels_ + c) * v.spatial;
      for (std::size_t i = 0; i < v.spatial; ++i) {
        if (last_mode_ == Mode::train)
          dx[off + i] = static_cast<T>(k / n * (n * g[off + i] - sg - xhat_[off + i] * sgx));
        else
          dx[off + i] = static_cast<T>(k * g[off + i]);
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> BatchNorm<T>::buffers() {
  return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
}

template <typename T>
void BatchNorm<T>::initialize(Rng&) {
  gamma_.value.fill(T{1});
  beta_.value.fill(T{0});
  running_mean_.fill(T{0});
  running_var_.fill(T{1});
}

// ---- activations ----

template <typename T>
Tensor<T> Elu<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  output_ = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) output_[i] = x[i] > T{0} ? x[i] : std::expm1(x[i]);
  return output_;
}

template <typename T>
Tensor<T> Elu<T>::backward(const Tensor<T>& g) {
  if (g.shape() != input_.shape()) throw std::invalid_argument(shape_error("elu gradient mismatch", g.shape()));
  Tensor<T> dx(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) dx[i] = input_[i] > T{0} ? g[i] : g[i] * (output_[i] + T{1});
  return dx;
}

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < T{0} ? T{0} : x[i];  // NaN propagates
  return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& g) {
  if (g.shape() != input_.shape()) throw std::invalid_argument(shape_error("relu gradient mismatch", g.shape()));
  Tensor<T> dx(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) dx[i] = input_[i] > T{0} ? g[i] : T{0};
  return dx;
}

// ---- pooling ----

template <typename T>
AvgPool<T>::AvgPool(std::size_t ph, std::size_t pw) : ph_(ph), pw_(pw) {
  if (ph == 0 || pw == 0) throw std::invalid_argument("pool size must be positive");
}

template <typename T>
Tensor<T> AvgPool<T>::forward(const Tensor<T>& x, Mode) {
  if (x.rank() != 4) throw std::invalid_argument(shape_error("avgpool expects [B,C,H,W]", x.shape()));
  const std::size_t H = x.dim(2), W = x.dim(3);
  if (H < ph_ || W < pw_)
    throw std::invalid_argument(shape_error("avgpool " + std::to_string(ph_) + "x" + std::to_string(pw_) +
                                                " larger than input",
                                            x.shape()));
  in_shape_ = x.shape();
  const std::size_t OH = H / ph_, OW = W / pw_, planes = x.dim(0) * x.dim(1);
  Tensor<T> y({x.dim(0), x.dim(1), OH, OW});
  const T scale = T{1} / static_cast<T>(ph_ * pw_);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = x.data() + p * H * W;
    T* out = y.data() + p * OH * OW;
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        T s{};
        for (std::size_t i = 0; i < ph_; ++i)
          for (std::size_t j = 0; j < pw_; ++j) s += in[(oh * ph_ + i) * W + ow * pw_ + j];
        out[oh * OW + ow] = s * scale;
      }
  }
  return y;
}

template <typename T>
Tensor<T> AvgPool<T>::backward(const Tensor<T>& g) {
  if (in_shape_.empty()) throw std::logic_error("avgpool backward called before forward");
  const std::size_t H = in_shape_[2], W = in_shape_[3], OH = H / ph_, OW = W / pw_;
  const std::size_t planes = in_shape_[0] * in_shape_[1];
  if (g.shape() != Shape{in_shape_[0], in_shape_[1], OH, OW})
    throw std::invalid_argument(shape_error("avgpool gradient mismatch", g.shape()));
  Tensor<T> dx(in_shape_);
  const T scale = T{1} / static_cast<T>(ph_ * pw_);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* go = g.data() + p * OH * OW;
    T* din = dx.data() + p * H * W;
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const T v = go[oh * OW + ow] * scale;
        for (std::size_t i = 0; i < ph_; ++i)
          for (std::size_t j = 0; j < pw_; ++j) din[(oh * ph_ + i) * W + ow * pw_ + j] = v;
      }
  }
  return dx;
}

template <typename T>
std::string AvgPool<T>::describe() const {
  return "avgpool(" + std::to_string(ph_) + "x" + std::to_string(pw_) + ")";
}

// ---- dropout ----

template <typename T>
Dropout<T>::Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
  last_mode_ = mode;
  if (mode == Mode::eval || p_ == 0.0) return x;
  if (!(frozen_ && mask_.shape() == x.shape())) {
    mask_ = Tensor<T>(x.shape());
    std::bernoulli_distribution keep(1.0 - p_);
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    for (auto& m : mask_.values()) m = keep(rng_) ? scale : T{0};
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask_[i];
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& g) {
  if (last_mode_ == Mode::eval || p_ == 0.0) return g;
  if (g.shape() != mask_.shape()) throw std::invalid_argument(shape_error("dropout gradient mismatch", g.shape()));
  Tensor<T> dx(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * mask_[i];
  return dx;
}

// ---- reshaping ----

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, Mode) {
  if (x.rank() < 2) throw std::invalid_argument(shape_error("flatten expects [B,...]", x.shape()));
  in_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& g) {
  if (in_shape_.empty()) throw std::logic_error("flatten backward called before forward");
  return g.reshaped(in_shape_);
}

template <typename T>
Tensor<T> Concat<T>::forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("concat expects [B,Fa] and [B,Fb], got " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()));
  const std::size_t B = a.dim(0);
  width_a_ = a.dim(1);
  width_b_ = b.dim(1);
  Tensor<T> y({B, width_a_ + width_b_});
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(a.data() + r * width_a_, width_a_, y.data() + r * (width_a_ + width_b_));
    std::copy_n(b.data() + r * width_b_, width_b_, y.data() + r * (width_a_ + width_b_) + width_a_);
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Concat<T>::backward(const Tensor<T>& g) const {
  const std::size_t w = width_a_ + width_b_;
  if (g.rank() != 2 || g.dim(1) != w) throw std::invalid_argument(shape_error("concat gradient mismatch", g.shape()));
  const std::size_t B = g.dim(0);
  Tensor<T> ga({B, width_a_}), gb({B, width_b_});
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(g.data() + r * w, width_a_, ga.data() + r * width_a_);
    std::copy_n(g.data() + r * w + width_a_, width_b_, gb.data() + r * width_b_);
  }
  return {std::move(ga), std::move(gb)};
}

// ---- Sequential ----

template <typename T>
LayerKind Sequential<T>::kind() const {
  if (layers_.empty()) throw std::logic_error("empty sequential has no kind");
  return layers_.back()->kind();
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      h = layers_[i]->forward(h, mode);
    } catch (const std::exception& e) {
      throw std::invalid_argument(name_ + " layer " + std::to_string(i) + " (" + layers_[i]->describe() +
                                  "): " + e.what());
    }
  }
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    try {
      g = layers_[i]->backward(g);
    } catch (const std::logic_error& e) {
      throw std::logic_error(name_ + " layer " + std::to_string(i) + " (" + layers_[i]->describe() +
                             "): " + e.what());
    } catch (const std::exception& e) {
      throw std::invalid_argument(name_ + " layer " + std::to_string(i) + " (" + layers_[i]->describe() +
                                  "): " + e.what());
    }
  }
  return g;
}

template <typename T>
void Sequential<T>::assign_ids() {
  if (ids_assigned_) return;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = name_ + "." + std::to_string(i) + "." + std::string(to_string(layers_[i]->kind())) + ".";
    for (auto* p : layers_[i]->parameters()) p->id = prefix + p->id;
  }
  ids_assigned_ = true;
}

template <typename T>
std::vector<Parameter<T>*> Sequential<T>::parameters() {
  assign_ids();
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Sequential<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = name_ + "." + std::to_string(i) + "." + std::string(to_string(layers_[i]->kind())) + ".";
    for (auto& [n, t] : layers_[i]->buffers()) out.emplace_back(prefix + n, t);
  }
  return out;
}

template <typename T>
void Sequential<T>::initialize(Rng& rng) {
  assign_ids();
  for (auto& l : layers_) l->initialize(rng);
}

template <typename T>
void Sequential<T>::for_each(const std::function<void(Layer<T>&)>& fn) {
  for (auto& l : layers_) {
    if (auto* nested = dynamic_cast<Sequential<T>*>(l.get()))
      nested->for_each(fn);
    else
      fn(*l);
  }
}

#define HBAC_INSTANTIATE(T)            \
  template class ConvCore<T>;          \
  template class Dense<T>;             \
  template class Conv2d<T>;            \
  template class TemporalConv<T>;      \
  template class DepthwiseConv2d<T>;   \
  template class SeparableConv2d<T>;   \
  template class BatchNorm<T>;         \
  template class Elu<T>;               \
  template class Relu<T>;              \
  template class AvgPool<T>;           \
  template class Dropout<T>;           \
  template class Flatten<T>;           \
  template class Concat<T>;            \
  template class Sequential<T>;

HBAC_INSTANTIATE(float)
HBAC_INSTANTIATE(double)
#undef HBAC_INSTANTIATE

}  // namespace hbac::nn
