#include "hbac/nn/gradcheck.hpp"

#include "hbac/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <random>

namespace hbac::nn {

namespace {

std::vector<std::size_t> pick(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= k) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Tracker {
  const GradCheckOptions& opts;
  GradCheckResult result;

  void compare(double analytic, double numeric, const std::string& label) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.denom_floor});
    const double err = std::abs(analytic - numeric) / denom;
    ++result.checked;
    if (result.worst.empty() || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = label;
    }
  }
};

// Perturbs `values[i]` by +-eps and returns the central difference of `loss`.
template <typename F>
double central_difference(std::span<double> values, std::size_t i, double eps, F&& loss) {
  const double saved = values[i];
  values[i] = saved + eps;
  const double up = loss();
  values[i] = saved - eps;
  const double down = loss();
  values[i] = saved;
  return (up - down) / (2.0 * eps);
}

void freeze_all(Layer<double>& net, bool frozen) {
  if (auto* seq = dynamic_cast<Sequential<double>*>(&net)) {
    seq->for_each([frozen](Layer<double>& l) {
      if (auto* d = dynamic_cast<Dropout<double>*>(&l)) d->freeze(frozen);
    });
  } else if (auto* d = dynamic_cast<Dropout<double>*>(&net)) {
    d->freeze(frozen);
  }
}

}  // namespace

GradCheckResult grad_check(ModelGraph<double>& model, const ModelInput<double>& batch,
                           std::span<const ClassDistribution> targets, const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  Tracker t{opts, {}};
  model.freeze_dropout(true);
  auto loss = [&] { return kl_loss(model.forward(batch, Mode::train), targets).loss; };
  try {
    model.forward(batch, Mode::train);  // draws the dropout masks
    model.zero_grad();
    auto out = kl_loss(model.forward(batch, Mode::train), targets);
    model.backward(out.grad);
    for (auto* p : model.parameters()) {
      const Tensor<double> analytic = p->grad;
      for (auto i : pick(p->value.size(), opts.samples_per_tensor, rng)) {
        const double numeric = central_difference(p->value.values(), i, opts.eps, loss);
        t.compare(analytic[i], numeric, p->id + "[" + std::to_string(i) + "]");
      }
    }
  } catch (...) {
    model.freeze_dropout(false);
    throw;
  }
  model.freeze_dropout(false);
  return t.result;
}

GradCheckResult grad_check(Layer<double>& net, const Tensor<double>& input, std::span<const ClassDistribution> targets,
                           const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  Tracker t{opts, {}};
  Tensor<double> x = input;
  freeze_all(net, true);
  auto loss = [&] { return kl_loss(net.forward(x, Mode::train), targets).loss; };
  try {
    net.forward(x, Mode::train);
    for (auto* p : net.parameters()) p->grad.fill(0.0);
    auto out = kl_loss(net.forward(x, Mode::train), targets);
    const Tensor<double> dx = net.backward(out.grad);
    for (auto* p : net.parameters()) {
      const Tensor<double> analytic = p->grad;
      for (auto i : pick(p->value.size(), opts.samples_per_tensor, rng)) {
        const double numeric = central_difference(p->value.values(), i, opts.eps, loss);
        t.compare(analytic[i], numeric, p->id + "[" + std::to_string(i) + "]");
      }
    }
    for (auto i : pick(x.size(), opts.samples_per_tensor, rng)) {
      const double numeric = central_difference(x.values(), i, opts.eps, loss);
      t.compare(dx[i], numeric, "input[" + std::to_string(i) + "]");
    }
  } catch (...) {
    freeze_all(net, false);
    throw;
  }
  freeze_all(net, false);
  return t.result;
}

}  // namespace hbac::nn

namespace hbac::nn {

namespace {

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

std::vector<ClassDistribution> random_targets(std::size_t batch, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<ClassDistribution> out(batch);
  for (auto& p : out) {
    double s = 0.0;
    for (auto& v : p.p) s += (v = u(rng));
    for (auto& v : p.p) v /= s;
  }
  return out;
}

// Two dense branches over one input joined by Concat, then a dense head.
class ConcatNet final : public Layer<double> {
 public:
  explicit ConcatNet(std::size_t in) : a_(in, 3), b_(in, 2), head_(5, kNumClasses) {}
  LayerKind kind() const override { return LayerKind::concat; }
  Tensor<double> forward(const Tensor<double>& x, Mode mode) override {
    return head_.forward(cat_.forward(a_.forward(x, mode), b_.forward(x, mode)), mode);
  }
  Tensor<double> backward(const Tensor<double>& g) override {
    auto [ga, gb] = cat_.backward(head_.backward(g));
    Tensor<double> dx = a_.backward(ga);
    const Tensor<double> dxb = b_.backward(gb);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxb[i];
    return dx;
  }
  std::vector<Parameter<double>*> parameters() override {
    std::vector<Parameter<double>*> out;
    for (Layer<double>* l : {static_cast<Layer<double>*>(&a_), static_cast<Layer<double>*>(&b_),
                             static_cast<Layer<double>*>(&head_)})
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }
  void initialize(Rng& rng) override {
    a_.initialize(rng);
    b_.initialize(rng);
    head_.initialize(rng);
  }

 private:
  Dense<double> a_, b_, head_;
  Concat<double> cat_;
};

struct LayerCase {
  std::string name;
  Shape input;
  std::function<std::unique_ptr<Layer<double>>()> build;
};

std::vector<LayerCase> layer_cases() {
  using Net = Sequential<double>;
  auto seq = [](auto&& fill) {
    return [fill]() -> std::unique_ptr<Layer<double>> {
      auto net = std::make_unique<Net>("net");
      fill(*net);
      return net;
    };
  };
  const std::size_t c = kNumClasses;
  return {
      {"dense", {3, 5}, seq([c](Net& n) { n.add<Dense<double>>(5, c); })},
      {"conv2d", {2, 2, 4, 5}, seq([c](Net& n) {
         n.add<Conv2d<double>>(2, 3, 3, 2);
         n.add<Flatten<double>>();
         n.add<Dense<double>>(60, c);
       })},
      {"depthwise_conv2d", {2, 2, 4, 5}, seq([c](Net& n) {
         n.add<DepthwiseConv2d<double>>(2, 2, 3, 1);
         n.add<Flatten<double>>();
         n.add<Dense<double>>(40, c);
       })},
      {"separable_conv2d", {2, 2, 3, 6}, seq([c](Net& n) {
         n.add<SeparableConv2d<double>>(2, 3, 1, 3);
         n.add<Flatten<double>>();
         n.add<Dense<double>>(54, c);
       })},
      {"conv1d_temporal", {2, 1, 3, 8}, seq([c](Net& n) {
         n.add<TemporalConv<double>>(2, 4);
         n.add<Flatten<double>>();
         n.add<Dense<double>>(48, c);
       })},
      {"batchnorm", {3, 3, 2, 2}, seq([c](Net& n) {
         n.add<BatchNorm<double>>(3);
         n.add<Flatten<double>>();
         n.add<Dense<double>>(12, c);
       })},
      {"elu", {3, 5}, seq([c](Net& n) {
         n.add<Dense<double>>(5, 7);
         n.add<Elu<double>>();
         n.add<Dense<double>>(7, c);
       })},
      {"relu", {3, 5}, seq([c](Net& n) {
         n.add<Dense<double>>(5, 7);
         n.add<Relu<double>>();
         n.add<Dense<double>>(7, c);
       })},
      {"avgpool", {2, 2, 4, 6}, seq([c](Net& n) {
         n.add<AvgPool<double>>(2, 3);
         n.add<Flatten<double>>();
         n.add<Dense<double>>(8, c);
       })},
      {"dropout", {3, 5}, seq([c](Net& n) {
         n.add<Dense<double>>(5, 8);
         n.add<Dropout<double>>(0.5, 11);
         n.add<Dense<double>>(8, c);
       })},
      {"flatten", {2, 2, 3}, seq([c](Net& n) {
         n.add<Flatten<double>>();
         n.add<Dense<double>>(6, c);
       })},
      {"concat", {3, 4}, [] { return std::unique_ptr<Layer<double>>(std::make_unique<ConcatNet>(4)); }},
  };
}

ModelSpec micro_spec(Topology t, std::uint64_t seed) {
  ModelSpec s;
  s.topology = t;
  s.channels = 4;
  s.samples = 32;
  s.temporal_kernel = 4;
  s.f1 = 2;
  s.depth = 1;
  s.f2 = 2;
  s.separable_kernel = 4;
  s.pool1 = 2;
  s.pool2 = 2;
  s.spec_scales = 4;
  s.spec_bins = 8;
  s.mlp_hidden = {5, 4};
  s.conv_channels = {2};
  s.conv_kernel = 3;
  s.conv_pool = 2;
  s.seed = seed;
  return s;
}

GradCheckCase run_graph_case(const std::string& name, Topology t, const GradCheckOptions& opts) {
  Rng rng(opts.seed ^ 0x5eedULL);
  const ModelSpec spec = micro_spec(t, opts.seed);
  ModelGraph<double> model(spec);
  // Zero biases would sit ReLU units exactly on their kink.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto* p : model.parameters()) {
    const auto& id = p->id;
    if (id.ends_with("bias") || id.ends_with("beta"))
      for (auto& v : p->value.values()) v += jitter(rng);
  }
  const std::size_t batch = 3;
  ModelInput<double> in;
  if (spec.uses_waveform()) in.waveform = random_tensor({batch, spec.channels, spec.samples}, rng);
  if (spec.uses_spectrogram())
    in.spectrogram = random_tensor({batch, spec.spec_chains, spec.spec_scales, spec.spec_bins}, rng);
  const auto targets = random_targets(batch, rng);
  GradCheckOptions o = opts;
  o.samples_per_tensor = std::max<std::size_t>(o.samples_per_tensor, 64);
  return {name, grad_check(model, in, targets, o), 1e-3};
}

}  // namespace

std::vector<std::string> grad_check_case_names() {
  std::vector<std::string> out;
  for (const auto& c : layer_cases()) out.push_back(c.name);
  out.insert(out.end(), {"mlp", "eegnet", "multimodal"});
  return out;
}

std::vector<GradCheckCase> run_grad_check_suite(std::string_view which, const GradCheckOptions& opts) {
  std::vector<GradCheckCase> out;
  for (const auto& c : layer_cases()) {
    if (which != "all" && which != c.name) continue;
    Rng rng(opts.seed ^ 0x1a7e5ULL);
    auto net = c.build();
    net->initialize(rng);
    auto x = random_tensor(c.input, rng);
    if (c.name == "relu") {
      // Keep pre-activations clear of the kink so +-eps never crosses it.
      auto& first = static_cast<Sequential<double>&>(*net).at(0);
      auto clear = [&] {
        const auto z = first.forward(x, Mode::train);
        return std::all_of(z.values().begin(), z.values().end(), [](double v) { return std::abs(v) > 0.05; });
      };
      for (int attempt = 0; attempt < 1000 && !clear(); ++attempt) x = random_tensor(c.input, rng);
    }
    const auto targets = random_targets(c.input[0], rng);
    GradCheckOptions o = opts;
    o.samples_per_tensor = std::max<std::size_t>(o.samples_per_tensor, 128);
    out.push_back({c.name, grad_check(*net, x, targets, o), c.name == "dense" ? 1e-4 : 1e-3});
  }
  for (auto [name, t] : {std::pair{"mlp", Topology::mlp}, std::pair{"eegnet", Topology::eegnet},
                         std::pair{"multimodal", Topology::multimodal}})
    if (which == "all" || which == name) out.push_back(run_graph_case(name, t, opts));
  if (out.empty()) throw std::invalid_argument("unknown grad-check case '" + std::string(which) + "'");
  return out;
}

}  // namespace hbac::nn
