#include "hbac/train.hpp"

#include "hbac/io.hpp"
#include "hbac/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace hbac::train {

using nlohmann::json;

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
  if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
  if (step > total_steps)
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) + " beyond horizon " +
                                std::to_string(total_steps));
  if (step == total_steps) return lr_min;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamMoments& state, double lr,
               const AdamParams& hp, std::string_view id) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: parameter/gradient size mismatch for '" + std::string(id) + "'");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("non-finite gradient in parameter '" + std::string(id) + "' at index " +
                               std::to_string(i));
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] = static_cast<float>(params[i] - lr * mhat / (std::sqrt(vhat) + hp.eps));
  }
}

void Adam::step(const std::vector<nn::Parameter<float>*>& params, double lr) {
  for (auto* p : params)
    if (!p->grad.all_finite())
      for (std::size_t i = 0; i < p->grad.size(); ++i)
        if (!std::isfinite(p->grad[i]))
          throw std::runtime_error("non-finite gradient in parameter '" + p->id + "' at index " + std::to_string(i));
  if (state_.size() != params.size()) state_.assign(params.size(), AdamMoments{});
  for (std::size_t k = 0; k < params.size(); ++k)
    adam_step(params[k]->value.values(), params[k]->grad.values(), state_[k], lr, hp_, params[k]->id);
}

double clip_grad_norm(const std::vector<nn::Parameter<float>*>& params, double max_norm) {
  double ss = 0.0;
  for (auto* p : params)
    for (float g : p->grad.values()) ss += static_cast<double>(g) * g;
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (auto* p : params)
      for (auto& g : p->grad.values()) g *= scale;
  }
  return norm;
}

// ---- configuration ----

std::string_view to_string(Strategy s) { return s == Strategy::two_stage ? "two-stage" : "single-stage"; }

Strategy strategy_from_string(std::string_view s) {
  if (s == "two-stage") return Strategy::two_stage;
  if (s == "single-stage") return Strategy::single_stage;
  throw std::invalid_argument("unknown strategy '" + std::string(s) + "' (expected two-stage or single-stage)");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be positive");
  if (!(lr_min >= 0.0 && lr_min <= lr0)) throw std::invalid_argument("train: lr_min must be in [0, lr0]");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (stage1_epochs < 1 || stage2_epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (min_votes < 1) throw std::invalid_argument("train: min_votes must be >= 1");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("train: grad_clip must be positive");
  if (threads < 1) throw std::invalid_argument("train: threads must be >= 1");
  augment.validate();
}

json TrainConfig::to_json() const {
  return json{{"lr0", lr0},
              {"lr_min", lr_min},
              {"batch_size", batch_size},
              {"stage1_epochs", stage1_epochs},
              {"stage2_epochs", stage2_epochs},
              {"min_votes", min_votes},
              {"grad_clip", grad_clip},
              {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
              {"seed", seed},
              {"threads", threads},
              {"augment", augment.to_json()},
              {"weights", weights.to_json()}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

}  // namespace

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"lr0", "lr_min", "batch_size", "stage1_epochs", "stage2_epochs", "min_votes", "grad_clip", "adam",
                  "seed", "threads", "augment", "weights"},
                 "train");
  TrainConfig c;
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
  c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
  c.min_votes = j.value("min_votes", c.min_votes);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    reject_unknown(a, {"beta1", "beta2", "eps"}, "train.adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  if (j.contains("augment")) c.augment = augment::AugmentConfig::from_json(j.at("augment"));
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    reject_unknown(w, {"full_weight_votes", "floor_start", "floor_end"}, "train.weights");
    c.weights.full_weight_votes = w.value("full_weight_votes", c.weights.full_weight_votes);
    c.weights.floor_start = w.value("floor_start", c.weights.floor_start);
    c.weights.floor_end = w.value("floor_end", c.weights.floor_end);
  }
  c.validate();
  return c;
}

void FeatureConfig::validate() const {
  if (!(span_s > 0.0)) throw std::invalid_argument("features: span_s must be positive");
  if (wave_pool < 1 || spec_pool < 1) throw std::invalid_argument("features: pooling factors must be >= 1");
  if (!(shift_margin_s >= 0.0)) throw std::invalid_argument("features: shift_margin_s must be >= 0");
  if (cwt.hr_stride < 1) throw std::invalid_argument("features: stride must be >= 1");
}

json FeatureConfig::to_json() const {
  return json{{"span_s", span_s},         {"wave_pool", wave_pool},           {"wave_scale", wave_scale},
              {"spec_pool", spec_pool},   {"shift_margin_s", shift_margin_s}, {"cwt", cwt.to_json()}};
}

FeatureConfig FeatureConfig::from_json(const json& j) {
  reject_unknown(j, {"span_s", "wave_pool", "wave_scale", "spec_pool", "shift_margin_s", "cwt"}, "features");
  FeatureConfig f;
  f.span_s = j.value("span_s", f.span_s);
  f.wave_pool = j.value("wave_pool", f.wave_pool);
  f.wave_scale = j.value("wave_scale", f.wave_scale);
  f.spec_pool = j.value("spec_pool", f.spec_pool);
  f.shift_margin_s = j.value("shift_margin_s", f.shift_margin_s);
  if (j.contains("cwt")) f.cwt = cwt::SpectrogramParams::from_json(j.at("cwt"));
  f.validate();
  return f;
}

// ---- examples ----

Example extract_features(const signals::MontageSignals& context, const FeatureConfig& fc, bool need_waveform,
                         bool need_spectrogram) {
  fc.validate();
  const double rate = context.rate_hz;
  const std::size_t n = context.n_samples();
  const auto span_n = static_cast<std::size_t>(std::llround(fc.span_s * rate));
  if (n < span_n)
    throw std::invalid_argument("features: context of " + std::to_string(n) + " samples is shorter than the " +
                                std::to_string(span_n) + "-sample span");
  const std::size_t stride = fc.cwt.hr_stride;
  if (span_n % stride != 0 || span_n % fc.wave_pool != 0)
    throw std::invalid_argument("features: span of " + std::to_string(span_n) +
                                " samples is not divisible by the pooling factors");

  Example ex;
  ex.rate_hz = rate;
  ex.span_samples = span_n;
  ex.quantum = std::lcm(stride, fc.wave_pool);
  const std::size_t crop = signals::center_range(n, rate, fc.span_s, 0.0).start;
  const std::size_t avail = std::min(crop, n - crop - span_n) / ex.quantum;
  const auto want = static_cast<std::size_t>(std::ceil(fc.shift_margin_s * rate / static_cast<double>(ex.quantum)));
  ex.max_shift = std::min(avail, want);
  const std::size_t start = crop - ex.max_shift * ex.quantum;
  const std::size_t len = span_n + 2 * ex.max_shift * ex.quantum;

  if (need_waveform) {
    const std::size_t T = len / fc.wave_pool;
    ex.waveform = MatrixF(context.signals.rows(), T);
    for (std::size_t r = 0; r < context.signals.rows(); ++r) {
      auto src = context.signals.row(r);
      for (std::size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (std::size_t i = 0; i < fc.wave_pool; ++i) s += src[start + t * fc.wave_pool + i];
        ex.waveform(r, t) = static_cast<float>(s / static_cast<double>(fc.wave_pool));
      }
    }
  }
  if (need_spectrogram) {
    const auto bank = cwt::scales_for_band(fc.cwt.f_min, fc.cwt.f_max, fc.cwt.n_scales, rate, fc.cwt.omega0);
    cwt::CwtEngine engine(bank, n);
    for (std::size_t c = 0; c < signals::kNumChains; ++c) {
      std::array<std::span<const float>, signals::kPairsPerChain> diffs;
      for (std::size_t p = 0; p < signals::kPairsPerChain; ++p) diffs[p] = context.differential(c, p);
      const MatrixF full = cwt::chain_power(diffs, engine);
      MatrixF sub(full.rows(), len);
      for (std::size_t r = 0; r < full.rows(); ++r)
        std::copy_n(full.row(r).begin() + static_cast<std::ptrdiff_t>(start), len, sub.row(r).begin());
      ex.spec[c] = cwt::downsample_time(sub, stride);
    }
  }
  return ex;
}

Materialized materialize(const Example& ex, const FeatureConfig& fc, long shift, bool reverse, bool swap_sides) {
  if (static_cast<std::size_t>(std::labs(shift)) > ex.max_shift)
    throw std::invalid_argument("materialize: shift " + std::to_string(shift) + " exceeds margin " +
                                std::to_string(ex.max_shift));
  const std::size_t off = static_cast<std::size_t>(static_cast<long>(ex.max_shift) + shift) * ex.quantum;
  auto source_chain = [&](std::size_t c) { return swap_sides ? signals::kNumChains - 1 - c : c; };
  Materialized m;

  if (!ex.waveform.empty()) {
    const std::size_t T = ex.span_samples / fc.wave_pool, start = off / fc.wave_pool;
    const std::size_t rows = ex.waveform.rows();
    m.waveform.resize(rows * T);
    const auto scale = static_cast<float>(fc.wave_scale);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t src_row = source_chain(r / signals::kPairsPerChain) * signals::kPairsPerChain +
                                  r % signals::kPairsPerChain;
      auto src = ex.waveform.row(src_row);
      float* dst = m.waveform.data() + r * T;
      for (std::size_t t = 0; t < T; ++t) dst[t] = src[start + (reverse ? T - 1 - t : t)] * scale;
    }
  }
  if (!ex.spec[0].empty()) {
    const std::size_t stride = fc.cwt.hr_stride;
    const std::size_t bins = ex.span_samples / stride, start = off / stride;
    const std::size_t S = ex.spec[0].rows();
    for (std::size_t c = 0; c < signals::kNumChains; ++c) {
      const MatrixF& full = ex.spec[source_chain(c)];
      MatrixF crop(S, bins);
      for (std::size_t r = 0; r < S; ++r)
        std::copy_n(full.row(r).begin() + static_cast<std::ptrdiff_t>(start), bins, crop.row(r).begin());
      MatrixF img = cwt::normalize_log(cwt::downsample_time(crop, fc.spec_pool), fc.cwt.log_eps);
      if (reverse) augment::reverse_time(img);
      m.spec.insert(m.spec.end(), img.values().begin(), img.values().end());
    }
  }
  return m;
}

nn::ModelSpec shape_model(nn::ModelSpec spec, const TrainData& data) {
  if (data.examples.empty()) throw std::invalid_argument("shape_model: no examples");
  const auto& ex = data.examples.front();
  const auto& fc = data.features;
  spec.channels = signals::kNumDifferentials;
  spec.samples = ex.span_samples / fc.wave_pool;
  spec.spec_chains = signals::kNumChains;
  spec.spec_scales = fc.cwt.n_scales;
  spec.spec_bins = ex.span_samples / fc.cwt.hr_stride / fc.spec_pool;
  return spec;
}

// ---- history ----

std::string TrainHistory::epochs_csv(std::optional<std::size_t> fold) const {
  std::ostringstream os;
  if (fold) os << "fold,";
  os << "stage,epoch,train_loss,val_kl,n_train\n";
  for (const auto& e : epochs) {
    if (fold) os << *fold << ',';
    os << e.stage << ',' << e.epoch << ',' << io::format_double(e.train_loss) << ',' << io::format_double(e.val_kl)
       << ',' << e.n_train << '\n';
  }
  return os.str();
}

std::string TrainHistory::steps_csv(std::optional<std::size_t> fold) const {
  std::ostringstream os;
  if (fold) os << "fold,";
  os << "stage,step,lr\n";
  for (const auto& s : steps) {
    if (fold) os << *fold << ',';
    os << s.stage << ',' << s.step << ',' << io::format_double(s.lr) << '\n';
  }
  return os.str();
}

// ---- training ----

namespace {

constexpr std::uint64_t kShuffleStream = 0xffffffffu;

nn::ModelInput<float> assemble(std::vector<Materialized>& items, const nn::ModelSpec& spec) {
  const std::size_t B = items.size();
  nn::ModelInput<float> in;
  if (spec.uses_waveform()) {
    std::vector<float> w;
    w.reserve(B * spec.channels * spec.samples);
    for (auto& m : items) w.insert(w.end(), m.waveform.begin(), m.waveform.end());
    in.waveform = nn::Tensor<float>({B, spec.channels, spec.samples}, std::move(w));
  }
  if (spec.uses_spectrogram()) {
    std::vector<float> s;
    s.reserve(B * spec.spec_chains * spec.spec_scales * spec.spec_bins);
    for (auto& m : items) s.insert(s.end(), m.spec.begin(), m.spec.end());
    in.spectrogram = nn::Tensor<float>({B, spec.spec_chains, spec.spec_scales, spec.spec_bins}, std::move(s));
  }
  return in;
}

void mask_spectrogram(std::vector<float>& spec, std::size_t scales, std::size_t bins,
                      std::span<const augment::MaskBand> bands) {
  if (bands.empty()) return;
  const std::size_t plane = scales * bins;
  for (std::size_t off = 0; off + plane <= spec.size(); off += plane) {
    MatrixF img(scales, bins, std::vector<float>(spec.begin() + off, spec.begin() + off + plane));
    augment::apply_masks(img, bands);
    std::copy(img.values().begin(), img.values().end(), spec.begin() + off);
  }
}

std::uint64_t stream_base(const nn::ModelSpec& spec, const TrainConfig& cfg) {
  return spec.seed ^ (cfg.augment.rng_seed * 0x9e3779b97f4a7c15ull);
}

double mean_kl(std::span<const ClassDistribution> preds, std::span<const ClassDistribution> targets) {
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += nn::kl_divergence(targets[i], preds[i]);
  return preds.empty() ? 0.0 : s / static_cast<double>(preds.size());
}

}  // namespace

nn::ModelInput<float> make_batch(const TrainData& data, std::span<const std::size_t> indices,
                                 const nn::ModelSpec& spec) {
  std::vector<Materialized> items;
  items.reserve(indices.size());
  for (auto i : indices) items.push_back(materialize(data.examples.at(i), data.features));
  return assemble(items, spec);
}

std::vector<ClassDistribution> predict(nn::ModelGraph<float>& model, const TrainData& data,
                                       std::span<const std::size_t> indices, std::size_t batch_size) {
  std::vector<ClassDistribution> out;
  out.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); b += batch_size) {
    const auto chunk = indices.subspan(b, std::min(batch_size, indices.size() - b));
    auto rows = nn::softmax(model.forward(make_batch(data, chunk, model.spec()), nn::Mode::eval));
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

void train_stage(nn::ModelGraph<float>& model, const TrainData& data, std::span<const std::size_t> train_idx,
                 std::span<const std::size_t> val_idx, int stage, int epochs, const TrainConfig& cfg,
                 TrainHistory& history) {
  cfg.validate();
  if (stage != 1 && stage != 2) throw std::invalid_argument("train_stage: stage must be 1 or 2");
  if (epochs < 1) throw std::invalid_argument("train_stage: epochs must be >= 1");
  std::vector<std::size_t> idx = stage == 1 ? dataset::filter_high_confidence(data.records, train_idx, cfg.min_votes)
                                            : std::vector<std::size_t>(train_idx.begin(), train_idx.end());
  if (idx.empty())
    throw std::runtime_error("stage " + std::to_string(stage) + ": empty training split");

  const auto& spec = model.spec();
  const auto& aug = cfg.augment;
  const auto& fc = data.features;
  const std::size_t n = idx.size(), B = cfg.batch_size;
  const std::size_t per_epoch = (n + B - 1) / B;
  const std::size_t total = per_epoch * static_cast<std::size_t>(epochs);
  const std::size_t horizon = std::max<std::size_t>(total - 1, 1);
  const std::uint64_t base = stream_base(spec, cfg);
  const std::size_t bins = spec.spec_bins, scales = spec.spec_scales;

  std::vector<ClassDistribution> val_targets;
  for (auto i : val_idx) val_targets.push_back(dataset::vote_distribution(data.records.at(i)));

  Adam adam(cfg.adam);
  auto params = model.parameters();
  std::size_t step = 0;

  for (int e = 0; e < epochs; ++e) {
    std::vector<std::size_t> order = idx;
    auto shuffle_rng = augment::stream_for(base, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(e),
                                           kShuffleStream);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_acc = 0.0, weight_acc = 0.0;

    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * B, hi = std::min(n, lo + B), bs = hi - lo;
      auto rng = augment::stream_for(base, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(e), b);
      std::vector<Materialized> items;
      std::vector<ClassDistribution> targets;
      std::vector<double> weights;
      items.reserve(bs);
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t i = order[k];
        const auto& ex = data.examples.at(i);
        const auto& rec = data.records.at(i);
        long shift = 0;
        if (aug.window_shift_max_s > 0.0 && ex.max_shift > 0) {
          const double delta = augment::draw_shift(aug.window_shift_max_s, rng);
          shift = std::lround(delta * ex.rate_hz / static_cast<double>(ex.quantum));
          shift = std::clamp(shift, -static_cast<long>(ex.max_shift), static_cast<long>(ex.max_shift));
        }
        const bool reverse = augment::bernoulli(rng, aug.flip_time_prob);
        const bool swap = augment::bernoulli(rng, aug.flip_side_prob);
        Materialized m = materialize(ex, fc, shift, reverse, swap);
        if (spec.uses_spectrogram()) mask_spectrogram(m.spec, scales, bins, augment::draw_xy_masks(scales, bins, aug, rng));
        items.push_back(std::move(m));
        targets.push_back(dataset::vote_distribution(rec));
        weights.push_back(dataset::sample_weight(rec, stage, e, epochs, cfg.weights));
      }
      if (aug.mixup_prob > 0.0 && aug.mixup_alpha > 0.0 && bs > 1) {
        const auto originals = items;
        const auto orig_targets = targets;
        const auto orig_weights = weights;
        std::uniform_int_distribution<std::size_t> partner(0, bs - 1);
        for (std::size_t k = 0; k < bs; ++k) {
          if (!augment::bernoulli(rng, aug.mixup_prob)) continue;
          const std::size_t j = partner(rng);
          const double lambda = augment::draw_mixup_lambda(aug.mixup_alpha, rng);
          if (!originals[k].waveform.empty())
            items[k].waveform = augment::mix_inputs(originals[k].waveform, originals[j].waveform, lambda);
          if (!originals[k].spec.empty())
            items[k].spec = augment::mix_inputs(originals[k].spec, originals[j].spec, lambda);
          targets[k] = augment::mix_labels(orig_targets[k], orig_targets[j], lambda);
          weights[k] = lambda * orig_weights[k] + (1.0 - lambda) * orig_weights[j];
        }
      }

      const auto input = assemble(items, spec);
      const auto out = nn::kl_loss(model.forward(input, nn::Mode::train), targets, weights);
      if (!std::isfinite(out.loss))
        throw TrainingDiverged("stage " + std::to_string(stage) + " epoch " + std::to_string(e) +
                                   ": non-finite loss",
                               history);
      model.zero_grad();
      model.backward(out.grad);
      clip_grad_norm(params, cfg.grad_clip);
      const double lr = cosine_lr(std::min(step, horizon), horizon, cfg.lr0, cfg.lr_min);
      history.steps.push_back({stage, step, lr});
      adam.step(params, lr);
      ++step;
      const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
      loss_acc += out.loss * wsum;
      weight_acc += wsum;
    }

    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = e;
    rec.train_loss = loss_acc / weight_acc;
    rec.n_train = n;
    if (!val_idx.empty()) rec.val_kl = mean_kl(predict(model, data, val_idx), val_targets);
    history.epochs.push_back(rec);
  }
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0xf01du};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

FoldResult run_fold(const nn::ModelSpec& spec, const TrainData& data, const dataset::FoldPlan& plan, std::size_t fold,
                    Strategy strategy, const TrainConfig& cfg) {
  if (fold >= plan.k) throw std::invalid_argument("run_fold: fold " + std::to_string(fold) + " out of range");
  if (plan.assignment.size() != data.records.size())
    throw std::invalid_argument("run_fold: fold plan covers " + std::to_string(plan.assignment.size()) +
                                " records, data has " + std::to_string(data.records.size()));
  nn::ModelSpec fs = spec;
  fs.seed = fold_seed(cfg.seed, fold);
  FoldResult r;
  r.fold = fold;
  r.val_indices = plan.validation_indices(fold);
  const auto train_idx = plan.training_indices(fold);
  if (r.val_indices.empty()) throw std::runtime_error("fold " + std::to_string(fold) + " has no validation records");

  nn::ModelGraph<float> model(fs);
  if (strategy == Strategy::two_stage) {
    train_stage(model, data, train_idx, r.val_indices, 1, cfg.stage1_epochs, cfg, r.history);
    r.stage1 = nn::make_checkpoint(model, json{{"stage", 1}, {"fold", fold}});
    model = nn::model_from_checkpoint<float>(*r.stage1);
    train_stage(model, data, train_idx, r.val_indices, 2, cfg.stage2_epochs, cfg, r.history);
  } else {
    train_stage(model, data, train_idx, r.val_indices, 2, cfg.stage1_epochs + cfg.stage2_epochs, cfg, r.history);
  }
  r.final_model = nn::make_checkpoint(model, json{{"stage", 2}, {"fold", fold}});
  r.predictions = predict(model, data, r.val_indices);
  std::vector<ClassDistribution> targets;
  for (auto i : r.val_indices) targets.push_back(dataset::vote_distribution(data.records[i]));
  r.kl = mean_kl(r.predictions, targets);
  return r;
}

std::vector<FoldResult> run_cross_validation(const nn::ModelSpec& spec, const TrainData& data,
                                             const dataset::FoldPlan& plan, Strategy strategy,
                                             const TrainConfig& cfg) {
  std::vector<FoldResult> out(plan.k);
  if (cfg.threads <= 1) {
    for (std::size_t f = 0; f < plan.k; ++f) out[f] = run_fold(spec, data, plan, f, strategy, cfg);
    return out;
  }
  for (std::size_t lo = 0; lo < plan.k; lo += cfg.threads) {
    std::vector<std::future<FoldResult>> jobs;
    for (std::size_t f = lo; f < std::min(plan.k, lo + cfg.threads); ++f)
      jobs.push_back(std::async(std::launch::async, [&, f] { return run_fold(spec, data, plan, f, strategy, cfg); }));
    for (std::size_t f = lo; f < std::min(plan.k, lo + cfg.threads); ++f) out[f] = jobs[f - lo].get();
  }
  return out;
}

}  // namespace hbac::train
