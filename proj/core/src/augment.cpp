#include "hbac/augment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

namespace hbac::augment {

using nlohmann::json;

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.xy_mask_prob = 0.0;
  c.mixup_alpha = 0.0;
  c.mixup_prob = 0.0;
  c.window_shift_max_s = 0.0;
  c.flip_time_prob = 0.0;
  c.flip_side_prob = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  for (auto [name, p] : {std::pair{"xy_mask_prob", xy_mask_prob}, std::pair{"mixup_prob", mixup_prob},
                         std::pair{"flip_time_prob", flip_time_prob}, std::pair{"flip_side_prob", flip_side_prob}})
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("augment: ") + name + " must be in [0, 1]");
  if (xy_mask_max_nodes < 1) throw std::invalid_argument("augment: xy_mask_max_nodes must be >= 1");
  if (xy_mask_max_width < 1) throw std::invalid_argument("augment: xy_mask_max_width must be >= 1");
  if (!(window_shift_max_s >= 0.0)) throw std::invalid_argument("augment: window_shift_max_s must be >= 0");
  if (window_shift_max_s > 5.0) throw std::invalid_argument("augment: window_shift_max_s must be <= 5");
  if (!(mixup_alpha >= 0.0)) throw std::invalid_argument("augment: mixup_alpha must be >= 0");
}

json AugmentConfig::to_json() const {
  return json{{"xy_mask_prob", xy_mask_prob},
              {"xy_mask_max_nodes", xy_mask_max_nodes},
              {"xy_mask_max_width", xy_mask_max_width},
              {"mixup_alpha", mixup_alpha},
              {"mixup_prob", mixup_prob},
              {"window_shift_max_s", window_shift_max_s},
              {"flip_time_prob", flip_time_prob},
              {"flip_side_prob", flip_side_prob},
              {"rng_seed", rng_seed}};
}

AugmentConfig AugmentConfig::from_json(const json& j) {
  static const std::set<std::string> known = {"xy_mask_prob",       "xy_mask_max_nodes", "xy_mask_max_width",
                                              "mixup_alpha",        "mixup_prob",        "window_shift_max_s",
                                              "flip_time_prob",     "flip_side_prob",    "rng_seed"};
  if (!j.is_object()) throw std::invalid_argument("augment: config must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("augment: unknown key '" + k + "'");
  AugmentConfig c;
  c.xy_mask_prob = j.value("xy_mask_prob", c.xy_mask_prob);
  c.xy_mask_max_nodes = j.value("xy_mask_max_nodes", c.xy_mask_max_nodes);
  c.xy_mask_max_width = j.value("xy_mask_max_width", c.xy_mask_max_width);
  c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
  c.mixup_prob = j.value("mixup_prob", c.mixup_prob);
  c.window_shift_max_s = j.value("window_shift_max_s", c.window_shift_max_s);
  c.flip_time_prob = j.value("flip_time_prob", c.flip_time_prob);
  c.flip_side_prob = j.value("flip_side_prob", c.flip_side_prob);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.validate();
  return c;
}

Rng stream_for(std::uint64_t seed, std::uint64_t stage, std::uint64_t epoch, std::uint64_t batch) {
  std::seed_seq seq{seed, stage, epoch, batch, std::uint64_t{0xa09e}};
  return Rng(seq);
}

bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

std::vector<MaskBand> draw_xy_masks(std::size_t rows, std::size_t cols, const AugmentConfig& cfg, Rng& rng) {
  const auto max_w = static_cast<std::size_t>(cfg.xy_mask_max_width);
  std::vector<MaskBand> bands;
  if (!bernoulli(rng, cfg.xy_mask_prob)) return bands;
  if (rows < max_w || cols < max_w)
    throw std::invalid_argument("xy_mask: image must be at least " + std::to_string(max_w) + "x" +
                                std::to_string(max_w));
  const int k = std::uniform_int_distribution<int>(1, cfg.xy_mask_max_nodes)(rng);
  for (int i = 0; i < k; ++i) {
    MaskBand b;
    b.axis = bernoulli(rng, 0.5) ? MaskBand::Axis::time : MaskBand::Axis::freq;
    b.width = std::uniform_int_distribution<std::size_t>(1, max_w)(rng);
    const std::size_t extent = b.axis == MaskBand::Axis::time ? cols : rows;
    b.start = std::uniform_int_distribution<std::size_t>(0, extent - b.width)(rng);
    bands.push_back(b);
  }
  return bands;
}

void apply_masks(MatrixF& img, std::span<const MaskBand> bands) {
  for (const auto& b : bands) {
    if (b.axis == MaskBand::Axis::time) {
      for (std::size_t r = 0; r < img.rows(); ++r)
        for (std::size_t c = b.start; c < b.start + b.width && c < img.cols(); ++c) img(r, c) = 0.0f;
    } else {
      for (std::size_t r = b.start; r < b.start + b.width && r < img.rows(); ++r)
        std::fill(img.row(r).begin(), img.row(r).end(), 0.0f);
    }
  }
}

MatrixF xy_mask(const MatrixF& img, const AugmentConfig& cfg, Rng& rng) {
  MatrixF out = img;
  apply_masks(out, draw_xy_masks(img.rows(), img.cols(), cfg, rng));
  return out;
}

double draw_mixup_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0)) throw std::invalid_argument("mixup: alpha must be positive to draw lambda");
  std::gamma_distribution<double> g(alpha, 1.0);
  const double x = g(rng);
  const double y = g(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

std::vector<float> mix_inputs(std::span<const float> a, std::span<const float> b, double lambda) {
  if (a.size() != b.size())
    throw std::invalid_argument("mixup: input sizes differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup: lambda must be in [0, 1]");
  std::vector<float> out(a.size());
  if (lambda == 1.0) {
    std::copy(a.begin(), a.end(), out.begin());
  } else if (lambda == 0.0) {
    std::copy(b.begin(), b.end(), out.begin());
  } else {
    for (std::size_t i = 0; i < a.size(); ++i)
      out[i] = static_cast<float>(lambda * a[i] + (1.0 - lambda) * b[i]);
  }
  return out;
}

ClassDistribution mix_labels(const ClassDistribution& a, const ClassDistribution& b, double lambda) {
  if (lambda == 1.0) return a;
  if (lambda == 0.0) return b;
  ClassDistribution out;
  for (std::size_t i = 0; i < kNumClasses; ++i) out.p[i] = lambda * a.p[i] + (1.0 - lambda) * b.p[i];
  return out;
}

Mixed mixup(std::span<const float> xa, const ClassDistribution& pa, std::span<const float> xb,
            const ClassDistribution& pb, double lambda) {
  return {mix_inputs(xa, xb, lambda), mix_labels(pa, pb, lambda)};
}

double draw_shift(double max_shift_s, Rng& rng) {
  if (max_shift_s <= 0.0) return 0.0;
  return std::uniform_real_distribution<double>(-max_shift_s, max_shift_s)(rng);
}

signals::EegWindow shift_window(const signals::EegWindow& context, double span_s, Rng& rng, double max_shift_s,
                                double* applied_shift_s) {
  double delta = draw_shift(max_shift_s, rng);
  // Snap to whole samples so the crop is exactly representable.
  delta = std::round(delta * context.rate_hz) / context.rate_hz;
  const double slack = (context.duration_s() - span_s) / 2.0;
  if (std::abs(delta) > slack + 1e-9) {
    std::clog << "shift_window: " << context.eeg_id << " has " << slack << " s of context for a " << delta
              << " s shift; using 0\n";
    delta = 0.0;
  }
  if (applied_shift_s) *applied_shift_s = delta;
  return signals::crop_center(context, span_s, delta);
}

void reverse_time(MatrixF& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) std::reverse(m.row(r).begin(), m.row(r).end());
}

MatrixF flip_time(const MatrixF& m, Rng& rng, double p) {
  MatrixF out = m;
  if (bernoulli(rng, p)) reverse_time(out);
  return out;
}

void swap_sides(signals::MontageSignals& ms) {
  using signals::kPairsPerChain;
  for (auto [l, r] : {std::pair<std::size_t, std::size_t>{0, 3}, {1, 2}})
    for (std::size_t p = 0; p < kPairsPerChain; ++p) {
      auto a = ms.differential(l, p);
      auto b = ms.differential(r, p);
      std::swap_ranges(a.begin(), a.end(), b.begin());
    }
}

signals::MontageSignals flip_brain_side(const signals::MontageSignals& ms, Rng& rng, double p) {
  auto out = ms;
  if (bernoulli(rng, p)) swap_sides(out);
  return out;
}

}  // namespace hbac::augment
