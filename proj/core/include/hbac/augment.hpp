#pragma once

#include "hbac/matrix.hpp"
#include "hbac/signals.hpp"
#include "hbac/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hbac::augment {

using Rng = std::mt19937_64;

struct AugmentConfig {
  double xy_mask_prob = 0.5;
  int xy_mask_max_nodes = 8;
  int xy_mask_max_width = 8;
  double mixup_alpha = 0.4;
  double mixup_prob = 0.5;
  double window_shift_max_s = 5.0;
  double flip_time_prob = 0.5;
  double flip_side_prob = 0.5;
  std::uint64_t rng_seed = 0;

  // Every augmentation off; the stack reproduces its inputs bit-exactly.
  static AugmentConfig disabled();

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are rejected.
  static AugmentConfig from_json(const nlohmann::json& j);
};

// Independent stream per (seed, stage, epoch, batch) so results do not
// depend on how batches are spread over workers.
Rng stream_for(std::uint64_t seed, std::uint64_t stage, std::uint64_t epoch, std::uint64_t batch);

struct MaskBand {
  enum class Axis { time, freq } axis = Axis::time;
  std::size_t start = 0;
  std::size_t width = 0;
  bool operator==(const MaskBand&) const = default;
};

// With probability xy_mask_prob: k ~ U{1..max_nodes} bands, each a
// full-height time band or full-width frequency band (equally likely) of
// width U{1..max_width}, placed uniformly so it fits. Empty otherwise.
// Drawing a mask on an image narrower than max_width throws.
std::vector<MaskBand> draw_xy_masks(std::size_t rows, std::size_t cols, const AugmentConfig& cfg, Rng& rng);
void apply_masks(MatrixF& img, std::span<const MaskBand> bands);
MatrixF xy_mask(const MatrixF& img, const AugmentConfig& cfg, Rng& rng);

// Beta(alpha, alpha) via two Gamma draws.
double draw_mixup_lambda(double alpha, Rng& rng);

// x = lambda * a + (1 - lambda) * b, same for the label.
std::vector<float> mix_inputs(std::span<const float> a, std::span<const float> b, double lambda);
ClassDistribution mix_labels(const ClassDistribution& a, const ClassDistribution& b, double lambda);

struct Mixed {
  std::vector<float> input;
  ClassDistribution label;
};
Mixed mixup(std::span<const float> xa, const ClassDistribution& pa, std::span<const float> xb,
            const ClassDistribution& pb, double lambda);

// Draws delta ~ U[-max_shift, max_shift] and crops `span_s` around
// context center + delta. Falls back to delta = 0 when the context cannot
// hold the shifted crop; `applied_shift_s` reports what was used.
signals::EegWindow shift_window(const signals::EegWindow& context, double span_s, Rng& rng, double max_shift_s = 5.0,
                                double* applied_shift_s = nullptr);
double draw_shift(double max_shift_s, Rng& rng);

// Time reversal of every row, jointly.
void reverse_time(MatrixF& m);
MatrixF flip_time(const MatrixF& m, Rng& rng, double p);

// LL <-> RL and LP <-> RP.
void swap_sides(signals::MontageSignals& ms);
signals::MontageSignals flip_brain_side(const signals::MontageSignals& ms, Rng& rng, double p);

bool bernoulli(Rng& rng, double p);

}  // namespace hbac::augment
