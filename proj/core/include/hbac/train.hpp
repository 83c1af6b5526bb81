#pragma once

#include "hbac/augment.hpp"
#include "hbac/cwt.hpp"
#include "hbac/dataset.hpp"
#include "hbac/nn/checkpoint.hpp"
#include "hbac/nn/model.hpp"
#include "hbac/signals.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbac::train {

// ---- schedule and optimizer ------------------------------------------------

// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min = 0.0);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m, v;
  std::uint64_t t = 0;
  bool operator==(const AdamMoments&) const = default;
};

// Bias-corrected Adam update of one tensor. Throws, naming `id`, on a
// non-finite gradient before touching anything.
void adam_step(std::span<float> params, std::span<const float> grads, AdamMoments& state, double lr,
               const AdamParams& hp = {}, std::string_view id = "");

class Adam {
 public:
  explicit Adam(AdamParams hp = {}) : hp_(hp) {}
  // All gradients are checked for finiteness before any update.
  void step(const std::vector<nn::Parameter<float>*>& params, double lr);
  void reset() { state_.clear(); }
  const std::vector<AdamMoments>& state() const { return state_; }

 private:
  AdamParams hp_;
  std::vector<AdamMoments> state_;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(const std::vector<nn::Parameter<float>*>& params, double max_norm);

// ---- configuration ---------------------------------------------------------

enum class Strategy { two_stage, single_stage };
std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct TrainConfig {
  double lr0 = 0.0012;
  double lr_min = 0.0;
  std::size_t batch_size = 32;
  int stage1_epochs = 5;
  int stage2_epochs = 15;
  int min_votes = 10;
  double grad_clip = 5.0;
  AdamParams adam;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // folds trained concurrently
  augment::AugmentConfig augment;
  dataset::WeightSchedule weights;

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

// How a conditioned montage context becomes model inputs.
struct FeatureConfig {
  double span_s = 50.0;
  std::size_t wave_pool = 5;      // waveform mean-pooling factor
  double wave_scale = 0.01;       // multiplies microvolts
  std::size_t spec_pool = 25;     // extra pooling of Spec-HR time bins
  double shift_margin_s = 5.0;    // context kept either side for shifting
  cwt::SpectrogramParams cwt;

  void validate() const;
  nlohmann::json to_json() const;
  static FeatureConfig from_json(const nlohmann::json& j);
};

// ---- examples --------------------------------------------------------------

// Precomputed inputs for one record covering the model span plus shift
// margin on both sides. Spectrogram bins are raw pooled power anchored so
// the centered span starts on a bin boundary.
struct Example {
  double rate_hz = 0.0;
  std::size_t span_samples = 0;
  std::size_t quantum = 0;    // samples per shift step
  std::size_t max_shift = 0;  // steps available either side
  MatrixF waveform;           // [16 x samples / wave_pool], empty if unused
  std::array<MatrixF, signals::kNumChains> spec;  // [scales x bins], empty if unused

  bool operator==(const Example&) const = default;
};

Example extract_features(const signals::MontageSignals& context, const FeatureConfig& fc, bool need_waveform,
                         bool need_spectrogram);

struct Materialized {
  std::vector<float> waveform;  // [16 x T]
  std::vector<float> spec;      // [4 x scales x bins], log-standardized per chain
};

// Crops at `shift` steps from center, optionally time-reversed and
// side-swapped.
Materialized materialize(const Example& ex, const FeatureConfig& fc, long shift = 0, bool reverse = false,
                         bool swap_sides = false);

struct TrainData {
  std::vector<dataset::LabelRecord> records;
  std::vector<Example> examples;  // same order as records
  FeatureConfig features;
};

// Model dimensions implied by the feature layout.
nn::ModelSpec shape_model(nn::ModelSpec spec, const TrainData& data);

// ---- training --------------------------------------------------------------

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  double train_loss = 0.0;
  double val_kl = 0.0;
  std::size_t n_train = 0;
  bool operator==(const EpochRecord&) const = default;
};

struct StepRecord {
  int stage = 1;
  std::size_t step = 0;
  double lr = 0.0;
  bool operator==(const StepRecord&) const = default;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  std::string epochs_csv(std::optional<std::size_t> fold = std::nullopt) const;
  std::string steps_csv(std::optional<std::size_t> fold = std::nullopt) const;
  bool operator==(const TrainHistory&) const = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

// Batch inputs for `indices`, unaugmented and centered.
nn::ModelInput<float> make_batch(const TrainData& data, std::span<const std::size_t> indices, const nn::ModelSpec& spec);

std::vector<ClassDistribution> predict(nn::ModelGraph<float>& model, const TrainData& data,
                                       std::span<const std::size_t> indices, std::size_t batch_size = 64);

// One stage over `train_idx` (stage 1 keeps only >= min_votes records),
// cosine schedule over this stage's own steps, fresh optimizer. Validation KL
// on `val_idx` after every epoch. Throws on an empty split and
// TrainingDiverged on a non-finite loss.
void train_stage(nn::ModelGraph<float>& model, const TrainData& data, std::span<const std::size_t> train_idx,
                 std::span<const std::size_t> val_idx, int stage, int epochs, const TrainConfig& cfg,
                 TrainHistory& history);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> val_indices;
  std::vector<ClassDistribution> predictions;
  double kl = 0.0;
  TrainHistory history;
  std::optional<nn::Checkpoint> stage1;
  nn::Checkpoint final_model;
};

// Fresh model -> stage 1 -> checkpoint round trip -> stage 2 (two-stage), or
// stage 2 only for stage1 + stage2 epochs (single-stage).
FoldResult run_fold(const nn::ModelSpec& spec, const TrainData& data, const dataset::FoldPlan& plan, std::size_t fold,
                    Strategy strategy, const TrainConfig& cfg);

std::vector<FoldResult> run_cross_validation(const nn::ModelSpec& spec, const TrainData& data,
                                             const dataset::FoldPlan& plan, Strategy strategy, const TrainConfig& cfg);

// Seed for fold `fold`'s model, derived from the run seed.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

}  // namespace hbac::train
