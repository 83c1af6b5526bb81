#pragma once

#include "hbac/cwt.hpp"
#include "hbac/dataset.hpp"
#include "hbac/eval.hpp"
#include "hbac/nn/model.hpp"
#include "hbac/signals.hpp"
#include "hbac/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hbac::pipeline {

namespace fs = std::filesystem;

// Overrides paths.cache_dir when set.
inline constexpr const char* kCacheEnv = "HBAC_CACHE_DIR";

struct Paths {
  fs::path eeg_dir = "data/eeg";
  fs::path manifest = "data/manifest.csv";
  fs::path cache_dir = "cache";
  fs::path folds = "folds.json";
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  Paths paths;
  signals::MontageSpec montage = signals::MontageSpec::double_banana();
  signals::ConditioningParams conditioning;
  cwt::SpectrogramParams cwt;
  train::FeatureConfig features;
  nn::ModelSpec model;
  train::TrainConfig train;
  std::size_t k = 5;

  // Relative paths resolve against `base_dir`. Unknown keys are errors.
  static PipelineConfig from_json(const nlohmann::json& j, const fs::path& base_dir = {});
  static PipelineConfig load(const fs::path& path);
  nlohmann::json to_json() const;

  // paths.cache_dir unless the environment overrides it.
  fs::path cache_dir() const;
};

struct StageStats {
  std::size_t written = 0;
  std::size_t skipped = 0;
};

// data/eeg/<eeg_id>.f32 + .json, data/manifest.csv, data/synth.json.
StageStats write_synth(const dataset::SynthSpec& spec, const fs::path& out_dir);

// EEG files (.f32 with sidecar, or .csv) in a directory, sorted by name.
std::vector<fs::path> list_eeg_files(const fs::path& dir);

// Clip -> filter -> montage over the full context into cache/montage, plus
// the centered 50 s crop into cache/eeg_hr. Entries whose recorded content
// hash matches are left alone.
StageStats preprocess(const PipelineConfig& cfg);

// Spec-HR per cached montage into cache/spec_hr.
StageStats spectrogram_cache(const PipelineConfig& cfg);

// One spectrogram set per input EEG file into `out_dir`; the centered span is
// cropped from longer recordings and shorter ones are rejected.
StageStats spectrogram_files(const std::vector<fs::path>& inputs, const fs::path& out_dir, cwt::Resolution res,
                             const PipelineConfig& cfg, bool png = false);

dataset::FoldPlan split(const fs::path& manifest, std::size_t k, std::uint64_t seed, const fs::path& out);

// Model inputs for every manifest record, cached under cache/features/<key>.
train::TrainData load_training_data(const PipelineConfig& cfg, nn::Topology topology);

// Cross-validated training; writes config.json, folds.json, history.csv,
// lr.csv, predictions.csv and checkpoints/ into out_dir.
std::vector<train::FoldResult> train_run(const PipelineConfig& cfg, nn::Topology topology, train::Strategy strategy,
                                         const fs::path& folds_path, const fs::path& out_dir);

// Scores predictions.csv and emits the report files into the run directory.
eval::EvalReport evaluate_run(const fs::path& run_dir);

// Rebuilds the report and plots from the run's CSV files.
eval::EvalReport report_run(const fs::path& run_dir);

}  // namespace hbac::pipeline
