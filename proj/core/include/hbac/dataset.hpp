#pragma once

#include "hbac/signals.hpp"
#include "hbac/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hbac::dataset {

using VoteCounts = std::array<int, kNumClasses>;

struct LabelRecord {
  std::string eeg_id;
  std::string spectrogram_id;
  std::string patient_id;
  double eeg_offset_s = 0.0;
  VoteCounts votes{};

  int total_votes() const;
  std::size_t consensus_class() const;  // argmax, lowest index on ties

  bool operator==(const LabelRecord&) const = default;
};

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct Manifest {
  std::vector<LabelRecord> records;
  std::vector<RowError> rejected;
};

// Columns: eeg_id, spectrogram_id (optional), patient_id, eeg_offset_s
// (optional), seizure_vote, lpd_vote, gpd_vote, lrda_vote, grda_vote,
// other_vote. Rows with negative or all-zero votes land in `rejected`; a
// missing required column throws.
Manifest parse_manifest(std::istream& in);
Manifest parse_manifest(const std::filesystem::path& path);
std::string format_manifest(std::span<const LabelRecord> records);

ClassDistribution vote_distribution(const LabelRecord& r);

std::vector<LabelRecord> filter_high_confidence(std::span<const LabelRecord> records, int min_votes = 10);
// Index form used by training: keeps indices whose record has >= min_votes.
std::vector<std::size_t> filter_high_confidence(std::span<const LabelRecord> records,
                                                std::span<const std::size_t> indices, int min_votes = 10);

struct FoldPlan {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignment;                 // record index -> fold
  std::map<std::string, std::size_t> patient_fold;     // patient -> fold

  std::vector<std::size_t> validation_indices(std::size_t fold) const;
  std::vector<std::size_t> training_indices(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;

  // {"seed", "k", "patients": {patient: fold}}
  nlohmann::json to_json() const;
  // Rebuilds the assignment for `records`; every patient must be listed.
  static FoldPlan from_json(const nlohmann::json& j, std::span<const LabelRecord> records);
};

// Patients are shuffled by `seed`, stably ordered by record count
// (descending) and each placed in the currently lightest fold (lowest index
// on ties).
FoldPlan group_kfold(std::span<const LabelRecord> records, std::size_t k = 5, std::uint64_t seed = 0);

struct WeightSchedule {
  int full_weight_votes = 10;  // records at or above this always weigh 1
  double floor_start = 1.0;
  double floor_end = 0.25;

  nlohmann::json to_json() const;
};

// Stage 1: 1. Stage 2: max(floor(epoch), min(1, votes / full_weight_votes)),
// floor ramping linearly from floor_start to floor_end over stage_epochs.
double sample_weight(const LabelRecord& r, int stage, int epoch, int stage_epochs, const WeightSchedule& schedule = {});

// --- synthetic desk-scale corpus --------------------------------------------

struct SynthSpec {
  std::size_t n_patients = 50;
  std::size_t rows_per_patient = 4;
  std::vector<std::size_t> classes = {0, 1, 2, 3, 4, 5};  // archetypes drawn from
  double noise_level = 0.5;         // background amplitude relative to nominal
  double label_noise = 0.0;         // P(low-vote row carries a wrong majority)
  double high_vote_fraction = 0.5;  // P(row gets 10-20 votes)
  double context_s = 60.0;
  double rate_hz = 200.0;
  std::uint64_t seed = 1;
};

struct SynthDataset {
  std::vector<signals::EegWindow> windows;
  std::vector<LabelRecord> records;
  std::vector<std::size_t> true_class;  // archetype injected into each window
};

// Standard 19 scalp electrodes plus EKG.
const std::vector<std::string>& synth_electrodes();

SynthDataset synth_dataset(const SynthSpec& spec);

// Clean nominal rendering (no background, nominal amplitude/frequency) of
// one archetype; used for template-matching checks.
signals::EegWindow render_archetype(std::size_t cls, double context_s, double rate_hz, bool left_side = true);

}  // namespace hbac::dataset
