#pragma once

#include "hbac/train.hpp"
#include "hbac/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hbac::eval {

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

// Unweighted mean of KL(target_i || pred_i).
double mean_kl(std::span<const ClassDistribution> preds, std::span<const ClassDistribution> targets);

// (i, j) counts rows with argmax(target) = i and argmax(pred) = j.
ConfusionMatrix confusion_matrix(std::span<const ClassDistribution> preds, std::span<const ClassDistribution> targets);

struct FoldPredictions {
  std::size_t fold = 0;
  std::vector<std::string> eeg_ids;
  std::vector<ClassDistribution> predictions;
  std::vector<ClassDistribution> targets;
};

struct EvalReport {
  std::string schema = "eval/1";
  std::string aggregation = "mean_of_fold_means";
  std::vector<double> fold_kl;
  double mean_kl = 0.0;
  double std_kl = 0.0;  // population std over folds
  ConfusionMatrix confusion{};
  std::array<std::size_t, kNumClasses> class_counts{};
  std::size_t n_rows = 0;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

// Every fold 0..k-1 must appear exactly once.
EvalReport cross_validate(std::span<const FoldPredictions> folds, std::size_t k,
                          const nlohmann::json& metadata = nlohmann::json::object());

// predictions.csv: fold,eeg_id,target_<class>...,pred_<class>...
std::string predictions_csv(std::span<const FoldPredictions> folds);
std::vector<FoldPredictions> parse_predictions_csv(const std::string& text);

struct HistoryRow {
  std::size_t fold = 0;
  train::EpochRecord epoch;
};
struct LrRow {
  std::size_t fold = 0;
  train::StepRecord step;
};
std::vector<HistoryRow> parse_history_csv(const std::string& text);
std::vector<LrRow> parse_lr_csv(const std::string& text);

// report.json, confusion_matrix.csv, confusion_heatmap.svg and, when
// histories are given, lr_curve.svg and loss_curves.svg.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir,
                 std::span<const HistoryRow> history = {}, std::span<const LrRow> lr = {});

std::string confusion_csv(const ConfusionMatrix& m);

}  // namespace hbac::eval
