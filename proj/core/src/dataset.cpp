#include "hbac/dataset.hpp"

#include "hbac/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace hbac::dataset {

using nlohmann::json;

namespace {
constexpr std::array<const char*, kNumClasses> kVoteColumns = {"seizure_vote", "lpd_vote",  "gpd_vote",
                                                               "lrda_vote",    "grda_vote", "other_vote"};
}

int LabelRecord::total_votes() const { return std::accumulate(votes.begin(), votes.end(), 0); }

std::size_t LabelRecord::consensus_class() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumClasses; ++i)
    if (votes[i] > votes[best]) best = i;
  return best;
}

Manifest parse_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("manifest: empty file");
  const auto header = io::split_csv_line(line);
  auto find = [&](std::string_view name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto col_eeg = find("eeg_id");
  const auto col_patient = find("patient_id");
  const auto col_spec = find("spectrogram_id");
  const auto col_offset = find("eeg_offset_s");
  std::array<std::ptrdiff_t, kNumClasses> col_votes{};
  std::vector<std::string> missing;
  if (col_eeg < 0) missing.emplace_back("eeg_id");
  if (col_patient < 0) missing.emplace_back("patient_id");
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    col_votes[c] = find(kVoteColumns[c]);
    if (col_votes[c] < 0) missing.emplace_back(kVoteColumns[c]);
  }
  if (!missing.empty()) {
    std::string msg = "manifest: missing column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw std::invalid_argument(msg);
  }

  Manifest out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != header.size()) {
      out.rejected.push_back({line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                           std::to_string(f.size())});
      continue;
    }
    LabelRecord r;
    r.eeg_id = f[col_eeg];
    r.patient_id = f[col_patient];
    r.spectrogram_id = col_spec >= 0 ? f[col_spec] : r.eeg_id;
    std::string problem;
    if (r.eeg_id.empty()) problem = "empty eeg_id";
    if (r.patient_id.empty()) problem = "empty patient_id";
    if (problem.empty() && col_offset >= 0) {
      try {
        r.eeg_offset_s = std::stod(f[col_offset]);
      } catch (const std::exception&) {
        problem = "unparsable eeg_offset_s '" + f[col_offset] + "'";
      }
    }
    for (std::size_t c = 0; c < kNumClasses && problem.empty(); ++c) {
      const auto& s = f[col_votes[c]];
      int v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        problem = std::string(kVoteColumns[c]) + " is not an integer: '" + s + "'";
      else if (v < 0)
        problem = std::string(kVoteColumns[c]) + " is negative (" + s + ")";
      else
        r.votes[c] = v;
    }
    if (problem.empty() && r.total_votes() == 0) problem = "zero total votes";
    if (!problem.empty()) {
      out.rejected.push_back({line_no, problem});
      continue;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

Manifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  try {
    return parse_manifest(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string format_manifest(std::span<const LabelRecord> records) {
  std::ostringstream os;
  os << "eeg_id,spectrogram_id,patient_id,eeg_offset_s";
  for (const char* c : kVoteColumns) os << ',' << c;
  os << '\n';
  for (const auto& r : records) {
    os << r.eeg_id << ',' << r.spectrogram_id << ',' << r.patient_id << ',' << io::format_double(r.eeg_offset_s);
    for (int v : r.votes) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

ClassDistribution vote_distribution(const LabelRecord& r) {
  const int total = r.total_votes();
  if (total < 1) throw std::invalid_argument("vote_distribution: record " + r.eeg_id + " has no votes");
  ClassDistribution d;
  for (std::size_t i = 0; i < kNumClasses; ++i) d.p[i] = static_cast<double>(r.votes[i]) / total;
  return d;
}

std::vector<LabelRecord> filter_high_confidence(std::span<const LabelRecord> records, int min_votes) {
  std::vector<LabelRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [min_votes](const LabelRecord& r) { return r.total_votes() >= min_votes; });
  return out;
}

std::vector<std::size_t> filter_high_confidence(std::span<const LabelRecord> records,
                                                std::span<const std::size_t> indices, int min_votes) {
  std::vector<std::size_t> out;
  std::copy_if(indices.begin(), indices.end(), std::back_inserter(out),
               [&](std::size_t i) { return records[i].total_votes() >= min_votes; });
  return out;
}

// --- folds -------------------------------------------------------------------

std::vector<std::size_t> FoldPlan::validation_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : assignment) ++sizes.at(f);
  return sizes;
}

json FoldPlan::to_json() const {
  json patients = json::object();
  for (const auto& [p, f] : patient_fold) patients[p] = f;
  return json{{"seed", seed}, {"k", k}, {"patients", patients}};
}

FoldPlan FoldPlan::from_json(const json& j, std::span<const LabelRecord> records) {
  FoldPlan plan;
  plan.k = j.at("k").get<std::size_t>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [p, f] : j.at("patients").items()) {
    const auto fold = f.get<std::size_t>();
    if (fold >= plan.k) throw std::invalid_argument("fold plan: patient " + p + " assigned to out-of-range fold");
    plan.patient_fold.emplace(p, fold);
  }
  plan.assignment.reserve(records.size());
  for (const auto& r : records) {
    auto it = plan.patient_fold.find(r.patient_id);
    if (it == plan.patient_fold.end())
      throw std::invalid_argument("fold plan: patient " + r.patient_id + " (eeg " + r.eeg_id + ") has no fold");
    plan.assignment.push_back(it->second);
  }
  return plan;
}

FoldPlan group_kfold(std::span<const LabelRecord> records, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("group_kfold: k must be >= 2");
  std::vector<std::string> patients;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& r : records)
    if (counts[r.patient_id]++ == 0) patients.push_back(r.patient_id);
  if (patients.size() < k)
    throw std::invalid_argument("group_kfold: " + std::to_string(patients.size()) + " distinct patients for " +
                                std::to_string(k) + " folds");

  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::stable_sort(patients.begin(), patients.end(),
                   [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::vector<std::size_t> load(k, 0);
  for (const auto& p : patients) {
    const auto lightest = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    plan.patient_fold[p] = lightest;
    load[lightest] += counts[p];
  }
  plan.assignment.reserve(records.size());
  for (const auto& r : records) plan.assignment.push_back(plan.patient_fold.at(r.patient_id));
  return plan;
}

// --- weights -----------------------------------------------------------------

json WeightSchedule::to_json() const {
  return json{{"full_weight_votes", full_weight_votes}, {"floor_start", floor_start}, {"floor_end", floor_end}};
}

double sample_weight(const LabelRecord& r, int stage, int epoch, int stage_epochs, const WeightSchedule& schedule) {
  if (stage == 1) return 1.0;
  if (stage != 2) throw std::invalid_argument("sample_weight: stage must be 1 or 2");
  const double t = stage_epochs > 1 ? std::clamp(static_cast<double>(epoch) / (stage_epochs - 1), 0.0, 1.0) : 0.0;
  const double floor = schedule.floor_start + (schedule.floor_end - schedule.floor_start) * t;
  const double confidence = std::min(1.0, static_cast<double>(r.total_votes()) / schedule.full_weight_votes);
  return std::max(floor, confidence);
}

}  // namespace hbac::dataset
