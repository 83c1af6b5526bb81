#pragma once

#include "hbac/filter.hpp"
#include "hbac/matrix.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hbac::signals {

// Raw multi-channel EEG segment, microvolts, channel-major.
struct EegWindow {
  MatrixF samples;  // [n_channels x n_samples]
  double rate_hz = 200.0;
  std::vector<std::string> electrodes;
  std::string eeg_id;
  double t0_s = 0.0;

  std::size_t n_channels() const { return samples.rows(); }
  std::size_t n_samples() const { return samples.cols(); }
  double duration_s() const { return static_cast<double>(n_samples()) / rate_hz; }
  std::optional<std::size_t> channel_index(std::string_view name) const;

  // Throws on a violated invariant (rate, unique names, finite samples).
  void validate() const;

  bool operator==(const EegWindow&) const = default;
};

enum class EegFormat { csv, raw_f32 };

// `.csv` -> csv, anything else -> raw float32 with a `.json` sidecar.
EegFormat detect_format(const std::filesystem::path& path);

struct CsvOptions {
  double rate_hz = 200.0;
  std::string eeg_id;
  double t0_s = 0.0;
};

// CSV: header row of electrode names, one row per sample.
EegWindow read_eeg_csv(std::istream& in, const CsvOptions& opts = {});
// Raw: little-endian float32, channel-major, described by a JSON sidecar
// {rate_hz, electrodes, eeg_id, t0_s[, n_samples]}.
EegWindow read_eeg_raw(std::span<const std::uint8_t> payload, const nlohmann::json& sidecar);

// For raw input `path` is the payload (`x.f32`); the sidecar is `x.json`.
EegWindow load_eeg_window(const std::filesystem::path& path);
EegWindow load_eeg_window(const std::filesystem::path& path, EegFormat format);

// Writes `<stem>.f32` and `<stem>.json`.
void save_eeg_window(const EegWindow& w, const std::filesystem::path& stem);
nlohmann::json eeg_sidecar(const EegWindow& w);

struct ElectrodePair {
  std::string anode;
  std::string cathode;
  bool operator==(const ElectrodePair&) const = default;
};

inline constexpr std::size_t kNumChains = 4;
inline constexpr std::size_t kPairsPerChain = 4;
inline constexpr std::size_t kNumDifferentials = kNumChains * kPairsPerChain;

enum class Chain : std::size_t { LL = 0, LP, RP, RL };
inline constexpr std::array<std::string_view, kNumChains> kChainNames = {"LL", "LP", "RP", "RL"};

struct MontageChain {
  std::string name;
  std::array<ElectrodePair, kPairsPerChain> pairs;
  bool operator==(const MontageChain&) const = default;
};

struct MontageSpec {
  std::array<MontageChain, kNumChains> chains;

  static MontageSpec double_banana();
  // {"chains": [{"name": "LL", "pairs": [["Fp1","F7"], ...]}, ...]}
  static MontageSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Chain order LL, LP, RP, RL; four pairs each; consecutive pairs share an
  // electrode; LL/RL and LP/RP are mirror images.
  void validate() const;

  bool operator==(const MontageSpec&) const = default;
};

// Left<->right homologue of a 10-20 electrode name (midline names map to
// themselves).
std::string mirror_electrode(std::string_view name);

// Sixteen bipolar differentials, row = chain * 4 + pair.
struct MontageSignals {
  MatrixF signals;  // [16 x n_samples]
  double rate_hz = 200.0;
  std::string eeg_id;

  std::size_t n_samples() const { return signals.cols(); }
  double duration_s() const { return static_cast<double>(n_samples()) / rate_hz; }
  std::span<const float> differential(std::size_t chain, std::size_t pair) const {
    return signals.row(chain * kPairsPerChain + pair);
  }
  std::span<float> differential(std::size_t chain, std::size_t pair) {
    return signals.row(chain * kPairsPerChain + pair);
  }

  bool operator==(const MontageSignals&) const = default;
};

MontageSignals apply_montage(const EegWindow& w, const MontageSpec& m);

// Clamp into [-bound, bound]; in-range samples are returned bit-identical.
std::vector<float> clip_signal(std::span<const float> x, float bound);

// Contiguous span of `span_s` centered at duration/2 + shift_s.
EegWindow crop_center(const EegWindow& w, double span_s, double shift_s = 0.0);
MontageSignals crop_center(const MontageSignals& m, double span_s, double shift_s = 0.0);

// [start, start + length) sample range selected by crop_center.
struct SampleRange {
  std::size_t start = 0;
  std::size_t length = 0;
};
SampleRange center_range(std::size_t n_samples, double rate_hz, double span_s, double shift_s);

struct ConditioningParams {
  float clip_uv = 1024.0f;
  double low_hz = 0.5;
  double high_hz = 20.0;
  int order = 4;
};

// Clip then zero-phase bandpass every channel.
EegWindow condition_window(const EegWindow& w, const ConditioningParams& params);

}  // namespace hbac::signals
