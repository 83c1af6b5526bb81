#pragma once

#include "hbac/matrix.hpp"
#include "hbac/signals.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <complex>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hbac::cwt {

// Morlet envelope is truncated at this many scale units either side.
inline constexpr double kSupportHalfWidth = 5.0;

struct ScaleBank {
  std::vector<double> scales;           // in samples; descending
  std::vector<double> center_freqs_hz;  // ascending, same index as scales
  double rate_hz = 200.0;
  double omega0 = 6.0;

  std::size_t size() const { return scales.size(); }
  // Half-width in samples of the truncated kernel at index k.
  std::size_t half_support(std::size_t k) const;
  // Full support (2 * half + 1) of the coarsest scale.
  std::size_t max_support() const;
};

// Log-spaced center frequencies over [f_min, f_max] inclusive, mapped to
// scales by s = omega0 * rate / (2 pi f).
ScaleBank scales_for_band(double f_min, double f_max, std::size_t n_scales, double rate_hz, double omega0 = 6.0);

// L2-normalized Morlet kernel psi(m / s) / sqrt(s) for m in [-half, half].
std::vector<std::complex<double>> morlet_kernel(double scale, double omega0, std::size_t half);

// FFT convolution engine for one (bank, signal length) pair. Kernel spectra
// are computed once; power() is const and safe to call concurrently.
class CwtEngine {
 public:
  CwtEngine(ScaleBank bank, std::size_t n_samples);
  ~CwtEngine();
  CwtEngine(const CwtEngine&) = delete;
  CwtEngine& operator=(const CwtEngine&) = delete;

  const ScaleBank& bank() const { return bank_; }
  std::size_t n_samples() const { return n_; }
  std::size_t fft_size() const { return m_; }

  // |W(k, t)|^2, [n_scales x n_samples].
  MatrixF power(std::span<const float> x) const;

 private:
  struct Plans;
  ScaleBank bank_;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::vector<std::complex<double>>> kernel_spectra_;
  std::unique_ptr<Plans> plans_;
};

MatrixF cwt_power(std::span<const float> x, const ScaleBank& bank);

enum class Normalization { raw_power, log_standardized };
enum class Resolution { spec_hr, spec_lr };

struct Spectrogram {
  MatrixF power;  // [n_scales x n_timebins], row 0 = lowest frequency
  std::vector<double> freq_axis_hz;
  std::vector<double> time_axis_s;  // bin centers
  std::string chain_id;
  Normalization normalization = Normalization::raw_power;

  bool operator==(const Spectrogram&) const = default;
};

struct SpectrogramSet {
  std::array<Spectrogram, signals::kNumChains> chains;
  Resolution resolution = Resolution::spec_hr;

  std::size_t n_scales() const { return chains[0].power.rows(); }
  std::size_t n_timebins() const { return chains[0].power.cols(); }
  // Chain-major flattening: [4 x n_scales x n_timebins].
  std::vector<float> flatten() const;

  bool operator==(const SpectrogramSet&) const = default;
};

// (1/4) * sum of the four per-differential power matrices. The per-cell sum
// is order independent.
MatrixF chain_power(std::span<const std::span<const float>> diffs, const CwtEngine& engine);
Spectrogram chain_spectrogram(std::span<const std::span<const float>> diffs, const ScaleBank& bank);

// Non-overlapping mean pooling of `stride` columns; trailing partial block
// dropped.
MatrixF downsample_time(const MatrixF& m, std::size_t stride);

// log(m + eps) standardized to zero mean, unit std (std floored at 1e-8). A
// constant input maps to zeros.
MatrixF normalize_log(const MatrixF& m, double eps = 1e-6);

struct SpectrogramParams {
  double f_min = 0.5;
  double f_max = 40.0;
  std::size_t n_scales = 40;
  double omega0 = 6.0;
  std::size_t hr_stride = 16;
  std::size_t lr_stride = 400;
  double hr_span_s = 50.0;
  double lr_span_s = 600.0;
  double log_eps = 1e-6;

  nlohmann::json to_json() const;
  // Missing keys keep defaults; unknown keys are rejected.
  static SpectrogramParams from_json(const nlohmann::json& j);
};

// Per-chain cwt -> pool -> (optionally) normalize over arbitrary-length
// montage signals.
SpectrogramSet build_spectrogram_set(const signals::MontageSignals& ms, const SpectrogramParams& params,
                                     std::size_t stride, Normalization norm, Resolution res);

// 50 s montage -> 4 x (40 x 625) log-standardized images.
SpectrogramSet build_spec_hr(const signals::MontageSignals& ms, const SpectrogramParams& params = {},
                             Normalization norm = Normalization::log_standardized);
// 600 s montage -> 4 x (40 x 300) images.
SpectrogramSet build_spec_lr(const signals::MontageSignals& ms, const SpectrogramParams& params = {},
                             Normalization norm = Normalization::log_standardized);
SpectrogramSet build_spec_lr(const signals::EegWindow& w, const signals::MontageSpec& montage,
                             const SpectrogramParams& params = {},
                             Normalization norm = Normalization::log_standardized);

// `<stem>.f32` (chain-major float32) + `<stem>.json` axis sidecar.
void save_spectrogram_set(const SpectrogramSet& s, const std::filesystem::path& stem, const nlohmann::json& extra);
SpectrogramSet load_spectrogram_set(const std::filesystem::path& stem);

// 8-bit grayscale PNG, lowest frequency on the bottom row.
void write_png(const MatrixF& image, const std::filesystem::path& path);

}  // namespace hbac::cwt
