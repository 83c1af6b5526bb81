#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <unistd.h>

namespace fixture {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("hbac_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

hbac::signals::EegWindow random_window(double seconds, double rate_hz, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, static_cast<float>(sigma));
  hbac::signals::EegWindow w;
  w.rate_hz = rate_hz;
  w.electrodes = hbac::dataset::synth_electrodes();
  w.eeg_id = "w" + std::to_string(seed);
  const auto len = static_cast<std::size_t>(std::llround(seconds * rate_hz));
  w.samples = hbac::MatrixF(w.electrodes.size(), len);
  for (auto& v : w.samples.values()) v = n(rng);
  return w;
}

std::vector<float> random_signal(std::size_t n, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(d(rng));
  return x;
}

std::vector<float> sine(std::size_t n, double f_hz, double rate_hz, double amplitude, double phase) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = static_cast<float>(amplitude *
                              std::sin(2.0 * std::numbers::pi * f_hz * static_cast<double>(i) / rate_hz + phase));
  return x;
}

std::vector<hbac::dataset::LabelRecord> random_manifest(std::size_t patients, std::size_t max_rows,
                                                        std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> rows(1, max_rows);
  std::uniform_int_distribution<int> votes(0, 5);
  std::vector<hbac::dataset::LabelRecord> out;
  std::size_t id = 0;
  for (std::size_t p = 0; p < patients; ++p) {
    const std::size_t n = rows(rng);
    for (std::size_t r = 0; r < n; ++r) {
      hbac::dataset::LabelRecord rec;
      rec.eeg_id = std::to_string(1000 + id++);
      rec.spectrogram_id = rec.eeg_id;
      rec.patient_id = "p" + std::to_string(p);
      for (auto& v : rec.votes) v = votes(rng);
      rec.votes[0] += 1;
      out.push_back(rec);
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace fixture
