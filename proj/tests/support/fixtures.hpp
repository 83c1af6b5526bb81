#pragma once

#include "hbac/dataset.hpp"
#include "hbac/signals.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixture {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

// Window over the standard synthetic electrode set, Gaussian samples.
hbac::signals::EegWindow random_window(double seconds, double rate_hz, std::uint64_t seed, double sigma = 30.0);

std::vector<float> random_signal(std::size_t n, std::mt19937_64& rng, double sigma = 1.0);

std::vector<float> sine(std::size_t n, double f_hz, double rate_hz, double amplitude = 1.0, double phase = 0.0);

// Manifest with `patients` patients holding 1..max_rows rows each.
std::vector<hbac::dataset::LabelRecord> random_manifest(std::size_t patients, std::size_t max_rows,
                                                        std::mt19937_64& rng);

}  // namespace fixture
