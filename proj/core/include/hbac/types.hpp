#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

namespace hbac {

inline constexpr std::size_t kNumClasses = 6;

// Fixed class order; index order doubles as the tie-break priority.
enum class EventClass : std::size_t { seizure = 0, lpd, gpd, lrda, grda, other };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "seizure", "lpd", "gpd", "lrda", "grda", "other"};

inline std::string_view class_name(std::size_t c) { return kClassNames.at(c); }

// Probability vector over the six event classes.
struct ClassDistribution {
  std::array<double, kNumClasses> p{};

  static ClassDistribution uniform() {
    ClassDistribution d;
    d.p.fill(1.0 / static_cast<double>(kNumClasses));
    return d;
  }
  static ClassDistribution one_hot(std::size_t c) {
    ClassDistribution d;
    d.p.at(c) = 1.0;
    return d;
  }

  double operator[](std::size_t i) const { return p[i]; }
  double& operator[](std::size_t i) { return p[i]; }

  double sum() const {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
  }
  bool valid(double tol = 1e-9) const {
    for (double v : p)
      if (!(v >= 0.0)) return false;
    double s = sum();
    return s > 1.0 - tol && s < 1.0 + tol;
  }
  // Lowest index wins ties.
  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < kNumClasses; ++i)
      if (p[i] > p[best]) best = i;
    return best;
  }

  bool operator==(const ClassDistribution&) const = default;
};

}  // namespace hbac
