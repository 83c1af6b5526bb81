#include "hbac/filter.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace hbac::signals;

namespace {

std::vector<double> sine_d(std::size_t n, double f, double rate) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / rate);
  return x;
}

// Least-squares amplitude of a known-frequency sinusoid over [from, to).
double fitted_amplitude(const std::vector<double>& y, double f, double rate, std::size_t from, std::size_t to) {
  double ss = 0, cc = 0, sc = 0, ys = 0, yc = 0;
  for (std::size_t i = from; i < to; ++i) {
    const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(i) / rate;
    const double s = std::sin(ph), c = std::cos(ph);
    ss += s * s;
    cc += c * c;
    sc += s * c;
    ys += y[i] * s;
    yc += y[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (ys * cc - yc * sc) / det, b = (yc * ss - ys * sc) / det;
  return std::hypot(a, b);
}

}  // namespace

TEST(Butterworth, DesignMatchesAnalyticMagnitude) {
  for (int order : {2, 4, 6}) {
    const auto d = design_butterworth_bandpass(0.5, 20.0, 200.0, order);
    EXPECT_EQ(d.sections.size(), static_cast<std::size_t>(order));
    for (double f : {0.1, 0.5, 1.0, 3.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 80.0, 99.0}) {
      const double want = oracle::butterworth_bandpass_gain(f, 0.5, 20.0, 200.0, order);
      EXPECT_NEAR(std::abs(d.response(f)), want, 1e-9 * std::max(1.0, want)) << "order " << order << " f " << f;
      EXPECT_NEAR(butterworth_bandpass_magnitude(f, 0.5, 20.0, 200.0, order), want, 1e-12);
    }
  }
}

TEST(Butterworth, BandEdgesAreHalfPower) {
  const auto d = design_butterworth_bandpass(0.5, 20.0, 200.0, 4);
  EXPECT_NEAR(std::abs(d.response(0.5)), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(std::abs(d.response(20.0)), 1.0 / std::sqrt(2.0), 1e-9);
  const double center = std::atan(std::sqrt(std::tan(std::numbers::pi * 0.5 / 200.0) *
                                            std::tan(std::numbers::pi * 20.0 / 200.0))) * 200.0 / std::numbers::pi;
  EXPECT_NEAR(std::abs(d.response(center)), 1.0, 1e-12);
}

TEST(Butterworth, SosfiltMatchesDirectDifferenceEquations) {
  const auto d = design_butterworth_bandpass(0.5, 20.0, 200.0, 4);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> x(3000);
  for (auto& v : x) v = n(rng);
  auto ref = x;
  for (const auto& s : d.sections) ref = oracle::biquad_filter(ref, {s.b0, s.b1, s.b2, s.a1, s.a2});
  const auto y = sosfilt(d, x);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-9 * (1.0 + std::abs(ref[i])));
}

TEST(Butterworth, InvalidDesignsRejected) {
  EXPECT_THROW(design_butterworth_bandpass(20.0, 0.5, 200.0, 4), std::invalid_argument);
  EXPECT_THROW(design_butterworth_bandpass(0.5, 120.0, 200.0, 4), std::invalid_argument);
  EXPECT_THROW(design_butterworth_bandpass(0.0, 20.0, 200.0, 4), std::invalid_argument);
  EXPECT_THROW(design_butterworth_bandpass(0.5, 20.0, 200.0, 1), std::invalid_argument);
  EXPECT_THROW(design_butterworth_bandpass(0.5, 20.0, 200.0, 3), std::invalid_argument);
}

TEST(ZeroPhaseFilter, PassbandAndStopbandGainsMatchSquaredAnalyticResponse) {
  const std::size_t n = 12000, edge = 2000;
  for (double f : {1.0, 5.0, 10.0, 15.0, 25.0, 35.0, 50.0}) {
    const auto y = bandpass_filter(sine_d(n, f, 200.0), 200.0, 0.5, 20.0, 4);
    const double want = std::pow(oracle::butterworth_bandpass_gain(f, 0.5, 20.0, 200.0, 4), 2);
    EXPECT_NEAR(fitted_amplitude(y, f, 200.0, edge, n - edge), want, 1e-4) << f;
  }
}

TEST(ZeroPhaseFilter, TenHertzUnitGainFiftyHertzRejected) {
  const std::size_t n = 10000, edge = 400;
  const auto y10 = bandpass_filter(sine_d(n, 10.0, 200.0), 200.0, 0.5, 20.0, 4);
  const auto y50 = bandpass_filter(sine_d(n, 50.0, 200.0), 200.0, 0.5, 20.0, 4);
  double peak10 = 0, peak50 = 0;
  for (std::size_t i = edge; i < n - edge; ++i) {
    peak10 = std::max(peak10, std::abs(y10[i]));
    peak50 = std::max(peak50, std::abs(y50[i]));
  }
  EXPECT_NEAR(peak10, 1.0, 0.01);
  EXPECT_LT(peak50, 0.05);
}

TEST(ZeroPhaseFilter, NoPhaseShiftForInBandSine) {
  const std::size_t n = 4000;
  const auto x = sine_d(n, 5.0, 200.0);
  const auto y = bandpass_filter(x, 200.0, 0.5, 20.0, 4);
  int best = 0;
  double best_v = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double acc = 0;
    for (std::size_t i = 400; i < n - 400; ++i) acc += x[i] * y[static_cast<std::size_t>(static_cast<long>(i) + lag)];
    if (acc > best_v) best_v = acc, best = lag;
  }
  EXPECT_EQ(best, 0);
}

TEST(ZeroPhaseFilter, ZeroInZeroOutAndLengthPreserved) {
  const std::vector<double> z(777, 0.0);
  const auto y = bandpass_filter(z, 200.0, 0.5, 20.0, 4);
  ASSERT_EQ(y.size(), z.size());
  for (double v : y) ASSERT_EQ(v, 0.0);
}

TEST(ZeroPhaseFilter, Linear) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<double> x(2000), y(2000), mix(2000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = n(rng);
    y[i] = n(rng);
    mix[i] = 2.5 * x[i] - 0.75 * y[i];
  }
  const auto fx = bandpass_filter(x, 200.0, 0.5, 20.0, 4);
  const auto fy = bandpass_filter(y, 200.0, 0.5, 20.0, 4);
  const auto fm = bandpass_filter(mix, 200.0, 0.5, 20.0, 4);
  double scale = 0;
  for (double v : fm) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(fm[i], 2.5 * fx[i] - 0.75 * fy[i], 1e-9 * scale);
}

TEST(ZeroPhaseFilter, FloatOverloadMatchesDouble) {
  std::mt19937_64 rng(5);
  const auto xf = fixture::random_signal(1000, rng, 40.0);
  const std::vector<double> xd(xf.begin(), xf.end());
  const auto yf = bandpass_filter(std::span<const float>(xf), 200.0, 0.5, 20.0, 4);
  const auto yd = bandpass_filter(xd, 200.0, 0.5, 20.0, 4);
  for (std::size_t i = 0; i < xf.size(); ++i) ASSERT_EQ(yf[i], static_cast<float>(yd[i]));
}
