#include "hbac/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hbac::signals {

namespace {

using cd = std::complex<double>;

void check_band(double low_hz, double high_hz, double rate_hz, int order) {
  if (!(rate_hz > 0)) throw std::invalid_argument("bandpass: rate_hz must be positive");
  if (!(low_hz > 0 && low_hz < high_hz && high_hz < rate_hz / 2))
    throw std::invalid_argument("bandpass: band " + std::to_string(low_hz) + "-" + std::to_string(high_hz) +
                                " Hz must satisfy 0 < low < high < Nyquist (" + std::to_string(rate_hz / 2) + " Hz)");
  if (order < 2) throw std::invalid_argument("bandpass: order must be >= 2");
  if (order % 2 != 0) throw std::invalid_argument("bandpass: order must be even");
}

double prewarp(double f_hz, double rate_hz) {
  return 2.0 * rate_hz * std::tan(std::numbers::pi * f_hz / rate_hz);
}

cd bilinear(cd s, double rate_hz) {
  const double k = 2.0 * rate_hz;
  return (k + s) / (k - s);
}

}  // namespace

std::complex<double> Biquad::response(double omega) const {
  const cd z1 = std::polar(1.0, -omega);
  const cd z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::complex<double> BandpassDesign::response(double f_hz) const {
  const double omega = 2.0 * std::numbers::pi * f_hz / rate_hz;
  cd h = 1.0;
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

BandpassDesign design_butterworth_bandpass(double low_hz, double high_hz, double rate_hz, int order) {
  check_band(low_hz, high_hz, rate_hz, order);
  const double w1 = prewarp(low_hz, rate_hz);
  const double w2 = prewarp(high_hz, rate_hz);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;
  const double center_omega = 2.0 * std::atan(std::sqrt(w0sq) / (2.0 * rate_hz));

  BandpassDesign design;
  design.rate_hz = rate_hz;
  design.low_hz = low_hz;
  design.high_hz = high_hz;
  design.order = order;

  // Upper-half-plane prototype poles; their conjugates give conjugate
  // bandpass poles, so each transformed pole seeds one real biquad.
  for (int k = 0; k < order / 2; ++k) {
    const double angle = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    const cd p = std::polar(1.0, angle);
    const cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
    for (const cd s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
      const cd z = bilinear(s, rate_hz);
      Biquad bq;
      bq.b0 = 1.0;
      bq.b1 = 0.0;
      bq.b2 = -1.0;  // one zero at z = 1 (DC) and one at z = -1 (Nyquist)
      bq.a1 = -2.0 * z.real();
      bq.a2 = std::norm(z);
      const double g = 1.0 / std::abs(bq.response(center_omega));
      bq.b0 *= g;
      bq.b2 *= g;
      design.sections.push_back(bq);
    }
  }
  return design;
}

double butterworth_bandpass_magnitude(double f_hz, double low_hz, double high_hz, double rate_hz, int order) {
  check_band(low_hz, high_hz, rate_hz, order);
  if (f_hz <= 0 || f_hz >= rate_hz / 2) return 0.0;
  const double w1 = prewarp(low_hz, rate_hz);
  const double w2 = prewarp(high_hz, rate_hz);
  const double w = prewarp(f_hz, rate_hz);
  const double x = (w * w - w1 * w2) / (w * (w2 - w1));
  return 1.0 / std::sqrt(1.0 + std::pow(x * x, order));
}

std::vector<double> sosfilt(const BandpassDesign& design, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : design.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> bandpass_filter(std::span<const double> x, double rate_hz, double low_hz, double high_hz,
                                    int order, double pad_s) {
  const auto design = design_butterworth_bandpass(low_hz, high_hz, rate_hz, order);
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min<std::size_t>(static_cast<std::size_t>(std::lround(pad_s * rate_hz)), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(x[n - 1 - i]);

  auto fwd = sosfilt(design, ext);
  std::reverse(fwd.begin(), fwd.end());
  auto both = sosfilt(design, fwd);
  std::reverse(both.begin(), both.end());
  return {both.begin() + static_cast<std::ptrdiff_t>(pad), both.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<float> bandpass_filter(std::span<const float> x, double rate_hz, double low_hz, double high_hz, int order,
                                   double pad_s) {
  std::vector<double> xd(x.begin(), x.end());
  auto yd = bandpass_filter(std::span<const double>(xd), rate_hz, low_hz, high_hz, order, pad_s);
  return {yd.begin(), yd.end()};
}

}  // namespace hbac::signals
