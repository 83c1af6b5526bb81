#pragma once

#include <complex>
#include <span>
#include <vector>

namespace hbac::signals {

// One second-order section, normalized so a0 == 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  std::complex<double> response(double omega) const;
};

// Digital Butterworth bandpass obtained by the lowpass-to-bandpass transform
// of an `order`-pole analog prototype and the bilinear transform. The result
// has 2*order poles realized as `order` biquads, unit gain at band center.
struct BandpassDesign {
  std::vector<Biquad> sections;
  double rate_hz = 0;
  double low_hz = 0;
  double high_hz = 0;
  int order = 0;

  // Complex single-pass response at f_hz.
  std::complex<double> response(double f_hz) const;
};

BandpassDesign design_butterworth_bandpass(double low_hz, double high_hz, double rate_hz, int order);

// Closed-form single-pass magnitude of the prewarped analog prototype:
// |H|^2 = 1 / (1 + W^(2N)) with W = (w^2 - w0^2) / (w * B).
double butterworth_bandpass_magnitude(double f_hz, double low_hz, double high_hz, double rate_hz, int order);

// Causal cascade, 64-bit state.
std::vector<double> sosfilt(const BandpassDesign& design, std::span<const double> x);

// Zero-phase forward-backward filtering with reflect padding of `pad_s`
// seconds at each end (clamped to the signal length).
std::vector<double> bandpass_filter(std::span<const double> x, double rate_hz, double low_hz, double high_hz,
                                    int order = 4, double pad_s = 2.0);
std::vector<float> bandpass_filter(std::span<const float> x, double rate_hz, double low_hz, double high_hz,
                                   int order = 4, double pad_s = 2.0);

}  // namespace hbac::signals
