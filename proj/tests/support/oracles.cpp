#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oracle {

std::vector<double> morlet_power_direct(const std::vector<double>& x, double scale, double omega0) {
  const auto half = static_cast<long>(std::ceil(5.0 * scale));
  const double norm = 1.0 / (std::pow(std::numbers::pi, 0.25) * std::sqrt(scale));
  std::vector<std::complex<double>> psi;
  for (long m = -half; m <= half; ++m) {
    const double u = static_cast<double>(m) / scale;
    psi.emplace_back(norm * std::exp(-u * u / 2.0) * std::cos(omega0 * u),
                     norm * std::exp(-u * u / 2.0) * std::sin(omega0 * u));
  }
  const auto n = static_cast<long>(x.size());
  std::vector<double> out(x.size());
  for (long t = 0; t < n; ++t) {
    std::complex<double> acc = 0.0;
    for (long m = -half; m <= half; ++m) {
      const long i = t - m;
      if (i < 0 || i >= n) continue;
      acc += x[static_cast<std::size_t>(i)] * psi[static_cast<std::size_t>(m + half)];
    }
    out[static_cast<std::size_t>(t)] = std::norm(acc);
  }
  return out;
}

double morlet_center_hz(double scale, double omega0, double rate_hz) {
  return omega0 * rate_hz / (2.0 * std::numbers::pi * scale);
}

double butterworth_bandpass_gain(double f_hz, double low_hz, double high_hz, double rate_hz, int n) {
  const double w = std::tan(std::numbers::pi * f_hz / rate_hz);
  const double wl = std::tan(std::numbers::pi * low_hz / rate_hz);
  const double wh = std::tan(std::numbers::pi * high_hz / rate_hz);
  const double ratio = (w * w - wl * wh) / (w * (wh - wl));
  return 1.0 / std::sqrt(1.0 + std::pow(ratio * ratio, n));
}

std::vector<double> biquad_filter(const std::vector<double>& x, const std::array<double, 5>& c) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = c[0] * x[i] + c[1] * x1 + c[2] * x2 - c[3] * y1 - c[4] * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = y[i];
  }
  return y;
}

double kl_terms(const std::array<double, 6>& p, const std::array<double, 6>& q) {
  long double s = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (p[i] == 0.0) continue;
    s += static_cast<long double>(p[i]) * std::log(static_cast<long double>(p[i]) / static_cast<long double>(q[i]));
  }
  return static_cast<double>(s);
}

std::vector<double> conv2d_naive(const std::vector<double>& x, std::size_t b, std::size_t c, std::size_t h,
                                 std::size_t w, const std::vector<double>& weight, std::size_t out_c,
                                 std::size_t groups, std::size_t kh, std::size_t kw, std::size_t pad_t,
                                 std::size_t pad_b, std::size_t pad_l, std::size_t pad_r,
                                 const std::vector<double>& bias) {
  const std::size_t oh = h + pad_t + pad_b - kh + 1, ow = w + pad_l + pad_r - kw + 1;
  const std::size_t cin_g = c / groups, cout_g = out_c / groups;
  std::vector<double> y(b * out_c * oh * ow, 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t o = 0; o < out_c; ++o) {
      const std::size_t g = o / cout_g;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i + u) - static_cast<long>(pad_t);
                const long s = static_cast<long>(j + v) - static_cast<long>(pad_l);
                if (r < 0 || s < 0 || r >= static_cast<long>(h) || s >= static_cast<long>(w)) continue;
                const std::size_t ch = g * cin_g + ci;
                acc += x[((n * c + ch) * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(s)] *
                       weight[((o * cin_g + ci) * kh + u) * kw + v];
              }
          y[((n * out_c + o) * oh + i) * ow + j] = acc;
        }
    }
  return y;
}

std::vector<double> dense_naive(const std::vector<double>& x, std::size_t b, std::size_t in,
                                const std::vector<double>& weight, std::size_t out, const std::vector<double>& bias) {
  std::vector<double> y(b * out);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[n * in + i] * weight[o * in + i];
      y[n * out + o] = acc;
    }
  return y;
}

std::map<std::string, std::size_t> greedy_folds(const std::vector<std::pair<std::string, std::size_t>>& patients,
                                                std::size_t k) {
  std::vector<std::size_t> load(k, 0);
  std::map<std::string, std::size_t> out;
  for (const auto& [id, rows] : patients) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < k; ++f)
      if (load[f] < load[best]) best = f;
    load[best] += rows;
    out[id] = best;
  }
  return out;
}

std::size_t eegnet_params(std::size_t channels, std::size_t samples, std::size_t kern, std::size_t f1,
                          std::size_t d, std::size_t f2, std::size_t sep_kern, std::size_t p1, std::size_t p2,
                          std::size_t classes) {
  std::size_t n = 0;
  n += f1 * kern;                  // temporal filters, no bias
  n += 2 * f1;                     // batchnorm
  n += f1 * d * channels;          // depthwise spatial filters
  n += 2 * f1 * d;                 // batchnorm
  n += f1 * d * sep_kern;          // separable: depthwise part
  n += f1 * d * f2;                // separable: pointwise part
  n += 2 * f2;                     // batchnorm
  const std::size_t features = f2 * (samples / p1 / p2);
  n += features * classes + classes;  // dense head
  return n;
}

double mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

double population_std(const std::vector<double>& v) {
  const double m = mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(s / static_cast<long double>(v.size())));
}

}  // namespace oracle
