#include "hbac/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hbac::nn {

ClassDistribution softmax_row(std::span<const double> logits) {
  if (logits.size() != kNumClasses) throw std::invalid_argument("softmax expects 6 logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  ClassDistribution d;
  double s = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    d.p[i] = std::exp(logits[i] - m);
    s += d.p[i];
  }
  for (auto& v : d.p) v /= s;
  return d;
}

template <typename T>
std::vector<ClassDistribution> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2 || logits.dim(1) != kNumClasses)
    throw std::invalid_argument("softmax expects [B,6] logits, got " + shape_string(logits.shape()));
  std::vector<ClassDistribution> out;
  out.reserve(logits.dim(0));
  std::array<double, kNumClasses> row{};
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    for (std::size_t i = 0; i < kNumClasses; ++i) row[i] = logits[b * kNumClasses + i];
    out.push_back(softmax_row(row));
  }
  return out;
}

double kl_divergence(const ClassDistribution& p, const ClassDistribution& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (p.p[i] <= 0.0) continue;
    s += p.p[i] * (std::log(p.p[i]) - std::log(std::max(q.p[i], kProbFloor)));
  }
  return s;
}

template <typename T>
LossOutput<T> kl_loss(const Tensor<T>& logits, std::span<const ClassDistribution> targets,
                      std::span<const double> weights) {
  LossOutput<T> out;
  out.predictions = softmax(logits);
  const std::size_t B = out.predictions.size();
  if (targets.size() != B)
    throw std::invalid_argument("kl_loss: " + std::to_string(targets.size()) + " targets for " + std::to_string(B) +
                                " rows");
  if (!weights.empty() && weights.size() != B)
    throw std::invalid_argument("kl_loss: " + std::to_string(weights.size()) + " weights for " + std::to_string(B) +
                                " rows");
  double wsum = 0.0, acc = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double w = weights.empty() ? 1.0 : weights[b];
    if (!(w >= 0.0)) throw std::invalid_argument("kl_loss: negative or NaN weight at row " + std::to_string(b));
    acc += w * kl_divergence(targets[b], out.predictions[b]);
    wsum += w;
  }
  if (!(wsum > 0.0)) throw std::invalid_argument("kl_loss: weights sum to zero");
  out.loss = acc / wsum;
  out.grad = Tensor<T>({B, kNumClasses});
  for (std::size_t b = 0; b < B; ++b) {
    const double w = weights.empty() ? 1.0 : weights[b];
    for (std::size_t i = 0; i < kNumClasses; ++i)
      out.grad[b * kNumClasses + i] = static_cast<T>(w * (out.predictions[b].p[i] - targets[b].p[i]) / wsum);
  }
  return out;
}

template std::vector<ClassDistribution> softmax(const Tensor<float>&);
template std::vector<ClassDistribution> softmax(const Tensor<double>&);
template LossOutput<float> kl_loss(const Tensor<float>&, std::span<const ClassDistribution>, std::span<const double>);
template LossOutput<double> kl_loss(const Tensor<double>&, std::span<const ClassDistribution>,
                                    std::span<const double>);

}  // namespace hbac::nn
