#pragma once

#include "hbac/nn/tensor.hpp"
#include "hbac/types.hpp"

#include <span>
#include <vector>

namespace hbac::nn {

// Predicted probabilities are floored here before taking logs.
inline constexpr double kProbFloor = 1e-15;

// Row-wise softmax of [B, 6] logits with max subtraction, in double.
template <typename T>
std::vector<ClassDistribution> softmax(const Tensor<T>& logits);
ClassDistribution softmax_row(std::span<const double> logits);

// sum_i P(i) log(P(i) / Q(i)); terms with P(i) = 0 contribute nothing.
double kl_divergence(const ClassDistribution& p, const ClassDistribution& q);

template <typename T>
struct LossOutput {
  double loss = 0.0;
  Tensor<T> grad;  // dL/dlogits, [B, 6]
  std::vector<ClassDistribution> predictions;
};

// Weighted mean of per-row KL(target || softmax(logits)), normalized by the
// weight sum. Empty weights means all ones.
template <typename T>
LossOutput<T> kl_loss(const Tensor<T>& logits, std::span<const ClassDistribution> targets,
                      std::span<const double> weights = {});

}  // namespace hbac::nn
