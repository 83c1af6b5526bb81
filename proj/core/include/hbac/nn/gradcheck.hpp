#pragma once

#include "hbac/nn/model.hpp"
#include "hbac/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hbac::nn {

struct GradCheckOptions {
  double eps = 1e-3;
  // Entries compared per tensor; tensors at or below this size are checked fully.
  std::size_t samples_per_tensor = 16;
  std::uint64_t seed = 0;
  // Relative error denominator is max(|analytic|, |numeric|, floor).
  double denom_floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param id>[index]"
  std::size_t checked = 0;
};

// Central differences of the mean KL loss, 64-bit, train mode with dropout
// masks held fixed.
GradCheckResult grad_check(ModelGraph<double>& model, const ModelInput<double>& batch,
                           std::span<const ClassDistribution> targets, const GradCheckOptions& opts = {});

// Same for a bare network mapping `input` to [B, 6] logits; input gradients
// are checked too (reported as "input[index]").
GradCheckResult grad_check(Layer<double>& net, const Tensor<double>& input, std::span<const ClassDistribution> targets,
                           const GradCheckOptions& opts = {});

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  double tolerance = 1e-3;

  bool passed() const { return result.max_rel_error < tolerance; }
};

// One micro-network per layer kind plus micro mlp, eegnet and multimodal
// graphs.
std::vector<std::string> grad_check_case_names();

// Step size near the cube root of double epsilon.
inline constexpr double kSuiteEps = 1e-5;

// Runs the named case, or every case for "all"; unknown names throw.
std::vector<GradCheckCase> run_grad_check_suite(std::string_view which = "all", const GradCheckOptions& opts = {});

}  // namespace hbac::nn
