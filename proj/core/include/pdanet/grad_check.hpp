#pragma once

#include <string>
#include <vector>

#include "pdanet/config.hpp"
#include "pdanet/losses.hpp"
#include "pdanet/model.hpp"

namespace pdanet {

struct ParameterGradError {
  std::string name;
  double relative_error = 0.0;        // against piece-frozen central differences
  double plain_relative_error = 0.0;  // against unconstrained central differences
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  /// Same comparison with unconstrained differences; inflated wherever a
  /// probe crosses a rectifier or max kink.
  double plain_max_relative_error = 0.0;
  std::size_t probes = 0;
  std::size_t kink_probes = 0;  // probes whose +eps or -eps pass changed a discrete choice
  std::vector<ParameterGradError> per_parameter;  // worst over labels, one per tensor
};

/// Relative error of one tensor: max|a - n| / max(max|a|, max|n|, floor).
double relative_gradient_error(const Tensor<double>& analytic, const Tensor<double>& numeric,
                               double floor = 1e-8);

/// Compares the analytic gradient of total_loss with central differences for
/// every element of every parameter. The perturbed passes replay the discrete
/// choices of the unperturbed pass (Tape::replay_decisions), so the
/// difference quotient is taken on the same smooth piece the analytic
/// gradient belongs to. Parameters are restored bit-exactly.
GradCheckResult grad_check_model(PdanetModel<double>& model, const Tensor<double>& image,
                                 const DensityTargets& targets, double eps = 1e-4);

/// Builds the 64-bit model from `config`, draws small random biases, and
/// checks it on a seeded random input once per teacher label. Requires
/// channel_multiplier <= 1/32 and eps > 0.
GradCheckResult grad_check(const PdanetConfig& config, double eps = 1e-4, int input_size = 64);

}  // namespace pdanet
