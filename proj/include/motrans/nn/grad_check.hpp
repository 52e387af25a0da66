#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "motrans/nn/model.hpp"

namespace motrans::nn {

struct GradCheckFailure {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_error = 0.0;
  std::vector<std::string> params_covered;
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty() && checked > 0; }
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-6;
  std::size_t min_scalars = 200;
  std::uint64_t seed = 0;
};

// Compares backprop against central differences on a random subset of
// scalars drawn from every parameter tensor. Error is
// |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(std::vector<NamedParam<double>>& params, const std::function<Tensor<double>()>& loss,
                           const GradCheckOptions& options = {});

// Builds a 64-bit model for `plan` and checks the mean cross-entropy on one batch.
GradCheckReport grad_check_plan(const ModelPlan& plan, const TokenBatch& src, const TokenBatch& tgt_in,
                                const std::vector<int>& targets, const GradCheckOptions& options = {});

}  // namespace motrans::nn
