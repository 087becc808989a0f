// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of the GRPO gradient on random small problems.
#pragma once

#include <cstdint>
#include <vector>

#include "ssp/credit.hpp"

namespace ssp {

struct GradCheckOptions {
  std::size_t configs = 50;
  std::size_t vocab = 12;
  std::size_t max_len = 8;
  std::vector<std::size_t> batch_sizes{1, 2, 4};
  std::vector<std::size_t> group_sizes{2, 3, 5};
  std::vector<double> betas{0.0, 0.01, 0.1};
  double step = 1e-5;
  // Relative error is |a - f| / max(|a|, |f|, rel_floor).
  double rel_floor = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t configs = 0;
  std::size_t entries_checked = 0;
  bool passed(double tolerance) const { return max_rel_err < tolerance; }
};

// One random problem: policy, reference, batch and optimiser settings.
struct GradProblem {
  ToyPolicy policy;
  ToyPolicy reference;
  std::vector<SequenceGroup> batch;
  OptimConfig cfg;
};

GradProblem random_grad_problem(const GradCheckOptions& opts, std::size_t index);

GradCheckReport run_gradcheck(const GradCheckOptions& opts);

}  // namespace ssp
