// SPDX-License-Identifier: Apache-2.0
//
// Rewards, group-relative advantages, and the GRPO and REINFORCE gradients
// over the toy policy.
//
// Sign convention: every gradient returned here is the gradient of an
// objective to maximise. apply_update ascends it. GradResult::loss() is the
// negated objective for code that prefers descent.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssp/adjudicator.hpp"
#include "ssp/policy.hpp"

namespace ssp {

enum class LengthNorm { UnmaskedCount, AllTokens };

struct OptimConfig {
  double beta = 0.01;
  std::size_t group_size = 5;
  std::size_t batch_size = 256;
  LengthNorm length_norm = LengthNorm::UnmaskedCount;
  double format_fail_reward = 0.0;
};

// symbols[0] is the conditioning symbol and is never scored. mask[t] = true
// marks a model-produced position. The context for position t is the symbol
// at the latest s < t with mask[s] true, or position 0 when there is none, so
// masked (environment) symbols neither score nor condition anything.
struct SymbolSequence {
  std::vector<int> symbols;
  std::vector<bool> mask;
};

struct SequenceGroup {
  std::vector<SymbolSequence> sequences;
  std::vector<double> rewards;
};

struct GroupRewards {
  std::vector<double> rewards;
  double mean = 0.0;
};

struct GradResult {
  Table grad;
  double objective = 0.0;
  double loss() const { return -objective; }
};

// Reward 1 when the answer is present and judged correct, else 0. Missing
// answers (truncated or malformed responses) always score 0.
GroupRewards solver_rewards(const std::vector<std::optional<std::string>>& answers,
                            const std::string& truth, const std::string& question,
                            const Judge& judge);
GroupRewards make_group_rewards(std::vector<double> rewards);

double proposer_reward(const GroupRewards& group);

std::vector<double> grpo_advantages(std::span<const double> rewards);

// Context index for every position (entry 0 is unused).
std::vector<int> context_indices(const SymbolSequence& seq);

double categorical_kl(std::span<const double> log_p, std::span<const double> log_q);
// KL(pi(.|prev) || ref(.|prev)).
double row_kl(const ToyPolicy& policy, const ToyPolicy& reference, int prev);

// Objective per group i and trajectory j:
//   (A_ij / norm_ij) * sum_{t unmasked} log pi(x_t | ctx_t)
//     - beta * mean_{t unmasked} KL(pi(.|ctx_t) || ref(.|ctx_t))
// averaged over j within a group and over groups. norm is the unmasked count
// or the full scored length, per cfg.length_norm.
GradResult grpo_loss_grad(const ToyPolicy& policy, const ToyPolicy& reference,
                          std::span<const SequenceGroup> batch, const OptimConfig& cfg);
GradResult grpo_loss_grad_serial(const ToyPolicy& policy, const ToyPolicy& reference,
                                 std::span<const SequenceGroup> batch, const OptimConfig& cfg);

// (1/B) sum_i R_i sum_{t unmasked} grad log pi(x_t | ctx_t).
Table reinforce_grad(const ToyPolicy& policy, std::span<const SymbolSequence> trajectories,
                     std::span<const double> returns);
Table reinforce_grad_serial(const ToyPolicy& policy, std::span<const SymbolSequence> trajectories,
                            std::span<const double> returns);

// Sum of log pi over unmasked positions.
double sequence_log_prob(const ToyPolicy& policy, const SymbolSequence& seq);

// theta + learning_rate * gradient. Throws std::domain_error on non-finite
// gradient entries.
ToyPolicy apply_update(const ToyPolicy& policy, const Table& gradient, double learning_rate);

}  // namespace ssp
