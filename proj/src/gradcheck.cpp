// SPDX-License-Identifier: Apache-2.0
#include "ssp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ssp/common.hpp"

namespace ssp {

GradProblem random_grad_problem(const GradCheckOptions& opts, std::size_t index) {
  if (opts.vocab < 2 || opts.max_len < 2 || opts.batch_sizes.empty() ||
      opts.group_sizes.empty() || opts.betas.empty()) {
    throw std::invalid_argument("gradcheck: degenerate options");
  }
  std::mt19937_64 rng(derive_seed(opts.seed, index));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto pick = [&](const auto& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };

  std::vector<std::string> vocab;
  for (std::size_t i = 0; i < opts.vocab; ++i) vocab.push_back("s" + std::to_string(i));
  GradProblem p;
  Table logits(opts.vocab, opts.vocab), ref(opts.vocab, opts.vocab);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits.data()[i] = normal(rng);
    ref.data()[i] = logits.data()[i] + 0.5 * normal(rng);
  }
  p.policy = ToyPolicy(vocab, logits);
  p.reference = ToyPolicy(vocab, ref);

  p.cfg.beta = pick(opts.betas);
  p.cfg.group_size = pick(opts.group_sizes);
  p.cfg.length_norm = index % 2 == 0 ? LengthNorm::UnmaskedCount : LengthNorm::AllTokens;
  const std::size_t groups = pick(opts.batch_sizes);
  p.cfg.batch_size = groups;

  std::uniform_int_distribution<int> sym(0, static_cast<int>(opts.vocab) - 1);
  std::uniform_int_distribution<std::size_t> len(2, opts.max_len);
  std::bernoulli_distribution keep(0.7), win(0.5);
  for (std::size_t g = 0; g < groups; ++g) {
    SequenceGroup grp;
    for (std::size_t j = 0; j < p.cfg.group_size; ++j) {
      SymbolSequence s;
      const std::size_t n = len(rng);
      for (std::size_t t = 0; t < n; ++t) {
        s.symbols.push_back(sym(rng));
        s.mask.push_back(t > 0 && keep(rng));
      }
      // At least one scored position per trajectory.
      s.mask[1] = true;
      grp.sequences.push_back(std::move(s));
      grp.rewards.push_back(win(rng) ? 1.0 : 0.0);
    }
    p.batch.push_back(std::move(grp));
  }
  return p;
}

GradCheckReport run_gradcheck(const GradCheckOptions& opts) {
  GradCheckReport rep;
  for (std::size_t c = 0; c < opts.configs; ++c) {
    GradProblem p = random_grad_problem(opts, c);
    const Table analytic = grpo_loss_grad(p.policy, p.reference, p.batch, p.cfg).grad;
    ToyPolicy probe = p.policy;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      double& theta = probe.mutable_logits().data()[i];
      const double orig = theta;
      theta = orig + opts.step;
      const double up = grpo_loss_grad_serial(probe, p.reference, p.batch, p.cfg).objective;
      theta = orig - opts.step;
      const double down = grpo_loss_grad_serial(probe, p.reference, p.batch, p.cfg).objective;
      theta = orig;
      const double fd = (up - down) / (2.0 * opts.step);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - fd);
      const double denom = std::max({std::abs(a), std::abs(fd), opts.rel_floor});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, abs_err / denom);
      ++rep.entries_checked;
    }
    ++rep.configs;
  }
  return rep;
}

}  // namespace ssp
