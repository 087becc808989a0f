// SPDX-License-Identifier: Apache-2.0
//
// GRPO and REINFORCE gradient kernels. Each group (or trajectory) writes its
// own partial table; partials are summed in index order afterwards, so the
// OpenMP and serial paths produce bit-identical results.
#include <cmath>
#include <stdexcept>

#include "ssp/credit.hpp"

namespace ssp {

namespace {

struct RowCache {
  std::vector<std::vector<double>> lp;  // log pi(.|row)
  std::vector<std::vector<double>> lq;  // log ref(.|row)
  std::vector<double> kl;               // KL per row
};

RowCache cache_rows(const ToyPolicy& policy, const ToyPolicy* reference) {
  const std::size_t v = policy.vocab_size();
  RowCache c;
  c.lp.resize(v);
  for (std::size_t r = 0; r < v; ++r) c.lp[r] = policy.log_probs(static_cast<int>(r));
  if (reference) {
    c.lq.resize(v);
    c.kl.resize(v);
    for (std::size_t r = 0; r < v; ++r) {
      c.lq[r] = reference->log_probs(static_cast<int>(r));
      c.kl[r] = categorical_kl(c.lp[r], c.lq[r]);
    }
  }
  return c;
}

void check_sequence(const SymbolSequence& seq, std::size_t v) {
  if (seq.symbols.size() != seq.mask.size()) {
    throw std::invalid_argument("SymbolSequence: symbols and mask differ in length");
  }
  for (int s : seq.symbols) {
    if (s < 0 || static_cast<std::size_t>(s) >= v) {
      throw std::out_of_range("symbol " + std::to_string(s) + " is outside the vocabulary");
    }
  }
}

void check_inputs(const ToyPolicy& policy, const ToyPolicy* reference,
                  std::span<const SequenceGroup> batch) {
  const std::size_t v = policy.vocab_size();
  if (reference && reference->vocab() != policy.vocab()) {
    throw std::invalid_argument("policy and reference vocabularies differ");
  }
  for (const auto& g : batch) {
    if (g.sequences.empty() || g.sequences.size() != g.rewards.size()) {
      throw std::invalid_argument("each group needs n >= 1 sequences and one reward per sequence");
    }
    for (const auto& s : g.sequences) check_sequence(s, v);
  }
}

// Adds one group's share of the objective gradient into `g` and returns its
// share of the objective.
double grpo_group(const RowCache& rc, const SequenceGroup& group, const OptimConfig& cfg,
                  double batch_scale, Table& g) {
  const std::size_t v = rc.lp.size();
  const auto adv = grpo_advantages(group.rewards);
  const double scale = batch_scale / static_cast<double>(group.sequences.size());
  double objective = 0.0;
  for (std::size_t j = 0; j < group.sequences.size(); ++j) {
    const SymbolSequence& seq = group.sequences[j];
    const auto ctx = context_indices(seq);
    std::size_t unmasked = 0;
    for (std::size_t t = 1; t < seq.mask.size(); ++t) unmasked += seq.mask[t] ? 1 : 0;
    const std::size_t scored = seq.symbols.empty() ? 0 : seq.symbols.size() - 1;
    const std::size_t norm = cfg.length_norm == LengthNorm::UnmaskedCount ? unmasked : scored;
    const double w = norm > 0 ? adv[j] / static_cast<double>(norm) : 0.0;
    const double kc = unmasked > 0 ? cfg.beta / static_cast<double>(unmasked) : 0.0;

    double logp = 0.0, kl = 0.0;
    for (std::size_t t = 1; t < seq.symbols.size(); ++t) {
      if (!seq.mask[t]) continue;
      const auto c = static_cast<std::size_t>(ctx[t]);
      const auto x = static_cast<std::size_t>(seq.symbols[t]);
      const auto& lp = rc.lp[c];
      const auto& lq = rc.lq[c];
      logp += lp[x];
      kl += rc.kl[c];
      for (std::size_t k = 0; k < v; ++k) {
        const double p = std::exp(lp[k]);
        const double dlog = (k == x ? 1.0 : 0.0) - p;
        const double dkl = p * (lp[k] - lq[k] - rc.kl[c]);
        g(c, k) += scale * (w * dlog - kc * dkl);
      }
    }
    objective += scale * (w * logp - kc * kl);
  }
  return objective;
}

void reinforce_one(const RowCache& rc, const SymbolSequence& seq, double weight, Table& g) {
  const std::size_t v = rc.lp.size();
  const auto ctx = context_indices(seq);
  for (std::size_t t = 1; t < seq.symbols.size(); ++t) {
    if (!seq.mask[t]) continue;
    const auto c = static_cast<std::size_t>(ctx[t]);
    const auto x = static_cast<std::size_t>(seq.symbols[t]);
    for (std::size_t k = 0; k < v; ++k) {
      g(c, k) += weight * ((k == x ? 1.0 : 0.0) - std::exp(rc.lp[c][k]));
    }
  }
}

GradResult grpo_impl(const ToyPolicy& policy, const ToyPolicy& reference,
                     std::span<const SequenceGroup> batch, const OptimConfig& cfg, bool parallel) {
  check_inputs(policy, &reference, batch);
  const std::size_t v = policy.vocab_size();
  GradResult out{Table(v, v), 0.0};
  if (batch.empty()) return out;
  const RowCache rc = cache_rows(policy, &reference);
  const double batch_scale = 1.0 / static_cast<double>(batch.size());
  std::vector<Table> partial(batch.size(), Table(v, v));
  std::vector<double> obj(batch.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      obj[u] = grpo_group(rc, batch[u], cfg, batch_scale, partial[u]);
    }
  } else {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      obj[i] = grpo_group(rc, batch[i], cfg, batch_scale, partial[i]);
    }
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.grad += partial[i];
    out.objective += obj[i];
  }
  return out;
}

Table reinforce_impl(const ToyPolicy& policy, std::span<const SymbolSequence> trajectories,
                     std::span<const double> returns, bool parallel) {
  if (trajectories.size() != returns.size()) {
    throw std::invalid_argument("reinforce_grad: one return per trajectory required");
  }
  const std::size_t v = policy.vocab_size();
  for (const auto& s : trajectories) check_sequence(s, v);
  Table out(v, v);
  if (trajectories.empty()) return out;
  const RowCache rc = cache_rows(policy, nullptr);
  const double inv_b = 1.0 / static_cast<double>(trajectories.size());
  std::vector<Table> partial(trajectories.size(), Table(v, v));
  const auto n = static_cast<std::ptrdiff_t>(trajectories.size());
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      reinforce_one(rc, trajectories[u], returns[u] * inv_b, partial[u]);
    }
  } else {
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      reinforce_one(rc, trajectories[i], returns[i] * inv_b, partial[i]);
    }
  }
  for (const auto& p : partial) out += p;
  return out;
}

}  // namespace

GradResult grpo_loss_grad(const ToyPolicy& policy, const ToyPolicy& reference,
                          std::span<const SequenceGroup> batch, const OptimConfig& cfg) {
  return grpo_impl(policy, reference, batch, cfg, true);
}

GradResult grpo_loss_grad_serial(const ToyPolicy& policy, const ToyPolicy& reference,
                                 std::span<const SequenceGroup> batch, const OptimConfig& cfg) {
  return grpo_impl(policy, reference, batch, cfg, false);
}

Table reinforce_grad(const ToyPolicy& policy, std::span<const SymbolSequence> trajectories,
                     std::span<const double> returns) {
  return reinforce_impl(policy, trajectories, returns, true);
}

Table reinforce_grad_serial(const ToyPolicy& policy, std::span<const SymbolSequence> trajectories,
                            std::span<const double> returns) {
  return reinforce_impl(policy, trajectories, returns, false);
}

}  // namespace ssp
