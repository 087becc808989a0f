// SPDX-License-Identifier: Apache-2.0
#include "ssp/credit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ssp {

ToyPolicy::ToyPolicy(std::vector<std::string> vocab)
    : vocab_(std::move(vocab)), logits_(vocab_.size(), vocab_.size(), 0.0) {}

ToyPolicy::ToyPolicy(std::vector<std::string> vocab, Table logits)
    : vocab_(std::move(vocab)), logits_(std::move(logits)) {
  if (logits_.rows() != vocab_.size() || logits_.cols() != vocab_.size()) {
    throw std::invalid_argument("ToyPolicy: logits must be V x V");
  }
}

std::vector<double> ToyPolicy::log_probs(int prev) const {
  const std::size_t v = vocab_.size();
  const auto r = static_cast<std::size_t>(prev);
  if (prev < 0 || r >= v) throw std::out_of_range("ToyPolicy: symbol outside vocabulary");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < v; ++k) mx = std::max(mx, logits_(r, k));
  double z = 0.0;
  for (std::size_t k = 0; k < v; ++k) z += std::exp(logits_(r, k) - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t k = 0; k < v; ++k) out[k] = logits_(r, k) - lz;
  return out;
}

std::vector<double> ToyPolicy::probs(int prev, double temperature) const {
  const std::size_t v = vocab_.size();
  const auto r = static_cast<std::size_t>(prev);
  if (prev < 0 || r >= v) throw std::out_of_range("ToyPolicy: symbol outside vocabulary");
  std::vector<double> out(v, 0.0);
  if (temperature <= 0.0) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v; ++k) {
      if (logits_(r, k) > logits_(r, best)) best = k;
    }
    out[best] = 1.0;
    return out;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < v; ++k) mx = std::max(mx, logits_(r, k) / temperature);
  double z = 0.0;
  for (std::size_t k = 0; k < v; ++k) {
    out[k] = std::exp(logits_(r, k) / temperature - mx);
    z += out[k];
  }
  for (double& p : out) p /= z;
  return out;
}

int ToyPolicy::sample(int prev, double temperature, std::mt19937_64& rng) const {
  const auto p = probs(prev, temperature);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  // Rounding left u above the running sum; take the last symbol with mass.
  for (std::size_t k = p.size(); k-- > 0;) {
    if (p[k] > 0.0) return static_cast<int>(k);
  }
  return 0;
}

void ToyPolicy::validate() const {
  for (double x : logits_.data()) {
    if (!std::isfinite(x)) throw std::domain_error("ToyPolicy: non-finite logit");
  }
}

void save_policy(const ToyPolicy& policy, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy file " + path.string());
  const Table& t = policy.logits();
  char buf[32];
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", t(r, c));
      if (c > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

ToyPolicy load_policy(const std::filesystem::path& path, std::vector<std::string> vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy file " + path.string());
  const std::size_t v = vocab.size();
  Table t(v, v);
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (r >= v) throw std::runtime_error(path.string() + ": too many rows");
    std::istringstream ls(line);
    std::size_t c = 0;
    for (std::string tok; ls >> tok; ++c) {
      if (c >= v) throw std::runtime_error(path.string() + ": too many columns in row " + std::to_string(r));
      t(r, c) = std::stod(tok);
    }
    if (c != v) throw std::runtime_error(path.string() + ": row " + std::to_string(r) + " has " + std::to_string(c) + " values");
    ++r;
  }
  if (r != v) throw std::runtime_error(path.string() + ": expected " + std::to_string(v) + " rows");
  ToyPolicy p(std::move(vocab), std::move(t));
  p.validate();
  return p;
}

GroupRewards make_group_rewards(std::vector<double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("group rewards need n >= 1");
  GroupRewards g;
  double s = 0.0;
  for (double r : rewards) s += r;
  g.mean = s / static_cast<double>(rewards.size());
  g.rewards = std::move(rewards);
  return g;
}

GroupRewards solver_rewards(const std::vector<std::optional<std::string>>& answers,
                            const std::string& truth, const std::string& question,
                            const Judge& judge) {
  std::vector<double> r;
  r.reserve(answers.size());
  for (const auto& a : answers) {
    r.push_back(a && judge.judge(*a, truth, question).correct ? 1.0 : 0.0);
  }
  return make_group_rewards(std::move(r));
}

double proposer_reward(const GroupRewards& group) { return 1.0 - group.mean; }

std::vector<double> grpo_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("grpo_advantages: empty group");
  double s = 0.0;
  for (double r : rewards) s += r;
  const double mean = s / static_cast<double>(rewards.size());
  std::vector<double> a(rewards.begin(), rewards.end());
  for (double& x : a) x -= mean;
  return a;
}

std::vector<int> context_indices(const SymbolSequence& seq) {
  if (seq.symbols.size() != seq.mask.size()) {
    throw std::invalid_argument("SymbolSequence: symbols and mask differ in length");
  }
  std::vector<int> ctx(seq.symbols.size(), 0);
  int last = seq.symbols.empty() ? 0 : seq.symbols[0];
  for (std::size_t t = 1; t < seq.symbols.size(); ++t) {
    ctx[t] = last;
    if (seq.mask[t]) last = seq.symbols[t];
  }
  return ctx;
}

double categorical_kl(std::span<const double> log_p, std::span<const double> log_q) {
  double kl = 0.0;
  for (std::size_t k = 0; k < log_p.size(); ++k) {
    kl += std::exp(log_p[k]) * (log_p[k] - log_q[k]);
  }
  return kl;
}

double row_kl(const ToyPolicy& policy, const ToyPolicy& reference, int prev) {
  return categorical_kl(policy.log_probs(prev), reference.log_probs(prev));
}

double sequence_log_prob(const ToyPolicy& policy, const SymbolSequence& seq) {
  const auto ctx = context_indices(seq);
  double lp = 0.0;
  for (std::size_t t = 1; t < seq.symbols.size(); ++t) {
    if (!seq.mask[t]) continue;
    lp += policy.log_probs(ctx[t]).at(static_cast<std::size_t>(seq.symbols[t]));
  }
  return lp;
}

ToyPolicy apply_update(const ToyPolicy& policy, const Table& gradient, double learning_rate) {
  const Table& th = policy.logits();
  if (gradient.rows() != th.rows() || gradient.cols() != th.cols()) {
    throw std::invalid_argument("apply_update: gradient shape mismatch");
  }
  for (double g : gradient.data()) {
    if (!std::isfinite(g)) throw std::domain_error("apply_update: non-finite gradient entry");
  }
  Table next = th;
  for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] += learning_rate * gradient.data()[i];
  return ToyPolicy(policy.vocab(), std::move(next));
}

}  // namespace ssp
