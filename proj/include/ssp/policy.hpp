// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ssp/common.hpp"

namespace ssp {

// First-order Markov categorical policy: logits(prev, next), softmax per row.
class ToyPolicy {
 public:
  ToyPolicy() = default;
  explicit ToyPolicy(std::vector<std::string> vocab);
  ToyPolicy(std::vector<std::string> vocab, Table logits);

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const Table& logits() const { return logits_; }
  Table& mutable_logits() { return logits_; }

  // Softmax of row `prev` at the given temperature. Temperature 0 returns the
  // one-hot argmax distribution (lowest index wins ties).
  std::vector<double> probs(int prev, double temperature = 1.0) const;
  std::vector<double> log_probs(int prev) const;
  int sample(int prev, double temperature, std::mt19937_64& rng) const;

  // Throws std::domain_error on non-finite logits.
  void validate() const;

  bool operator==(const ToyPolicy&) const = default;

 private:
  std::vector<std::string> vocab_;
  Table logits_;
};

// Plain numeric table: one row per line, space-separated decimals.
void save_policy(const ToyPolicy& policy, const std::filesystem::path& path);
ToyPolicy load_policy(const std::filesystem::path& path, std::vector<std::string> vocab);

}  // namespace ssp
