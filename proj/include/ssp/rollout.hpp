// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssp/backends.hpp"
#include "ssp/dialogue.hpp"
#include "ssp/retriever.hpp"

namespace ssp {

struct RolloutLimits {
  std::size_t max_search_calls = 10;
  std::size_t max_new_tokens_per_turn = 512;
  // Character stand-in for the response token budget.
  std::size_t max_total_model_chars = 32768;
  std::size_t top_k = kDefaultTopK;
  double temperature = 1.0;

  void validate() const;
};

// Stop sequences sent on every generate call.
const std::vector<std::string>& rollout_stop_sequences();

// Runs one episode from an already rendered prompt. The retriever may be null
// for the RAG solver role. Backend failures propagate as BackendError.
Trajectory run_episode(Role role, const std::string& prompt, Backend& backend,
                       const Bm25Index* index, const RolloutLimits& limits, std::uint64_t seed);

struct EpisodeSlot {
  std::optional<Trajectory> trajectory;
  std::optional<std::string> error;  // set when the backend failed
  bool ok() const { return trajectory.has_value(); }
};

// n independent episodes; slot j uses derive_seed(seed, j). Episodes run in
// parallel unless the backend is a sequential scripted one.
std::vector<EpisodeSlot> run_group(Role role, const std::string& prompt, Backend& backend,
                                   const Bm25Index* index, const RolloutLimits& limits,
                                   std::size_t n, std::uint64_t seed);

// Runs a list of independent (prompt, seed) episodes, in parallel when safe.
std::vector<EpisodeSlot> run_many(Role role, const std::vector<std::string>& prompts,
                                  const std::vector<std::uint64_t>& seeds, Backend& backend,
                                  const Bm25Index* index, const RolloutLimits& limits);

}  // namespace ssp
