// SPDX-License-Identifier: Apache-2.0
//
// Question validation: cheap rule checks first, then a RAG solver must
// recover the answer from the proposer's search results mixed with noise.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssp/adjudicator.hpp"
#include "ssp/backends.hpp"
#include "ssp/dialogue.hpp"
#include "ssp/prompts.hpp"
#include "ssp/retriever.hpp"
#include "ssp/rollout.hpp"

namespace ssp {

enum class FilterReason { Ok, EmptyQuestion, NoSearchInvoked, TooShort, ContainsAnswer, FormatError, RagRejected };

std::string_view to_string(FilterReason r);
FilterReason filter_reason_from_string(std::string_view s);

struct FilterVerdict {
  bool accepted = false;
  FilterReason reason = FilterReason::FormatError;
};

inline constexpr std::size_t kMinQuestionChars = 20;

// Checks in order: the trajectory completed, the question is non-empty, at
// least one search ran, the normalized question has at least 20 characters,
// and the normalized truth does not occur inside the normalized question.
FilterVerdict rule_filter(const std::string& question, const Trajectory& proposer_traj,
                          const std::string& truth);

struct Materials {
  std::vector<Document> documents;  // O_T(i) first, then the noise documents
  std::vector<std::string> noise_doc_ids;
};

// Appends m noise documents drawn without replacement from the other
// episodes' observations (excluding anything in O_T(i)). When those run out
// the rest comes from `corpus`, under the same exclusion.
Materials assemble_materials(const std::vector<std::vector<Document>>& batch_observations,
                             std::size_t i, std::size_t m, std::uint64_t seed,
                             const std::vector<Document>& corpus);

struct VerificationRecord {
  std::vector<Document> materials;
  std::vector<std::string> noise_doc_ids;
  std::vector<Trajectory> rag_trajectories;
  bool judged_correct = false;
};

struct VerifyOptions {
  std::size_t samples = 1;
  RolloutLimits limits;  // temperature is forced to 0
};

// Runs the RAG solver over the materials and judges each answer. The
// question is accepted only if every sample is judged correct; a malformed
// RAG response counts as incorrect.
VerificationRecord rag_verify(const std::string& question, const std::string& truth,
                              const Materials& materials, Backend& solver_backend,
                              const Judge& judge, const PromptSet& prompts,
                              const VerifyOptions& opts, std::uint64_t seed);

nlohmann::ordered_json verification_to_json(const VerificationRecord& v);

}  // namespace ssp
