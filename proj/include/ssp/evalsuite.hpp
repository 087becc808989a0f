// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssp/adjudicator.hpp"
#include "ssp/backends.hpp"
#include "ssp/prompts.hpp"
#include "ssp/retriever.hpp"
#include "ssp/rollout.hpp"

namespace ssp {

struct QaItem {
  std::string question;
  std::vector<std::string> golden_answers;
};

// JSON lines: {"question": string, "golden_answers": [string]}.
std::vector<QaItem> parse_qa(std::string_view contents);
std::vector<QaItem> read_qa(const std::filesystem::path& path);

inline constexpr std::size_t kDefaultSampleCap = 500;

// First min(cap, n) entries of a seeded permutation of 0..n-1, so a smaller
// cap always yields a prefix of a larger one.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t cap, std::uint64_t seed);

struct ItemRecord {
  std::size_t index = 0;
  std::string question;
  std::optional<std::string> prediction;
  bool correct = false;
  std::optional<std::string> error;
};

struct EvalReport {
  std::string dataset;
  std::size_t n_evaluated = 0;
  std::size_t n_correct = 0;
  double pass_at_1 = 0.0;
  std::vector<ItemRecord> items;  // ascending item index

  nlohmann::ordered_json to_json() const;
  std::string csv_row() const;
};

inline constexpr std::string_view kEvalCsvHeader = "dataset,n_evaluated,n_correct,pass_at_1";

// One search-solver episode per sampled item at temperature 0. An item is
// correct when the judge accepts any golden answer (tried in order). Backend
// and judge failures are recorded as incorrect with an error message.
EvalReport evaluate(const std::vector<QaItem>& items, Backend& backend, const Bm25Index& index,
                    const Judge& judge, const PromptSet& prompts, RolloutLimits limits,
                    std::size_t sample_cap, std::uint64_t seed, std::string dataset = "qa");

// Fraction of correct episodes over `samples` episodes per item, at the
// temperature in `limits`. Used to compare policies on a fixed question set.
double estimate_pass_at_1(const std::vector<QaItem>& items, Backend& backend,
                          const Bm25Index& index, const Judge& judge, const PromptSet& prompts,
                          const RolloutLimits& limits, std::size_t samples, std::uint64_t seed);

}  // namespace ssp
