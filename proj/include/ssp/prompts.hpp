// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "ssp/retriever.hpp"

namespace ssp {

// Built-in templates: "proposer", "solver", "rag_solver", "judge".
std::string_view builtin_prompt(std::string_view name);

struct PromptSet {
  std::string proposer;
  std::string solver;
  std::string rag_solver;
  std::string judge;
  std::array<std::string, 3> examples;
  // Value substituted for {n} in the proposer template.
  std::size_t proposer_searches = 2;

  static PromptSet defaults();
};

std::string render_proposer_prompt(const PromptSet& ps, const std::string& answer);
std::string render_solver_prompt(const PromptSet& ps, const std::string& question);
std::string render_rag_prompt(const PromptSet& ps, const std::string& question,
                              const std::vector<Document>& materials);

// One line per document: Doc i (Title: "title") text
std::string format_documents(const std::vector<Document>& docs);

}  // namespace ssp
