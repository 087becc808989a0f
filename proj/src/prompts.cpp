// SPDX-License-Identifier: Apache-2.0
#include "ssp/prompts.hpp"

#include <stdexcept>

#include "ssp/common.hpp"

namespace ssp::assets {
extern const std::string_view k_proposer_prompt;
extern const std::string_view k_solver_prompt;
extern const std::string_view k_rag_solver_prompt;
extern const std::string_view k_judge_prompt;
}  // namespace ssp::assets

namespace ssp {

std::string_view builtin_prompt(std::string_view name) {
  if (name == "proposer") return assets::k_proposer_prompt;
  if (name == "solver") return assets::k_solver_prompt;
  if (name == "rag_solver") return assets::k_rag_solver_prompt;
  if (name == "judge") return assets::k_judge_prompt;
  throw std::invalid_argument("no built-in prompt named \"" + std::string(name) + "\"");
}

PromptSet PromptSet::defaults() {
  PromptSet ps;
  ps.proposer = std::string(assets::k_proposer_prompt);
  ps.solver = std::string(assets::k_solver_prompt);
  ps.rag_solver = std::string(assets::k_rag_solver_prompt);
  ps.judge = std::string(assets::k_judge_prompt);
  ps.examples = {"Who is the mentor of Kavelo?", "Who is the rival of the partner of Temira?",
                 "Who is the student of the neighbor of the mentor of Dosari?"};
  return ps;
}

std::string render_proposer_prompt(const PromptSet& ps, const std::string& answer) {
  return substitute(ps.proposer, {{"example1", ps.examples[0]},
                                  {"example2", ps.examples[1]},
                                  {"example3", ps.examples[2]},
                                  {"answer", answer},
                                  {"n", std::to_string(ps.proposer_searches)}});
}

std::string render_solver_prompt(const PromptSet& ps, const std::string& question) {
  return substitute(ps.solver, {{"question", question}});
}

std::string render_rag_prompt(const PromptSet& ps, const std::string& question,
                              const std::vector<Document>& materials) {
  return substitute(ps.rag_solver,
                    {{"materials", format_documents(materials)}, {"question", question}});
}

std::string format_documents(const std::vector<Document>& docs) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) out += "\n";
    out += "Doc " + std::to_string(i + 1) + " (Title: \"" + docs[i].title + "\") " + docs[i].text;
  }
  return out;
}

}  // namespace ssp
