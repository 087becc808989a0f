// SPDX-License-Identifier: Apache-2.0
//
// A synthetic "fact-chain" world and the symbol-level agent that acts in it.
// Each generated person has a document listing relations to other people;
// questions chain 1 to 3 relations. The toy agent's policy only chooses which
// action symbol comes next; what a symbol says (search query, answer,
// question) is a deterministic function of the conversation so far.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssp/backends.hpp"
#include "ssp/credit.hpp"
#include "ssp/dialogue.hpp"
#include "ssp/retriever.hpp"

namespace ssp::toy {

enum Symbol : int {
  kBosProposer = 0,
  kBosSolver,
  kBosRag,
  kInfo,
  kThink,
  kSearch,
  kAnswer,
  kQuestion,
  kEos,
  kVocabSize
};

inline constexpr std::string_view kEosText = "<|endoftext|>";

std::vector<std::string> vocabulary();
int bos_symbol(Role role);

struct Fact {
  std::string subject;
  std::string relation;
  std::string object;
  bool operator==(const Fact&) const = default;
};

// Extracts every "X's relation is Y." statement.
std::vector<Fact> parse_facts(std::string_view text);

struct ChainQuestion {
  std::string question;
  std::string answer;
  std::size_t hops = 0;
};

// "Who is the r1 of the r2 of E?" for relations listed outermost first.
std::string chain_question_text(const std::string& start,
                                const std::vector<std::string>& outer_first);

struct ParsedChain {
  std::string start;
  std::vector<std::string> apply_order;  // innermost relation first
};
std::optional<ParsedChain> parse_chain_question(std::string_view question);

class FactWorld {
 public:
  static FactWorld generate(std::size_t num_entities, std::uint64_t seed,
                            std::size_t relations_per_entity = 3);

  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<Document>& documents() const { return docs_; }
  std::optional<std::string> follow(const std::string& subject, const std::string& relation) const;

  // Questions whose chain resolves uniquely in the world, with hop counts
  // drawn uniformly from [min_hops, max_hops].
  std::vector<ChainQuestion> sample_questions(std::size_t count, std::uint64_t seed,
                                              std::size_t min_hops = 1,
                                              std::size_t max_hops = 3) const;

 private:
  std::vector<std::string> entities_;
  std::vector<Document> docs_;
  std::map<std::pair<std::string, std::string>, std::string> edges_;
};

inline const std::vector<std::string>& relation_names() {
  static const std::vector<std::string> kNames = {"mentor", "rival", "partner", "student",
                                                  "neighbor"};
  return kNames;
}

// Which role a rendered prompt belongs to, judged by its template preamble.
Role role_from_prompt(std::string_view prompt);

// Text the agent emits for `symbol` given the conversation so far.
std::string verbalize(int symbol, Role role, const std::vector<ChatMessage>& messages);

// Inverse of verbalize over one model turn.
std::vector<int> symbols_from_text(std::string_view model_text);

// Sequence the toy policy is trained on: the role's start symbol, each turn's
// symbols (scored), and one masked info symbol per observation.
SymbolSequence encode(const Trajectory& traj);

// Initial logits with a prior toward well-formed action sequences.
ToyPolicies format_prior();

}  // namespace ssp::toy
