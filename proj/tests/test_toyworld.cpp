// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "ssp/prompts.hpp"
#include "ssp/rollout.hpp"
#include "ssp/toyworld.hpp"

using namespace ssp;
using namespace ssp::toy;

TEST_SUITE("toyworld") {

TEST_CASE("world generation is seeded and self-consistent") {
  auto a = FactWorld::generate(50, 3);
  auto b = FactWorld::generate(50, 3);
  CHECK(a.documents() == b.documents());
  CHECK(a.entities().size() == 50);
  CHECK(std::set<std::string>(a.entities().begin(), a.entities().end()).size() == 50);
  for (const auto& d : a.documents()) {
    for (const auto& f : parse_facts(d.text)) {
      CHECK(a.follow(f.subject, f.relation) == f.object);
    }
  }
}

TEST_CASE("chain questions round-trip and resolve") {
  auto w = FactWorld::generate(80, 9);
  for (const auto& q : w.sample_questions(30, 1)) {
    auto parsed = parse_chain_question(q.question);
    REQUIRE(parsed);
    CHECK(parsed->apply_order.size() == q.hops);
    std::optional<std::string> cur = parsed->start;
    for (const auto& r : parsed->apply_order) cur = w.follow(*cur, r);
    CHECK(cur == q.answer);
  }
  CHECK(chain_question_text("Ann", {"mentor", "rival"}) == "Who is the mentor of the rival of Ann?");
  CHECK_FALSE(parse_chain_question("What is this?"));
}

TEST_CASE("symbols survive verbalization") {
  std::vector<ChatMessage> msgs{{"user", render_solver_prompt(PromptSet::defaults(), "Who is the mentor of Ann?")}};
  CHECK(role_from_prompt(msgs[0].content) == Role::SolverSearch);
  for (int s : {kThink, kSearch, kAnswer}) {
    CHECK(symbols_from_text(verbalize(s, Role::SolverSearch, msgs)) == std::vector<int>{s});
  }
  CHECK(vocabulary().size() == kVocabSize);
}

TEST_CASE("toy episodes encode with masked observations") {
  auto w = FactWorld::generate(30, 2);
  auto index = Bm25Index::build(w.documents());
  ToyBackend backend(format_prior());
  RolloutLimits lim;
  const auto prompt = render_solver_prompt(PromptSet::defaults(), w.sample_questions(1, 4)[0].question);
  auto traj = run_episode(Role::SolverSearch, prompt, backend, &index, lim, 77);
  auto seq = encode(traj);
  REQUIRE(seq.symbols.size() == seq.mask.size());
  CHECK(seq.symbols[0] == kBosSolver);
  for (std::size_t i = 0; i < seq.symbols.size(); ++i) {
    if (seq.symbols[i] == kInfo) CHECK_FALSE(seq.mask[i]);
  }
  auto again = run_episode(Role::SolverSearch, prompt, backend, &index, lim, 77);
  CHECK(encode(again).symbols == seq.symbols);
}

}  // TEST_SUITE
