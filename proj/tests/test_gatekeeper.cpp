// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include <json.hpp>

#include "ssp/gatekeeper.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace ssp;
using namespace ssp::testing;

namespace {

Trajectory proposer_run(const std::vector<std::string>& turns, const Bm25Index& idx) {
  ScriptedBackend b(turns);
  return run_episode(Role::Proposer, "prompt", b, &idx, RolloutLimits{}, 1);
}

std::vector<Document> docs(std::initializer_list<const char*> ids) {
  std::vector<Document> out;
  for (const char* id : ids) out.push_back({id, std::string("T") + id, std::string("x ") + id});
  return out;
}

}  // namespace

TEST_SUITE("gatekeeper") {

TEST_CASE("filter golden table") {
  auto idx = Bm25Index::from_corpus_file(fixture("corpus3.jsonl"));
  std::ifstream in(fixture("filter_cases.jsonl"));
  std::size_t cases = 0;
  std::set<std::string> seen_codes;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    auto t = proposer_run(j["turns"].get<std::vector<std::string>>(), idx);
    const std::string q = t.terminal == Terminal::Completed ? extract_question(t) : "";
    auto v = rule_filter(q, t, j["truth"].get<std::string>());
    INFO(j["name"].get<std::string>());
    CHECK(to_string(v.reason) == j["expected"].get<std::string>());
    CHECK(v.accepted == (v.reason == FilterReason::Ok));
    CHECK(rule_filter(q, t, j["truth"].get<std::string>()).reason == v.reason);
    seen_codes.insert(std::string(to_string(v.reason)));
    ++cases;
  }
  CHECK(cases == 12);
  CHECK(seen_codes.size() == 6);
}

TEST_CASE("filter examples") {
  auto idx = Bm25Index::from_corpus_file(fixture("corpus3.jsonl"));
  auto searched = proposer_run({"<search>apple</search>", "<question></question>"}, idx);
  CHECK(rule_filter("", searched, "x").reason == FilterReason::EmptyQuestion);
  auto no_search = proposer_run({"<question>Which firm makes phones and laptops?</question>"}, idx);
  CHECK(rule_filter(extract_question(no_search), no_search, "x").reason ==
        FilterReason::NoSearchInvoked);
  CHECK(rule_filter("Tell me something about Otis Williams please", searched, "Otis Williams")
            .reason == FilterReason::ContainsAnswer);
}

TEST_CASE("materials: O_T first, then m noise documents from other episodes") {
  const std::vector<std::vector<Document>> obs = {docs({"a", "b"}), docs({"b", "c", "d"}),
                                                  docs({"e", "f", "g"})};
  auto m = assemble_materials(obs, 0, 4, 9, {});
  REQUIRE(m.documents.size() == 6);
  CHECK(m.documents[0].doc_id == "a");
  CHECK(m.documents[1].doc_id == "b");
  CHECK(m.noise_doc_ids.size() == 4);
  for (auto& id : m.noise_doc_ids) {
    CHECK(id != "a");
    CHECK(id != "b");
  }
  auto again = assemble_materials(obs, 0, 4, 9, {});
  CHECK(again.noise_doc_ids == m.noise_doc_ids);
  auto zero = assemble_materials(obs, 0, 0, 9, {});
  CHECK(zero.documents == obs[0]);
  CHECK(zero.noise_doc_ids.empty());
}

TEST_CASE("materials fall back to the corpus for tiny batches") {
  const auto corpus = registry_corpus(20);
  const std::vector<std::vector<Document>> obs = {{corpus[0], corpus[1]}};
  auto m = assemble_materials(obs, 0, 4, 3, corpus);
  CHECK(m.documents.size() == 6);
  CHECK(m.noise_doc_ids.size() == 4);
  for (auto& id : m.noise_doc_ids) {
    CHECK(id != corpus[0].doc_id);
    CHECK(id != corpus[1].doc_id);
  }
}

TEST_CASE("rag verification with scripted solvers") {
  ExactMatchJudge judge;
  Materials mats{registry_corpus(3), {}};
  const std::string code = code_in(mats.documents[1].text);
  const std::string q = "Which registered member holds registry code " + code + "?";
  ScriptedBackend rag([](const GenerationRequest& r) { return registry_rag(r); });
  auto ok = rag_verify(q, mats.documents[1].title, mats, rag, judge, PromptSet::defaults(), {}, 1);
  CHECK(ok.judged_correct);
  REQUIRE(ok.rag_trajectories.size() == 1);
  CHECK(ok.rag_trajectories[0].role == Role::SolverRAG);
  ScriptedBackend distractor({"Answer: " + mats.documents[0].title});
  auto bad = rag_verify(q, mats.documents[1].title, mats, distractor, judge, PromptSet::defaults(),
                        {}, 1);
  CHECK_FALSE(bad.judged_correct);
  ScriptedBackend malformed({"<search>x</search>"});
  CHECK_FALSE(rag_verify(q, "x", mats, malformed, judge, PromptSet::defaults(), {}, 1).judged_correct);
}

TEST_CASE("verification uses temperature zero and counts samples") {
  ExactMatchJudge judge;
  std::vector<double> temps;
  ScriptedBackend spy([&](const GenerationRequest& r) {
    temps.push_back(r.temperature);
    return std::string("Answer: yes");
  });
  VerifyOptions opts;
  opts.samples = 3;
  opts.limits.temperature = 1.0;
  auto rec = rag_verify("Is this a question of note?", "yes", {{}, {}}, spy, judge,
                        PromptSet::defaults(), opts, 4);
  CHECK(rec.judged_correct);
  CHECK(rec.rag_trajectories.size() == 3);
  CHECK(temps == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("earliest-born question is rejected once conflicting noise is present") {
  const auto corpus = read_corpus(fixture("hacking_corpus.jsonl"));
  const std::vector<Document> closed(corpus.begin(), corpus.begin() + 5);
  const std::vector<Document> other(corpus.begin() + 5, corpus.end());
  const std::string q = "Who is the earliest-born individual?";
  const std::string truth = "Ada Marlow";
  ExactMatchJudge judge;
  ScriptedBackend rag([](const GenerationRequest& r) { return earliest_born_rag(r); });

  auto closed_mats = assemble_materials({closed, other}, 0, 0, 1, corpus);
  CHECK(rag_verify(q, truth, closed_mats, rag, judge, PromptSet::defaults(), {}, 1).judged_correct);

  auto noisy = assemble_materials({closed, other}, 0, 4, 1, corpus);
  CHECK(noisy.documents.size() == 9);
  CHECK(std::find(noisy.noise_doc_ids.begin(), noisy.noise_doc_ids.end(), "bio-fenn") !=
        noisy.noise_doc_ids.end());
  auto rec = rag_verify(q, truth, noisy, rag, judge, PromptSet::defaults(), {}, 1);
  CHECK_FALSE(rec.judged_correct);
  CHECK(extract_answer(rec.rag_trajectories[0]) == "Fenn Abara");
}

TEST_CASE("filter reason names round-trip") {
  for (auto r : {FilterReason::Ok, FilterReason::EmptyQuestion, FilterReason::NoSearchInvoked,
                 FilterReason::TooShort, FilterReason::ContainsAnswer, FilterReason::FormatError,
                 FilterReason::RagRejected}) {
    CHECK(filter_reason_from_string(to_string(r)) == r);
  }
}

}  // TEST_SUITE
