// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "ssp/evalsuite.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace ssp;
using namespace ssp::testing;

namespace {

std::vector<std::string> script_lines(const std::string& name) {
  std::ifstream in(fixture(name));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<QaItem> synthetic_items(std::size_t n) {
  std::vector<QaItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({"What is item " + std::to_string(i) + "?", {"v" + std::to_string(i)}});
  }
  return items;
}

// Answers "v<i>" for even items only.
ScriptedBackend parity_backend() {
  return ScriptedBackend([](const GenerationRequest& req) -> std::string {
    const auto& p = req.messages.front().content;
    const auto at = p.rfind("item ");
    const auto i = std::stoul(p.substr(at + 5));
    return "<answer>" + std::string(i % 2 == 0 ? "v" + std::to_string(i) : "nope") + "</answer>";
  });
}

}  // namespace

TEST_SUITE("evalsuite") {

TEST_CASE("fixture pass@1") {
  auto items = read_qa(fixture("qa10.jsonl"));
  REQUIRE(items.size() == 10);
  auto index = Bm25Index::from_corpus_file(fixture("corpus3.jsonl"));
  ScriptedBackend backend(script_lines("qa10_solver.script"));
  ExactMatchJudge judge;
  auto rep = evaluate(items, backend, index, judge, PromptSet::defaults(), {}, 500, 7, "qa10");
  CHECK(rep.n_evaluated == 10);
  CHECK(rep.n_correct == 6);
  CHECK(rep.pass_at_1 == doctest::Approx(0.6));
  CHECK(rep.csv_row() == "qa10,10,6,0.600000");
  // Item 5 is only accepted through its second golden answer.
  CHECK(rep.items[4].correct);
}

TEST_CASE("sample cap") {
  ExactMatchJudge judge;
  auto index = Bm25Index::build(registry_corpus(5));
  auto backend = parity_backend();
  auto r300 = evaluate(synthetic_items(300), backend, index, judge, PromptSet::defaults(), {}, 500, 1);
  CHECK(r300.n_evaluated == 300);
  CHECK(r300.n_correct == 150);
  auto r600 = evaluate(synthetic_items(600), backend, index, judge, PromptSet::defaults(), {}, 500, 1);
  CHECK(r600.n_evaluated == 500);
  std::set<std::size_t> distinct;
  for (const auto& it : r600.items) distinct.insert(it.index);
  CHECK(distinct.size() == 500);
  CHECK(std::is_sorted(r600.items.begin(), r600.items.end(),
                       [](const ItemRecord& a, const ItemRecord& b) { return a.index < b.index; }));
}

TEST_CASE("sample indices are seeded prefixes") {
  auto big = sample_indices(1000, 400, 9);
  auto small = sample_indices(1000, 100, 9);
  CHECK(std::equal(small.begin(), small.end(), big.begin()));
  CHECK(sample_indices(1000, 400, 9) == big);
  CHECK(sample_indices(1000, 400, 10) != big);
  CHECK(sample_indices(7, 500, 3).size() == 7);
}

TEST_CASE("parse errors and empty input") {
  CHECK(parse_qa("").empty());
  CHECK_THROWS(parse_qa("{\"question\": \"q\"}\n"));
  CHECK_THROWS(parse_qa("not json\n"));
  ExactMatchJudge judge;
  auto index = Bm25Index::build(registry_corpus(3));
  auto backend = parity_backend();
  CHECK_THROWS(evaluate({}, backend, index, judge, PromptSet::defaults(), {}, 500, 0));
}

TEST_CASE("backend failures are recorded per item") {
  ExactMatchJudge judge;
  auto index = Bm25Index::build(registry_corpus(3));
  ScriptedBackend flaky([](const GenerationRequest& req) -> std::string {
    if (req.messages.front().content.find("item 1?") != std::string::npos) {
      throw BackendError("down");
    }
    return "<answer>v0</answer>";
  });
  auto rep = evaluate(synthetic_items(3), flaky, index, judge, PromptSet::defaults(), {}, 500, 0);
  REQUIRE(rep.items.size() == 3);
  CHECK(rep.items[0].correct);
  CHECK(rep.items[1].error.has_value());
  CHECK_FALSE(rep.items[1].correct);
  CHECK(rep.n_correct == 1);
  auto j = rep.to_json();
  CHECK(j["n_evaluated"] == 3);
}

}  // TEST_SUITE
