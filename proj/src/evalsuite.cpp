// SPDX-License-Identifier: Apache-2.0
#include "ssp/evalsuite.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ssp/common.hpp"

namespace ssp {

std::vector<QaItem> parse_qa(std::string_view contents) {
  std::vector<QaItem> out;
  std::istringstream in{std::string(contents)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "QA line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw std::runtime_error(where + "malformed JSON");
    }
    if (!j.is_object() || !j.contains("question") || !j["question"].is_string() ||
        !j.contains("golden_answers") || !j["golden_answers"].is_array()) {
      throw std::runtime_error(where + "expected {\"question\", \"golden_answers\"}");
    }
    QaItem item;
    item.question = j["question"].get<std::string>();
    for (const auto& g : j["golden_answers"]) {
      if (!g.is_string()) throw std::runtime_error(where + "golden answers must be strings");
      item.golden_answers.push_back(g.get<std::string>());
    }
    if (trim(item.question).empty() || item.golden_answers.empty()) {
      throw std::runtime_error(where + "needs a question and at least one golden answer");
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<QaItem> read_qa(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open QA file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto items = parse_qa(ss.str());
  if (items.empty()) throw std::runtime_error("QA file " + path.string() + " has no items");
  return items;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t cap, std::uint64_t seed) {
  if (cap < 1) throw std::invalid_argument("sample cap must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x6576616c));
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(std::min(cap, n));
  return perm;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["n_evaluated"] = n_evaluated;
  j["n_correct"] = n_correct;
  j["pass_at_1"] = pass_at_1;
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& it : items) {
    nlohmann::ordered_json o;
    o["index"] = it.index;
    o["question"] = it.question;
    o["prediction"] = it.prediction ? nlohmann::ordered_json(*it.prediction) : nlohmann::ordered_json(nullptr);
    o["correct"] = it.correct;
    o["error"] = it.error ? nlohmann::ordered_json(*it.error) : nlohmann::ordered_json(nullptr);
    j["items"].push_back(std::move(o));
  }
  return j;
}

std::string EvalReport::csv_row() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), ",%zu,%zu,%.6f", n_evaluated, n_correct, pass_at_1);
  return dataset + buf;
}

namespace {

bool accepted_by_any(const Judge& judge, const std::string& prediction, const QaItem& item) {
  for (const auto& g : item.golden_answers) {
    if (judge.judge(prediction, g, item.question).correct) return true;
  }
  return false;
}

}  // namespace

EvalReport evaluate(const std::vector<QaItem>& items, Backend& backend, const Bm25Index& index,
                    const Judge& judge, const PromptSet& prompts, RolloutLimits limits,
                    std::size_t sample_cap, std::uint64_t seed, std::string dataset) {
  if (items.empty()) throw std::invalid_argument("evaluate: no QA items");
  limits.temperature = 0.0;
  auto chosen = sample_indices(items.size(), sample_cap, seed);
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::string> rendered;
  std::vector<std::uint64_t> seeds;
  for (std::size_t idx : chosen) {
    rendered.push_back(render_solver_prompt(prompts, items[idx].question));
    seeds.push_back(derive_seed(seed, idx));
  }
  auto slots = run_many(Role::SolverSearch, rendered, seeds, backend, &index, limits);

  EvalReport rep;
  rep.dataset = std::move(dataset);
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    ItemRecord rec;
    rec.index = chosen[k];
    rec.question = items[chosen[k]].question;
    if (!slots[k].ok()) {
      rec.error = slots[k].error;
    } else {
      rec.prediction = try_extract_answer(*slots[k].trajectory);
      if (rec.prediction) {
        try {
          rec.correct = accepted_by_any(judge, *rec.prediction, items[chosen[k]]);
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
      }
    }
    rep.n_correct += rec.correct ? 1 : 0;
    rep.items.push_back(std::move(rec));
  }
  rep.n_evaluated = rep.items.size();
  rep.pass_at_1 = static_cast<double>(rep.n_correct) / static_cast<double>(rep.n_evaluated);
  return rep;
}

double estimate_pass_at_1(const std::vector<QaItem>& items, Backend& backend,
                          const Bm25Index& index, const Judge& judge, const PromptSet& prompts,
                          const RolloutLimits& limits, std::size_t samples, std::uint64_t seed) {
  if (items.empty() || samples < 1) throw std::invalid_argument("estimate_pass_at_1: nothing to do");
  std::vector<std::string> rendered;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string p = render_solver_prompt(prompts, items[i].question);
    for (std::size_t s = 0; s < samples; ++s) {
      rendered.push_back(p);
      seeds.push_back(derive_seed(seed, i, s));
    }
  }
  auto slots = run_many(Role::SolverSearch, rendered, seeds, backend, &index, limits);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (!slots[k].ok()) continue;
    auto ans = try_extract_answer(*slots[k].trajectory);
    if (ans && accepted_by_any(judge, *ans, items[k / samples])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(slots.size());
}

}  // namespace ssp
