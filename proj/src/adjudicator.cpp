// SPDX-License-Identifier: Apache-2.0
#include "ssp/adjudicator.hpp"

#include <cctype>
#include <sstream>
#include <vector>

#include "ssp/backends.hpp"
#include "ssp/common.hpp"

namespace ssp {

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string stripped;
  for (unsigned char c : s) {
    if (std::ispunct(c)) continue;
    stripped.push_back(static_cast<char>(std::tolower(c)));
  }
  auto w = words(stripped);
  std::size_t first = 0;
  if (w.size() > 1 && (w[0] == "a" || w[0] == "an" || w[0] == "the")) first = 1;
  std::string out;
  for (std::size_t i = first; i < w.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += w[i];
  }
  return out;
}

bool em_match(std::string_view prediction, std::string_view truth) {
  const std::string p = normalize_answer(prediction);
  const std::string t = normalize_answer(truth);
  if (p == t) return true;
  if (t.empty()) return false;
  const auto pw = words(p);
  const auto tw = words(t);
  std::size_t k = 0;
  for (const auto& w : pw) {
    if (k < tw.size() && w == tw[k]) ++k;
  }
  return k == tw.size();
}

Judgment ExactMatchJudge::judge(const std::string& prediction, const std::string& truth,
                                const std::string&) const {
  return {em_match(prediction, truth), JudgeMethod::NormalizedEM, std::nullopt};
}

LlmJudge::LlmJudge(Backend& backend, std::string prompt_template, int retries)
    : backend_(backend), template_(std::move(prompt_template)), retries_(retries) {}

Judgment LlmJudge::judge(const std::string& prediction, const std::string& truth,
                         const std::string& question) const {
  GenerationRequest req;
  req.messages = {{"user", substitute(template_, {{"question", question},
                                                  {"prediction", prediction},
                                                  {"ground_truth", truth}})}};
  req.temperature = 0.0;
  req.max_new_tokens = 8;
  std::string last;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    last = trim(backend_.generate(req).text);
    if (last == "Correct") return {true, JudgeMethod::LLMJudge, last};
    if (last == "Wrong") return {false, JudgeMethod::LLMJudge, last};
  }
  throw JudgeProtocolError("judge replied \"" + last + "\"; expected Correct or Wrong");
}

}  // namespace ssp
