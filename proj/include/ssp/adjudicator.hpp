// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ssp {

class Backend;

enum class JudgeMethod { NormalizedEM, LLMJudge };

struct Judgment {
  bool correct = false;
  JudgeMethod method = JudgeMethod::NormalizedEM;
  std::optional<std::string> raw_judge_text;
};

class JudgeProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Lowercase, delete ASCII punctuation, collapse whitespace, then drop one
// leading article (a, an, the).
std::string normalize_answer(std::string_view s);

// Equal after normalization, or the truth's words appear in the prediction in
// order as whole words ("george smith" inside "george p smith").
bool em_match(std::string_view prediction, std::string_view truth);

class Judge {
 public:
  virtual ~Judge() = default;
  virtual Judgment judge(const std::string& prediction, const std::string& truth,
                         const std::string& question) const = 0;
};

class ExactMatchJudge : public Judge {
 public:
  Judgment judge(const std::string& prediction, const std::string& truth,
                 const std::string& question) const override;
};

// Sends the judge template to a backend at temperature 0 and accepts only
// "Correct" or "Wrong" (after trimming). Anything else is retried up to
// `retries` times and then raised as JudgeProtocolError.
class LlmJudge : public Judge {
 public:
  LlmJudge(Backend& backend, std::string prompt_template, int retries = 1);
  Judgment judge(const std::string& prediction, const std::string& truth,
                 const std::string& question) const override;

 private:
  Backend& backend_;
  std::string template_;
  int retries_;
};

}  // namespace ssp
