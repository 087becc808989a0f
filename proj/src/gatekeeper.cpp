// SPDX-License-Identifier: Apache-2.0
#include "ssp/gatekeeper.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "ssp/common.hpp"

namespace ssp {

std::string_view to_string(FilterReason r) {
  switch (r) {
    case FilterReason::Ok:
      return "Ok";
    case FilterReason::EmptyQuestion:
      return "EmptyQuestion";
    case FilterReason::NoSearchInvoked:
      return "NoSearchInvoked";
    case FilterReason::TooShort:
      return "TooShort";
    case FilterReason::ContainsAnswer:
      return "ContainsAnswer";
    case FilterReason::FormatError:
      return "FormatError";
    case FilterReason::RagRejected:
      return "RagRejected";
  }
  return "?";
}

FilterReason filter_reason_from_string(std::string_view s) {
  for (FilterReason r : {FilterReason::Ok, FilterReason::EmptyQuestion, FilterReason::NoSearchInvoked,
                         FilterReason::TooShort, FilterReason::ContainsAnswer,
                         FilterReason::FormatError, FilterReason::RagRejected}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown filter reason \"" + std::string(s) + "\"");
}

FilterVerdict rule_filter(const std::string& question, const Trajectory& proposer_traj,
                          const std::string& truth) {
  auto reject = [](FilterReason r) { return FilterVerdict{false, r}; };
  if (proposer_traj.terminal != Terminal::Completed) return reject(FilterReason::FormatError);
  if (trim(question).empty()) return reject(FilterReason::EmptyQuestion);
  if (proposer_traj.search_count() == 0) return reject(FilterReason::NoSearchInvoked);
  const std::string nq = normalize_answer(question);
  if (nq.size() < kMinQuestionChars) return reject(FilterReason::TooShort);
  const std::string nt = normalize_answer(truth);
  if (!nt.empty() && nq.find(nt) != std::string::npos) return reject(FilterReason::ContainsAnswer);
  return {true, FilterReason::Ok};
}

Materials assemble_materials(const std::vector<std::vector<Document>>& batch_observations,
                             std::size_t i, std::size_t m, std::uint64_t seed,
                             const std::vector<Document>& corpus) {
  if (i >= batch_observations.size()) throw std::out_of_range("assemble_materials: bad episode index");
  Materials out;
  out.documents = batch_observations[i];
  if (m == 0) return out;

  std::set<std::string> excluded;
  for (const auto& d : out.documents) excluded.insert(d.doc_id);

  std::vector<const Document*> pool;
  std::set<std::string> pooled;
  for (std::size_t j = 0; j < batch_observations.size(); ++j) {
    if (j == i) continue;
    for (const auto& d : batch_observations[j]) {
      if (excluded.count(d.doc_id) || !pooled.insert(d.doc_id).second) continue;
      pool.push_back(&d);
    }
  }
  std::mt19937_64 rng(derive_seed(seed, i, 0x6e6f697365));
  std::shuffle(pool.begin(), pool.end(), rng);
  if (pool.size() > m) pool.resize(m);

  if (pool.size() < m) {
    std::vector<const Document*> extra;
    for (const auto& d : corpus) {
      if (!excluded.count(d.doc_id) && !pooled.count(d.doc_id)) extra.push_back(&d);
    }
    std::shuffle(extra.begin(), extra.end(), rng);
    const std::size_t need = std::min(m - pool.size(), extra.size());
    pool.insert(pool.end(), extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(need));
  }
  for (const Document* d : pool) {
    out.documents.push_back(*d);
    out.noise_doc_ids.push_back(d->doc_id);
  }
  return out;
}

VerificationRecord rag_verify(const std::string& question, const std::string& truth,
                              const Materials& materials, Backend& solver_backend,
                              const Judge& judge, const PromptSet& prompts,
                              const VerifyOptions& opts, std::uint64_t seed) {
  if (opts.samples < 1) throw std::invalid_argument("rag_verify: samples must be >= 1");
  VerificationRecord rec;
  rec.materials = materials.documents;
  rec.noise_doc_ids = materials.noise_doc_ids;
  RolloutLimits limits = opts.limits;
  limits.temperature = 0.0;
  const std::string prompt = render_rag_prompt(prompts, question, materials.documents);
  bool all_correct = true;
  for (std::size_t s = 0; s < opts.samples; ++s) {
    Trajectory t = run_episode(Role::SolverRAG, prompt, solver_backend, nullptr, limits,
                               derive_seed(seed, s));
    auto ans = try_extract_answer(t);
    if (!ans || !judge.judge(*ans, truth, question).correct) all_correct = false;
    rec.rag_trajectories.push_back(std::move(t));
  }
  rec.judged_correct = all_correct;
  return rec;
}

nlohmann::ordered_json verification_to_json(const VerificationRecord& v) {
  nlohmann::ordered_json j;
  j["materials"] = nlohmann::ordered_json::array();
  for (const auto& d : v.materials) j["materials"].push_back(d.doc_id);
  j["noise_doc_ids"] = v.noise_doc_ids;
  j["rag_trajectories"] = nlohmann::ordered_json::array();
  for (const auto& t : v.rag_trajectories) j["rag_trajectories"].push_back(trajectory_to_json(t));
  j["judged_correct"] = v.judged_correct;
  return j;
}

}  // namespace ssp
