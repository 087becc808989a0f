// SPDX-License-Identifier: Apache-2.0
#include "ssp/rollout.hpp"

#include <stdexcept>

#include "ssp/common.hpp"
#include "ssp/prompts.hpp"

namespace ssp {

void RolloutLimits::validate() const {
  if (max_search_calls < 1 || max_new_tokens_per_turn < 1 || max_total_model_chars < 1 ||
      top_k < 1) {
    throw std::invalid_argument("rollout limits must all be >= 1");
  }
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
}

const std::vector<std::string>& rollout_stop_sequences() {
  static const std::vector<std::string> kStops = {"</search>", "</answer>", "</question>"};
  return kStops;
}

Trajectory run_episode(Role role, const std::string& prompt, Backend& backend,
                       const Bm25Index* index, const RolloutLimits& limits, std::uint64_t seed) {
  limits.validate();
  if (role != Role::SolverRAG && !index) {
    throw std::invalid_argument("run_episode: a retriever is required for search roles");
  }
  Trajectory traj;
  traj.role = role;
  traj.prompt = prompt;
  std::vector<ChatMessage> messages = {{"user", prompt}};
  std::size_t searches = 0;

  for (std::size_t turn_index = 0;; ++turn_index) {
    GenerationRequest req;
    req.messages = messages;
    req.temperature = limits.temperature;
    req.max_new_tokens = limits.max_new_tokens_per_turn;
    req.stop_sequences = rollout_stop_sequences();
    req.seed = derive_seed(seed, turn_index);
    GenerationResult gen = backend.generate(req);

    Turn turn;
    turn.model_text = gen.text;
    ParseOutcome parsed = parse_turn(gen.text, role);
    turn.segments = parsed.segments;
    if (parsed.trailing_text) ++traj.trailing_text_warnings;
    messages.push_back({"assistant", gen.text});

    if (!parsed.ok()) {
      traj.turns.push_back(std::move(turn));
      traj.terminal = Terminal::FormatError;
      traj.format_error = parsed.error;
      return traj;
    }
    const Segment* action = nullptr;
    for (const auto& s : turn.segments) {
      if (s.kind == SegmentKind::Search || s.kind == SegmentKind::Answer ||
          s.kind == SegmentKind::Question) {
        action = &s;
      }
    }
    const bool over_budget = traj.model_chars() + turn.model_text.size() > limits.max_total_model_chars;
    if (action->kind != SegmentKind::Search) {
      traj.turns.push_back(std::move(turn));
      traj.terminal = over_budget ? Terminal::Truncated : Terminal::Completed;
      return traj;
    }
    if (over_budget || searches >= limits.max_search_calls) {
      // The search past the cap is not executed; the turn stays without an
      // observation and is dropped from the scored search count.
      turn.segments.erase(turn.segments.begin() + (action - turn.segments.data()));
      traj.turns.push_back(std::move(turn));
      traj.terminal = Terminal::Truncated;
      return traj;
    }
    ++searches;
    const std::string query = trim(action->text);
    std::vector<RetrievalHit> hits;
    try {
      hits = index->retrieve(query, limits.top_k);
    } catch (const InvalidQuery&) {
      // An empty query finds nothing; the agent still gets an observation.
    }
    for (const auto& h : hits) turn.retrieved.push_back(h.document);
    turn.observation = format_documents(turn.retrieved);
    messages.push_back({"user", "<information>" + *turn.observation + "</information>"});
    traj.turns.push_back(std::move(turn));
  }
}

std::vector<EpisodeSlot> run_many(Role role, const std::vector<std::string>& prompts,
                                  const std::vector<std::uint64_t>& seeds, Backend& backend,
                                  const Bm25Index* index, const RolloutLimits& limits) {
  if (prompts.size() != seeds.size()) throw std::invalid_argument("run_many: one seed per prompt");
  std::vector<EpisodeSlot> out(prompts.size());
  auto one = [&](std::size_t j) {
    try {
      out[j].trajectory = run_episode(role, prompts[j], backend, index, limits, seeds[j]);
    } catch (const BackendError& e) {
      out[j].error = e.what();
    }
  };
  const auto* scripted = dynamic_cast<const ScriptedBackend*>(&backend);
  if (scripted && scripted->sequential()) {
    for (std::size_t j = 0; j < prompts.size(); ++j) one(j);
    return out;
  }
  // Argument errors are raised before the parallel region so they reach the
  // caller instead of terminating inside a worker.
  limits.validate();
  if (role != Role::SolverRAG && !index) {
    throw std::invalid_argument("run_episode: a retriever is required for search roles");
  }
  std::vector<std::string> other_errors(prompts.size());
  const auto n = static_cast<std::ptrdiff_t>(prompts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    try {
      one(u);
    } catch (const std::exception& e) {
      other_errors[u] = e.what();
    }
  }
  for (const auto& e : other_errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
  return out;
}

std::vector<EpisodeSlot> run_group(Role role, const std::string& prompt, Backend& backend,
                                   const Bm25Index* index, const RolloutLimits& limits,
                                   std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("run_group: n must be >= 1");
  std::vector<std::string> prompts(n, prompt);
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t j = 0; j < n; ++j) seeds[j] = derive_seed(seed, j);
  return run_many(role, prompts, seeds, backend, index, limits);
}

}  // namespace ssp
