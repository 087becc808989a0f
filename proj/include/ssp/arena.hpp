// SPDX-License-Identifier: Apache-2.0
//
// One training step: sample answers, propose questions, filter and verify
// them, fill the batch, solve each problem n times, assign rewards, and
// update the toy policies (or write training records for an external
// trainer when the backends are not toy ones).
#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssp/adjudicator.hpp"
#include "ssp/backends.hpp"
#include "ssp/credit.hpp"
#include "ssp/gatekeeper.hpp"
#include "ssp/prompts.hpp"
#include "ssp/retriever.hpp"
#include "ssp/rollout.hpp"

namespace ssp {

enum class BatchStrategy { DummyPadding, DynamicResampling, FullReuse, PeriodicReset };

std::string_view to_string(BatchStrategy s);
BatchStrategy batch_strategy_from_string(std::string_view s);

inline constexpr std::string_view kDummyQuestion = "State the color named in this question: blue.";
inline constexpr std::string_view kDummyTruth = "blue";

struct ArenaConfig {
  std::size_t batch_size = 8;
  std::size_t group_size = 5;
  BatchStrategy strategy = BatchStrategy::PeriodicReset;
  std::size_t reset_period = 10;
  std::optional<std::size_t> buffer_capacity;
  std::size_t noise_docs = 4;
  std::size_t rag_samples = 1;
  std::size_t resample_rounds = 5;  // total proposer rounds per step
  RolloutLimits proposer_limits;
  RolloutLimits solver_limits;
  OptimConfig optim;
  double solver_learning_rate = 1e-2;
  double proposer_learning_rate = 1e-2;
  // Proposer updates are skipped while step < proposer_warmup_steps.
  long proposer_warmup_steps = -1;
  std::size_t steps = 1;
  std::size_t checkpoint_every = 0;
  std::size_t max_consecutive_starved = 3;
  std::uint64_t seed = 0;
  std::filesystem::path training_records_path;  // used with non-toy backends
};

struct BufferEntry {
  std::string truth;
  std::string question;
  std::vector<Document> materials;
  std::size_t inserted_step = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::optional<std::size_t> capacity = std::nullopt) : capacity_(capacity) {}
  void push(BufferEntry e);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<BufferEntry>& entries() const { return entries_; }
  const BufferEntry& draw(std::mt19937_64& rng) const;

 private:
  std::optional<std::size_t> capacity_;
  std::deque<BufferEntry> entries_;
};

enum class SlotSource { Fresh, Buffer, Dummy };

struct ProblemSlot {
  std::string truth;
  std::string question;
  std::vector<Document> materials;
  SlotSource source = SlotSource::Dummy;
  std::size_t proposal_index = 0;  // valid for Fresh slots
};

ProblemSlot dummy_slot();

struct FillResult {
  std::vector<ProblemSlot> slots;
  std::size_t buffer_size_before = 0;
  std::size_t buffer_draws = 0;
  std::size_t dummies = 0;
  bool fell_back_to_dummy = false;
};

// Fills `valid` up to B slots. Buffer strategies clear first when
// step_index % reset_period == 0 (PeriodicReset only), draw uniformly with
// replacement for the shortfall, then push this step's valid entries.
// An empty buffer falls back to dummy padding. DynamicResampling expects the
// caller to have already re-proposed; any remaining shortfall is dummies.
FillResult fill_batch(const std::vector<ProblemSlot>& valid, std::size_t B, BatchStrategy strategy,
                      ReplayBuffer& buffer, std::size_t reset_period, std::size_t step_index,
                      std::uint64_t seed);

struct ProposalRecord {
  std::string truth;
  std::optional<Trajectory> proposer_traj;
  std::optional<std::string> backend_error;
  std::string question;
  FilterVerdict verdict;
  std::optional<VerificationRecord> verification;
  double proposer_return = 0.0;
};

struct EpisodeRecord {
  std::string truth;
  Trajectory proposer_traj;
  std::string question;
  VerificationRecord verification;
  std::vector<Trajectory> solver_group;
  GroupRewards group_rewards;
  double proposer_reward = 0.0;
};

struct SlotOutcome {
  ProblemSlot slot;
  std::vector<EpisodeSlot> solver_group;
  GroupRewards group_rewards;
};

struct StepMetrics {
  std::size_t step = 0;
  double valid_question_rate = 0.0;
  double mean_solver_reward = 0.0;
  double mean_proposer_reward = 0.0;
  double mean_search_calls = 0.0;
  double mean_response_chars = 0.0;
  std::size_t buffer_size = 0;
  // Not part of the CSV.
  std::size_t proposed = 0;
  std::size_t valid = 0;
  std::size_t proposer_rounds = 0;
  std::size_t buffer_size_before_fill = 0;
  std::size_t buffer_draws = 0;
  std::size_t dummy_slots = 0;
  bool fell_back_to_dummy = false;
  std::size_t solver_errors = 0;
};

inline constexpr std::string_view kMetricsHeader =
    "step,valid_question_rate,mean_solver_reward,mean_proposer_reward,mean_search_calls,"
    "mean_response_chars,buffer_size";
std::string metrics_csv_row(const StepMetrics& m);

struct StepResult {
  StepMetrics metrics;
  std::vector<ProposalRecord> proposals;
  std::vector<EpisodeRecord> episodes;
  std::vector<SlotOutcome> batch;
};

class StepStarved : public std::runtime_error {
 public:
  StepStarved(const std::string& what, StepMetrics metrics)
      : std::runtime_error(what), metrics_(metrics) {}
  const StepMetrics& metrics() const { return metrics_; }

 private:
  StepMetrics metrics_;
};

class Arena {
 public:
  // proposer_backend and solver_backend may be the same object.
  Arena(ArenaConfig cfg, const Bm25Index& index, std::vector<std::string> answer_pool,
        Backend& proposer_backend, Backend& solver_backend, const Judge& judge,
        PromptSet prompts = PromptSet::defaults());

  // Runs the step at index step_index() and advances it.
  StepResult step();

  // Runs until cfg.steps, appending one CSV row per step to metrics_csv and
  // checkpointing into checkpoint_dir every cfg.checkpoint_every steps.
  void run(const std::filesystem::path& metrics_csv,
           const std::filesystem::path& checkpoint_dir = {});

  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

  std::size_t step_index() const { return step_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const ArenaConfig& config() const { return cfg_; }
  const std::optional<ToyPolicies>& reference() const { return reference_; }

 private:
  std::vector<ProposalRecord> propose(std::size_t count, std::size_t round);
  void verify(std::vector<ProposalRecord>& proposals, std::size_t round);
  void update(const StepResult& r);
  void write_training_records(const StepResult& r) const;

  ArenaConfig cfg_;
  const Bm25Index& index_;
  std::vector<std::string> pool_;
  Backend& proposer_backend_;
  Backend& solver_backend_;
  const Judge& judge_;
  PromptSet prompts_;
  ReplayBuffer buffer_;
  std::optional<ToyPolicies> reference_;
  std::size_t step_ = 0;
  std::size_t consecutive_starved_ = 0;
};

std::vector<std::string> read_answer_pool(const std::filesystem::path& path);

}  // namespace ssp
