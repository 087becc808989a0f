// SPDX-License-Identifier: Apache-2.0
#include "ssp/arena.hpp"

#include <cstdio>
#include <map>
#include <fstream>

#include "ssp/common.hpp"
#include "ssp/toyworld.hpp"

namespace ssp {

namespace {

bool sequential(const Backend& b) {
  const auto* s = dynamic_cast<const ScriptedBackend*>(&b);
  return s && s->sequential();
}

nlohmann::ordered_json docs_to_json(const std::vector<Document>& docs) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : docs) {
    nlohmann::ordered_json o;
    o["id"] = d.doc_id;
    o["title"] = d.title;
    o["text"] = d.text;
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<Document> docs_from_json(const nlohmann::json& arr) {
  std::vector<Document> out;
  for (const auto& o : arr) {
    out.push_back({o.at("id").get<std::string>(), o.at("title").get<std::string>(),
                   o.at("text").get<std::string>()});
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(BatchStrategy s) {
  switch (s) {
    case BatchStrategy::DummyPadding:
      return "dummy_padding";
    case BatchStrategy::DynamicResampling:
      return "dynamic_resampling";
    case BatchStrategy::FullReuse:
      return "full_reuse";
    case BatchStrategy::PeriodicReset:
      return "periodic_reset";
  }
  return "?";
}

BatchStrategy batch_strategy_from_string(std::string_view s) {
  for (BatchStrategy b : {BatchStrategy::DummyPadding, BatchStrategy::DynamicResampling,
                          BatchStrategy::FullReuse, BatchStrategy::PeriodicReset}) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown batch strategy \"" + std::string(s) + "\"");
}

void ReplayBuffer::push(BufferEntry e) {
  entries_.push_back(std::move(e));
  if (capacity_) {
    while (entries_.size() > *capacity_) entries_.pop_front();
  }
}

const BufferEntry& ReplayBuffer::draw(std::mt19937_64& rng) const {
  if (entries_.empty()) throw std::logic_error("ReplayBuffer::draw on an empty buffer");
  std::uniform_int_distribution<std::size_t> d(0, entries_.size() - 1);
  return entries_[d(rng)];
}

ProblemSlot dummy_slot() {
  ProblemSlot s;
  s.truth = std::string(kDummyTruth);
  s.question = std::string(kDummyQuestion);
  s.source = SlotSource::Dummy;
  return s;
}

FillResult fill_batch(const std::vector<ProblemSlot>& valid, std::size_t B, BatchStrategy strategy,
                      ReplayBuffer& buffer, std::size_t reset_period, std::size_t step_index,
                      std::uint64_t seed) {
  if (B < 1) throw std::invalid_argument("fill_batch: B must be >= 1");
  if (valid.size() > B) throw std::invalid_argument("fill_batch: more valid entries than B");
  FillResult out;
  out.slots = valid;
  const bool uses_buffer =
      strategy == BatchStrategy::FullReuse || strategy == BatchStrategy::PeriodicReset;
  if (strategy == BatchStrategy::PeriodicReset) {
    if (reset_period < 1) throw std::invalid_argument("fill_batch: reset_period must be >= 1");
    if (step_index % reset_period == 0) buffer.clear();
  }
  out.buffer_size_before = buffer.size();

  if (uses_buffer && !buffer.empty()) {
    std::mt19937_64 rng(derive_seed(seed, step_index, 0x627566));
    while (out.slots.size() < B) {
      const BufferEntry& e = buffer.draw(rng);
      ProblemSlot s;
      s.truth = e.truth;
      s.question = e.question;
      s.materials = e.materials;
      s.source = SlotSource::Buffer;
      out.slots.push_back(std::move(s));
      ++out.buffer_draws;
    }
  }
  if (uses_buffer && out.slots.size() < B) out.fell_back_to_dummy = true;
  while (out.slots.size() < B) {
    out.slots.push_back(dummy_slot());
    ++out.dummies;
  }
  if (uses_buffer) {
    for (const auto& v : valid) {
      buffer.push({v.truth, v.question, v.materials, step_index});
    }
  }
  return out;
}

std::string metrics_csv_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%zu", m.step,
                m.valid_question_rate, m.mean_solver_reward, m.mean_proposer_reward,
                m.mean_search_calls, m.mean_response_chars, m.buffer_size);
  return buf;
}

Arena::Arena(ArenaConfig cfg, const Bm25Index& index, std::vector<std::string> answer_pool,
             Backend& proposer_backend, Backend& solver_backend, const Judge& judge,
             PromptSet prompts)
    : cfg_(std::move(cfg)),
      index_(index),
      pool_(std::move(answer_pool)),
      proposer_backend_(proposer_backend),
      solver_backend_(solver_backend),
      judge_(judge),
      prompts_(std::move(prompts)),
      buffer_(cfg_.buffer_capacity) {
  if (pool_.empty()) throw std::invalid_argument("arena: answer pool is empty");
  if (cfg_.batch_size < 1 || cfg_.group_size < 1) {
    throw std::invalid_argument("arena: batch_size and group_size must be >= 1");
  }
  if (cfg_.resample_rounds < 1) throw std::invalid_argument("arena: resample_rounds must be >= 1");
  cfg_.proposer_limits.validate();
  cfg_.solver_limits.validate();
  const auto* tp = dynamic_cast<const ToyBackend*>(&proposer_backend_);
  const auto* ts = dynamic_cast<const ToyBackend*>(&solver_backend_);
  if (tp || ts) {
    ToyPolicies ref = snapshot_reference(tp ? proposer_backend_ : solver_backend_);
    if (tp) ref.proposer = snapshot_reference(proposer_backend_).proposer;
    if (ts) ref.solver = snapshot_reference(solver_backend_).solver;
    reference_ = std::move(ref);
  }
}

std::vector<ProposalRecord> Arena::propose(std::size_t count, std::size_t round) {
  const std::uint64_t step_seed = derive_seed(cfg_.seed, step_);
  std::mt19937_64 rng(derive_seed(step_seed, 1, round));
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  std::vector<ProposalRecord> out(count);
  std::vector<std::string> prompts(count);
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].truth = pool_[pick(rng)];
    prompts[i] = render_proposer_prompt(prompts_, out[i].truth);
    seeds[i] = derive_seed(derive_seed(step_seed, 2, round), i);
  }
  auto slots = run_many(Role::Proposer, prompts, seeds, proposer_backend_, &index_,
                        cfg_.proposer_limits);
  for (std::size_t i = 0; i < count; ++i) {
    if (!slots[i].ok()) {
      out[i].backend_error = slots[i].error;
      continue;
    }
    out[i].proposer_traj = std::move(*slots[i].trajectory);
    const Trajectory& t = *out[i].proposer_traj;
    if (t.terminal == Terminal::Completed) out[i].question = extract_question(t);
    out[i].verdict = rule_filter(out[i].question, t, out[i].truth);
    out[i].proposer_return = cfg_.optim.format_fail_reward;
  }
  return out;
}

void Arena::verify(std::vector<ProposalRecord>& proposals, std::size_t round) {
  const std::uint64_t step_seed = derive_seed(cfg_.seed, step_);
  std::vector<std::vector<Document>> observations(proposals.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (proposals[i].proposer_traj) observations[i] = collect_observations(*proposals[i].proposer_traj);
    if (proposals[i].verdict.accepted) todo.push_back(i);
  }
  const std::uint64_t noise_seed = derive_seed(step_seed, 3, round);
  const std::uint64_t rag_seed = derive_seed(step_seed, 4, round);
  VerifyOptions opts;
  opts.samples = cfg_.rag_samples;
  opts.limits = cfg_.solver_limits;
  std::vector<std::optional<VerificationRecord>> results(todo.size());
  std::vector<std::string> errors(todo.size());
  auto one = [&](std::size_t k) {
    const std::size_t i = todo[k];
    Materials mats = assemble_materials(observations, i, cfg_.noise_docs,
                                        derive_seed(noise_seed, i), index_.documents());
    try {
      results[k] = rag_verify(proposals[i].question, proposals[i].truth, mats, solver_backend_,
                              judge_, prompts_, opts, derive_seed(rag_seed, i));
    } catch (const BackendError& e) {
      errors[k] = e.what();
    }
  };
  if (sequential(solver_backend_)) {
    for (std::size_t k = 0; k < todo.size(); ++k) one(k);
  } else {
    std::vector<std::string> fatal(todo.size());
    const auto n = static_cast<std::ptrdiff_t>(todo.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      try {
        one(static_cast<std::size_t>(k));
      } catch (const std::exception& e) {
        fatal[static_cast<std::size_t>(k)] = e.what();
      }
    }
    for (const auto& e : fatal) {
      if (!e.empty()) throw std::runtime_error(e);
    }
  }
  for (std::size_t k = 0; k < todo.size(); ++k) {
    ProposalRecord& p = proposals[todo[k]];
    if (!results[k]) {
      p.backend_error = errors[k];
      p.verdict = {false, FilterReason::RagRejected};
      continue;
    }
    p.verification = std::move(results[k]);
    if (!p.verification->judged_correct) p.verdict = {false, FilterReason::RagRejected};
  }
}

StepResult Arena::step() {
  StepResult r;
  StepMetrics& m = r.metrics;
  m.step = step_;
  const std::uint64_t step_seed = derive_seed(cfg_.seed, step_);
  const std::size_t B = cfg_.batch_size;

  std::vector<ProblemSlot> valid;
  for (std::size_t round = 0;; ++round) {
    auto props = propose(B - valid.size(), round);
    verify(props, round);
    for (auto& p : props) {
      if (p.verdict.accepted) {
        ProblemSlot s;
        s.truth = p.truth;
        s.question = p.question;
        s.materials = p.verification->materials;
        s.source = SlotSource::Fresh;
        s.proposal_index = r.proposals.size();
        valid.push_back(std::move(s));
      }
      if (!p.backend_error) ++m.proposed;
      r.proposals.push_back(std::move(p));
    }
    m.proposer_rounds = round + 1;
    if (cfg_.strategy != BatchStrategy::DynamicResampling || valid.size() >= B ||
        round + 1 >= cfg_.resample_rounds) {
      break;
    }
  }
  m.valid = valid.size();
  m.valid_question_rate =
      m.proposed == 0 ? 0.0 : static_cast<double>(m.valid) / static_cast<double>(m.proposed);

  FillResult fill = fill_batch(valid, B, cfg_.strategy, buffer_, cfg_.reset_period, step_,
                               derive_seed(step_seed, 5));
  m.buffer_size_before_fill = fill.buffer_size_before;
  m.buffer_draws = fill.buffer_draws;
  m.dummy_slots = fill.dummies;
  m.fell_back_to_dummy = fill.fell_back_to_dummy;
  m.buffer_size = buffer_.size();

  if (fill.dummies == B && cfg_.strategy != BatchStrategy::DummyPadding) {
    std::vector<double> returns;
    for (const auto& p : r.proposals) {
      if (!p.backend_error) returns.push_back(p.proposer_return);
    }
    m.mean_proposer_reward = mean_of(returns);
    std::string why = "step " + std::to_string(step_) + " starved: " + std::to_string(m.valid) +
                      " valid of " + std::to_string(m.proposed) + " proposed;";
    std::map<std::string, int> hist;
    for (const auto& p : r.proposals) ++hist[std::string(to_string(p.verdict.reason))];
    for (const auto& [k, v] : hist) why += " " + k + "=" + std::to_string(v);
    ++step_;
    throw StepStarved(why, m);
  }

  // Solve every slot n times in one parallel batch.
  const std::size_t n = cfg_.group_size;
  std::vector<std::string> prompts;
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < B; ++s) {
    const std::string prompt = render_solver_prompt(prompts_, fill.slots[s].question);
    for (std::size_t j = 0; j < n; ++j) {
      prompts.push_back(prompt);
      seeds.push_back(derive_seed(derive_seed(step_seed, 6, s), j));
    }
  }
  auto solved = run_many(Role::SolverSearch, prompts, seeds, solver_backend_, &index_,
                         cfg_.solver_limits);

  std::vector<double> all_rewards, searches, chars;
  for (std::size_t s = 0; s < B; ++s) {
    SlotOutcome out;
    out.slot = fill.slots[s];
    std::vector<std::optional<std::string>> answers;
    for (std::size_t j = 0; j < n; ++j) {
      EpisodeSlot& e = solved[s * n + j];
      if (e.ok()) {
        answers.push_back(try_extract_answer(*e.trajectory));
        searches.push_back(static_cast<double>(e.trajectory->search_count()));
        chars.push_back(static_cast<double>(e.trajectory->model_chars()));
      } else {
        answers.push_back(std::nullopt);
        ++m.solver_errors;
      }
      out.solver_group.push_back(std::move(e));
    }
    out.group_rewards = solver_rewards(answers, out.slot.truth, out.slot.question, judge_);
    for (double x : out.group_rewards.rewards) all_rewards.push_back(x);

    if (out.slot.source == SlotSource::Fresh) {
      ProposalRecord& p = r.proposals[out.slot.proposal_index];
      p.proposer_return = proposer_reward(out.group_rewards);
      EpisodeRecord rec;
      rec.truth = p.truth;
      rec.proposer_traj = *p.proposer_traj;
      rec.question = p.question;
      rec.verification = *p.verification;
      for (const auto& e : out.solver_group) {
        if (e.ok()) rec.solver_group.push_back(*e.trajectory);
      }
      rec.group_rewards = out.group_rewards;
      rec.proposer_reward = p.proposer_return;
      r.episodes.push_back(std::move(rec));
    }
    r.batch.push_back(std::move(out));
  }

  std::vector<double> returns;
  for (const auto& p : r.proposals) {
    if (!p.backend_error) returns.push_back(p.proposer_return);
  }
  m.mean_solver_reward = mean_of(all_rewards);
  m.mean_proposer_reward = mean_of(returns);
  m.mean_search_calls = mean_of(searches);
  m.mean_response_chars = mean_of(chars);

  if (reference_) {
    update(r);
  } else if (!cfg_.training_records_path.empty()) {
    write_training_records(r);
  }
  ++step_;
  return r;
}

void Arena::update(const StepResult& r) {
  auto* tp = dynamic_cast<ToyBackend*>(&proposer_backend_);
  auto* ts = dynamic_cast<ToyBackend*>(&solver_backend_);

  std::optional<ToyPolicy> new_solver, new_proposer;
  if (ts) {
    const ToyPolicy solver = ts->policies().solver;
    std::vector<SequenceGroup> groups;
    for (const auto& out : r.batch) {
      SequenceGroup g;
      bool complete = true;
      for (const auto& e : out.solver_group) {
        if (!e.ok()) {
          complete = false;
          break;
        }
        g.sequences.push_back(toy::encode(*e.trajectory));
      }
      if (!complete) continue;
      g.rewards = out.group_rewards.rewards;
      groups.push_back(std::move(g));
    }
    if (!groups.empty()) {
      GradResult gr = grpo_loss_grad(solver, reference_->solver, groups, cfg_.optim);
      new_solver = apply_update(solver, gr.grad, cfg_.solver_learning_rate);
    }
  }
  const bool warm = cfg_.proposer_warmup_steps > 0 &&
                    static_cast<long>(step_) < cfg_.proposer_warmup_steps;
  if (tp && !warm) {
    const ToyPolicy proposer = tp->policies().proposer;
    std::vector<SymbolSequence> seqs;
    std::vector<double> returns;
    for (const auto& p : r.proposals) {
      if (p.backend_error || !p.proposer_traj) continue;
      seqs.push_back(toy::encode(*p.proposer_traj));
      returns.push_back(p.proposer_return);
    }
    if (!seqs.empty()) {
      Table g = reinforce_grad(proposer, seqs, returns);
      new_proposer = apply_update(proposer, g, cfg_.proposer_learning_rate);
    }
  }
  if (ts && new_solver) {
    ToyPolicies p = ts->policies();
    p.solver = std::move(*new_solver);
    ts->set_policies(std::move(p));
  }
  if (tp && new_proposer) {
    ToyPolicies p = tp->policies();
    p.proposer = std::move(*new_proposer);
    tp->set_policies(std::move(p));
  }
}

void Arena::write_training_records(const StepResult& r) const {
  std::ofstream out(cfg_.training_records_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + cfg_.training_records_path.string());
  auto emit = [&](const Trajectory& t, double credit) {
    nlohmann::ordered_json j;
    j["step"] = r.metrics.step;
    j["role"] = to_string(t.role);
    j["prompt"] = t.prompt;
    std::string text;
    auto spans = nlohmann::ordered_json::array();
    for (const auto& s : flatten(t)) {
      const std::size_t begin = text.size();
      text += s.kind == SegmentKind::Information ? "<information>" + s.text + "</information>"
                                                 : render_segments({s}, t.role);
      nlohmann::ordered_json sp;
      sp["begin"] = begin;
      sp["end"] = text.size();
      sp["mask"] = s.kind != SegmentKind::Information;
      spans.push_back(std::move(sp));
    }
    j["sequence"] = text;
    j["mask_spans"] = std::move(spans);
    j["credit"] = credit;
    out << j.dump() << "\n";
  };
  for (const auto& slot : r.batch) {
    const auto adv = grpo_advantages(slot.group_rewards.rewards);
    for (std::size_t j = 0; j < slot.solver_group.size(); ++j) {
      if (slot.solver_group[j].ok()) emit(*slot.solver_group[j].trajectory, adv[j]);
    }
  }
  for (const auto& p : r.proposals) {
    if (p.proposer_traj && !p.backend_error) emit(*p.proposer_traj, p.proposer_return);
  }
}

void Arena::run(const std::filesystem::path& metrics_csv,
                const std::filesystem::path& checkpoint_dir) {
  const bool fresh = step_ == 0 || !std::filesystem::exists(metrics_csv);
  std::ofstream csv(metrics_csv, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw std::runtime_error("cannot write metrics file " + metrics_csv.string());
  if (fresh) csv << kMetricsHeader << "\n";
  while (step_ < cfg_.steps) {
    try {
      StepResult r = step();
      csv << metrics_csv_row(r.metrics) << "\n";
      consecutive_starved_ = 0;
    } catch (const StepStarved& e) {
      csv << metrics_csv_row(e.metrics()) << "\n";
      csv.flush();
      if (++consecutive_starved_ > cfg_.max_consecutive_starved) throw;
    }
    csv.flush();
    if (cfg_.checkpoint_every > 0 && !checkpoint_dir.empty() && step_ % cfg_.checkpoint_every == 0) {
      save_checkpoint(checkpoint_dir);
    }
  }
}

void Arena::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["step"] = step_;
  j["consecutive_starved"] = consecutive_starved_;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : buffer_.entries()) {
    nlohmann::ordered_json o;
    o["truth"] = e.truth;
    o["question"] = e.question;
    o["materials"] = docs_to_json(e.materials);
    o["inserted_step"] = e.inserted_step;
    entries.push_back(std::move(o));
  }
  j["buffer"] = std::move(entries);
  j["has_policies"] = reference_.has_value();
  std::ofstream(dir / "state.json") << j.dump(2) << "\n";
  if (reference_) {
    const auto* tp = dynamic_cast<const ToyBackend*>(&proposer_backend_);
    const auto* ts = dynamic_cast<const ToyBackend*>(&solver_backend_);
    if (tp) save_policy(tp->policies().proposer, dir / "proposer.txt");
    if (ts) save_policy(ts->policies().solver, dir / "solver.txt");
    save_policy(reference_->proposer, dir / "proposer_ref.txt");
    save_policy(reference_->solver, dir / "solver_ref.txt");
  }
}

void Arena::load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw std::runtime_error("no checkpoint state in " + dir.string());
  nlohmann::json j = nlohmann::json::parse(in);
  step_ = j.at("step").get<std::size_t>();
  consecutive_starved_ = j.at("consecutive_starved").get<std::size_t>();
  buffer_.clear();
  for (const auto& o : j.at("buffer")) {
    buffer_.push({o.at("truth").get<std::string>(), o.at("question").get<std::string>(),
                  docs_from_json(o.at("materials")), o.at("inserted_step").get<std::size_t>()});
  }
  if (j.at("has_policies").get<bool>()) {
    if (!reference_) throw std::runtime_error("checkpoint holds toy policies but backends are not toy");
    const auto vocab = reference_->solver.vocab();
    reference_->proposer = load_policy(dir / "proposer_ref.txt", vocab);
    reference_->solver = load_policy(dir / "solver_ref.txt", vocab);
    auto* tp = dynamic_cast<ToyBackend*>(&proposer_backend_);
    auto* ts = dynamic_cast<ToyBackend*>(&solver_backend_);
    if (tp) {
      ToyPolicies p = tp->policies();
      p.proposer = load_policy(dir / "proposer.txt", vocab);
      tp->set_policies(std::move(p));
    }
    if (ts) {
      ToyPolicies p = ts->policies();
      p.solver = load_policy(dir / "solver.txt", vocab);
      ts->set_policies(std::move(p));
    }
  }
}

std::vector<std::string> read_answer_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open answer pool " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    std::string t = trim(line);
    if (!t.empty()) out.push_back(t);
  }
  if (out.empty()) throw std::runtime_error("answer pool " + path.string() + " is empty");
  return out;
}

}  // namespace ssp
