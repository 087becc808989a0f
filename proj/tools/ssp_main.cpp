// SPDX-License-Identifier: Apache-2.0
//
// ssp <command> [--config FILE] [--seed N] [--key=value ...]
//
// Exit codes: 0 ok, 1 usage, 2 runtime failure, 3 gradcheck tolerance exceeded.
#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssp/arena.hpp"
#include "ssp/config.hpp"
#include "ssp/evalsuite.hpp"
#include "ssp/gradcheck.hpp"
#include "ssp/retriever_server.hpp"
#include "ssp/toyworld.hpp"

namespace {

using ssp::Config;
using ssp::ConfigError;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitTolerance = 3;

void report_error(const std::string& kind, const std::string& command, const std::string& msg) {
  nlohmann::ordered_json j;
  j["level"] = "error";
  j["kind"] = kind;
  j["command"] = command;
  j["message"] = msg;
  std::cerr << j.dump() << std::endl;
}

// Raw lines are used verbatim; lines starting with '"' are JSON strings so
// responses can carry newlines.
std::vector<std::string> read_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (ssp::trim(line).empty()) continue;
    if (line.front() == '"') {
      lines.push_back(nlohmann::json::parse(line).get<std::string>());
    } else {
      lines.push_back(line);
    }
  }
  return lines;
}

ssp::RolloutLimits limits_from(const Config& c) {
  ssp::RolloutLimits l;
  l.max_search_calls = c.get_size("max_search_calls", l.max_search_calls);
  l.max_new_tokens_per_turn = c.get_size("max_new_tokens", l.max_new_tokens_per_turn);
  l.max_total_model_chars = c.get_size("max_total_chars", l.max_total_model_chars);
  l.top_k = c.get_size("top_k", l.top_k);
  l.temperature = c.get_double("temperature", l.temperature);
  l.validate();
  return l;
}

struct Runtime {
  std::optional<ssp::toy::FactWorld> world;
  std::unique_ptr<ssp::Bm25Index> index;
};

// Index from a saved file, a corpus file, or a generated fact world.
Runtime load_index(const Config& c) {
  Runtime rt;
  if (c.has("index")) {
    rt.index = std::make_unique<ssp::Bm25Index>(ssp::Bm25Index::load(c.path("index")));
  } else if (c.has("corpus")) {
    rt.index = std::make_unique<ssp::Bm25Index>(ssp::Bm25Index::from_corpus_file(c.path("corpus")));
  } else if (c.has("world_entities")) {
    rt.world = ssp::toy::FactWorld::generate(c.get_size("world_entities", 200),
                                             c.get_u64("world_seed", 0));
    rt.index = std::make_unique<ssp::Bm25Index>(ssp::Bm25Index::build(rt.world->documents()));
  } else {
    throw ConfigError("one of index, corpus or world_entities is required");
  }
  return rt;
}

std::unique_ptr<ssp::Backend> make_backend(const Config& c, const std::string& script_key) {
  const std::string kind = c.get("backend", "toy");
  if (kind == "toy") {
    ssp::ToyPolicies p = ssp::toy::format_prior();
    if (c.has("policy_dir")) {
      const auto dir = c.path("policy_dir");
      const auto vocab = ssp::toy::vocabulary();
      p.proposer = ssp::load_policy(dir / "proposer.txt", vocab);
      p.solver = ssp::load_policy(dir / "solver.txt", vocab);
    }
    return std::make_unique<ssp::ToyBackend>(std::move(p), c.get_size("max_symbols_per_turn", 4));
  }
  if (kind == "scripted") {
    const std::string key = c.has(script_key) ? script_key : "script";
    return std::make_unique<ssp::ScriptedBackend>(read_script(c.path(key)));
  }
  if (kind == "remote") {
    ssp::RemoteConfig rc = ssp::remote_config_from_env();
    if (c.has("base_url")) rc.base_url = c.get("base_url");
    if (rc.base_url.empty()) throw ConfigError("remote backend needs base_url or SSP_LLM_BASE_URL");
    rc.max_retries = static_cast<int>(c.get_int("max_retries", rc.max_retries));
    return std::make_unique<ssp::RemoteBackend>(rc);
  }
  throw ConfigError("unknown backend \"" + kind + "\"");
}

struct JudgeHolder {
  std::unique_ptr<ssp::Backend> backend;
  std::unique_ptr<ssp::Judge> judge;
};

JudgeHolder make_judge(const Config& c, const ssp::PromptSet& prompts) {
  JudgeHolder h;
  const std::string mode = c.get("judge", "em");
  if (mode == "em") {
    h.judge = std::make_unique<ssp::ExactMatchJudge>();
  } else if (mode == "llm") {
    if (c.get("backend", "toy") != "remote") throw ConfigError("judge=llm needs backend=remote");
    h.backend = make_backend(c, "script");
    h.judge = std::make_unique<ssp::LlmJudge>(*h.backend, prompts.judge,
                                              static_cast<int>(c.get_int("judge_retries", 1)));
  } else {
    throw ConfigError("unknown judge \"" + mode + "\"");
  }
  return h;
}

ssp::PromptSet prompts_from(const Config& c) {
  ssp::PromptSet ps = ssp::PromptSet::defaults();
  ps.proposer_searches = c.get_size("proposer_searches", ps.proposer_searches);
  return ps;
}

int cmd_index(const Config& c) {
  auto idx = ssp::Bm25Index::from_corpus_file(c.path("corpus"));
  const auto out = c.path("output");
  idx.save(out);
  std::printf("indexed %zu documents, %zu terms -> %s\n", idx.stats().num_docs,
              idx.stats().num_terms, out.string().c_str());
  return kExitOk;
}

int cmd_serve(const Config& c) {
  Runtime rt = load_index(c);
  ssp::RetrieverService svc(*rt.index);
  const std::string host = c.get("host", "127.0.0.1");
  const int port = static_cast<int>(c.get_int("port", 8000));
  std::printf("serving %zu documents on %s:%d\n", rt.index->size(), host.c_str(), port);
  std::fflush(stdout);
  svc.serve_forever(host, port);
  return kExitOk;
}

int cmd_selfplay(const Config& c) {
  Runtime rt = load_index(c);
  std::vector<std::string> pool;
  if (c.has("answers")) {
    pool = ssp::read_answer_pool(c.path("answers"));
  } else if (rt.world) {
    pool = rt.world->entities();
  } else {
    throw ConfigError("missing required key \"answers\"");
  }

  ssp::ArenaConfig ac;
  ac.seed = c.get_u64("seed", 0);
  ac.steps = c.get_size("steps", ac.steps);
  ac.batch_size = c.get_size("batch_size", ac.batch_size);
  ac.group_size = c.get_size("group_size", ac.group_size);
  ac.strategy = ssp::batch_strategy_from_string(c.get("strategy", "periodic_reset"));
  ac.reset_period = c.get_size("reset_period", ac.reset_period);
  if (c.has("buffer_capacity")) ac.buffer_capacity = c.get_size("buffer_capacity", 0);
  ac.noise_docs = c.get_size("noise_docs", ac.noise_docs);
  ac.rag_samples = c.get_size("rag_samples", ac.rag_samples);
  ac.resample_rounds = c.get_size("resample_rounds", ac.resample_rounds);
  ac.proposer_limits = limits_from(c);
  ac.solver_limits = ac.proposer_limits;
  ac.optim.beta = c.get_double("beta", ac.optim.beta);
  ac.optim.group_size = ac.group_size;
  ac.optim.batch_size = ac.batch_size;
  const std::string norm = c.get("length_norm", "unmasked");
  if (norm == "unmasked") {
    ac.optim.length_norm = ssp::LengthNorm::UnmaskedCount;
  } else if (norm == "all") {
    ac.optim.length_norm = ssp::LengthNorm::AllTokens;
  } else {
    throw ConfigError("length_norm must be unmasked or all");
  }
  ac.optim.format_fail_reward = c.get_double("format_fail_reward", 0.0);
  ac.solver_learning_rate = c.get_double("solver_lr", ac.solver_learning_rate);
  ac.proposer_learning_rate = c.get_double("proposer_lr", ac.proposer_learning_rate);
  ac.proposer_warmup_steps = c.get_int("proposer_warmup_steps", ac.proposer_warmup_steps);
  ac.checkpoint_every = c.get_size("checkpoint_every", 0);
  ac.max_consecutive_starved = c.get_size("max_starved", ac.max_consecutive_starved);
  if (c.has("training_records")) ac.training_records_path = c.path("training_records");

  const ssp::PromptSet prompts = prompts_from(c);
  std::unique_ptr<ssp::Backend> proposer, solver;
  if (c.get("backend", "toy") == "scripted") {
    proposer = make_backend(c, "proposer_script");
    solver = make_backend(c, "solver_script");
  } else {
    solver = make_backend(c, "script");
  }
  ssp::Backend& pb = proposer ? *proposer : *solver;
  JudgeHolder judge = make_judge(c, prompts);

  ssp::Arena arena(ac, *rt.index, pool, pb, *solver, *judge.judge, prompts);
  std::filesystem::path ckpt;
  if (c.has("checkpoint_dir")) ckpt = c.path("checkpoint_dir");
  if (c.get_bool("resume", false)) {
    if (ckpt.empty()) throw ConfigError("resume needs checkpoint_dir");
    arena.load_checkpoint(ckpt);
  }
  const auto metrics = c.has("metrics") ? c.path("metrics") : std::filesystem::path("metrics.csv");
  arena.run(metrics, ckpt);
  if (!ckpt.empty()) arena.save_checkpoint(ckpt);
  std::printf("selfplay finished at step %zu, metrics -> %s\n", arena.step_index(),
              metrics.string().c_str());
  return kExitOk;
}

int cmd_eval(const Config& c) {
  Runtime rt = load_index(c);
  const auto items = ssp::read_qa(c.path("qa"));
  const ssp::PromptSet prompts = prompts_from(c);
  auto backend = make_backend(c, "solver_script");
  JudgeHolder judge = make_judge(c, prompts);
  ssp::RolloutLimits limits = limits_from(c);
  const std::string dataset = c.get("dataset", c.path("qa").stem().string());
  const auto report = ssp::evaluate(items, *backend, *rt.index, *judge.judge, prompts, limits,
                                    c.get_size("sample_cap", ssp::kDefaultSampleCap),
                                    c.get_u64("seed", 0), dataset);
  if (c.has("report")) {
    std::ofstream out(c.path("report"));
    if (!out) throw std::runtime_error("cannot write report " + c.path("report").string());
    out << report.to_json().dump(2) << "\n";
  }
  std::printf("%s\n%s\n", std::string(ssp::kEvalCsvHeader).c_str(), report.csv_row().c_str());
  std::printf("pass@1 %.3f\n", report.pass_at_1);
  return kExitOk;
}

int cmd_gradcheck(const Config& c) {
  ssp::GradCheckOptions o;
  o.configs = c.get_size("configs", o.configs);
  o.vocab = c.get_size("vocab", o.vocab);
  o.max_len = c.get_size("max_len", o.max_len);
  o.step = c.get_double("fd_step", o.step);
  o.rel_floor = c.get_double("rel_floor", o.rel_floor);
  o.tolerance = c.get_double("tolerance", o.tolerance);
  o.seed = c.get_u64("seed", 0);
  const auto rep = ssp::run_gradcheck(o);
  std::printf("configs %zu entries %zu max_abs_err %.3e max_rel_err %.3e tolerance %.1e\n",
              rep.configs, rep.entries_checked, rep.max_abs_err, rep.max_rel_err, o.tolerance);
  if (!rep.passed(o.tolerance)) {
    report_error("tolerance", "gradcheck", "max relative error exceeds tolerance");
    return kExitTolerance;
  }
  return kExitOk;
}

int cmd_rollout_dump(const Config& c) {
  const ssp::Role role = ssp::role_from_string(c.get("role", "solver_search"));
  Runtime rt = load_index(c);
  const ssp::PromptSet prompts = prompts_from(c);
  auto backend = make_backend(c, "script");
  const ssp::RolloutLimits limits = limits_from(c);
  const std::size_t episodes = c.get_size("episodes", 1);
  const std::uint64_t seed = c.get_u64("seed", 0);

  std::ifstream in(c.path("input"));
  if (!in) throw std::runtime_error("cannot open input " + c.path("input").string());
  std::vector<std::string> prompts_out;
  std::vector<std::uint64_t> seeds;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    const std::string task = ssp::trim(line);
    if (task.empty()) continue;
    std::string rendered;
    switch (role) {
      case ssp::Role::Proposer: rendered = ssp::render_proposer_prompt(prompts, task); break;
      case ssp::Role::SolverSearch: rendered = ssp::render_solver_prompt(prompts, task); break;
      case ssp::Role::SolverRAG: {
        std::vector<ssp::Document> docs;
        try {
          for (auto& h : rt.index->retrieve(task, limits.top_k)) docs.push_back(h.document);
        } catch (const ssp::InvalidQuery&) {
        }
        rendered = ssp::render_rag_prompt(prompts, task, docs);
        break;
      }
    }
    for (std::size_t e = 0; e < episodes; ++e) {
      prompts_out.push_back(rendered);
      seeds.push_back(ssp::derive_seed(seed, line_no, e));
    }
    ++line_no;
  }
  const ssp::Bm25Index* idx = role == ssp::Role::SolverRAG ? nullptr : rt.index.get();
  auto slots = ssp::run_many(role, prompts_out, seeds, *backend, idx, limits);

  const auto out_path = c.path("output");
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  std::size_t errors = 0;
  for (const auto& s : slots) {
    if (s.ok()) {
      out << ssp::trajectory_to_json(*s.trajectory).dump() << "\n";
    } else {
      nlohmann::ordered_json j;
      j["error"] = *s.error;
      out << j.dump() << "\n";
      ++errors;
    }
  }
  std::printf("wrote %zu trajectories (%zu errors) -> %s\n", slots.size(), errors,
              out_path.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proposer and solver training for search agents"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Config&);
  };
  const std::vector<Command> commands = {
      {"index", "build and save a BM25 index", cmd_index},
      {"serve-retriever", "serve POST /retrieve over HTTP", cmd_serve},
      {"selfplay", "run proposer/solver self-play training", cmd_selfplay},
      {"eval", "evaluate the solver on a QA file", cmd_eval},
      {"gradcheck", "finite-difference check of the GRPO gradient", cmd_gradcheck},
      {"rollout-dump", "run episodes and write trajectories", cmd_rollout_dump},
  };
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--seed", seed, "seed override");
    sub->allow_extras();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", "", e.what());
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  Config cfg;
  try {
    if (!config_path.empty()) cfg = Config::load(config_path);
    for (const std::string& extra : sub->remaining()) {
      if (extra.rfind("--", 0) != 0) throw ConfigError("unexpected argument \"" + extra + "\"");
      cfg.apply_override(std::string_view(extra).substr(2));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (cfg.has("workers")) {
      const std::size_t w = cfg.get_size("workers", 0);
      if (w > 0) omp_set_num_threads(static_cast<int>(w));
    }
  } catch (const std::exception& e) {
    report_error("usage", name, e.what());
    std::fprintf(stderr, "usage: ssp %s --config <file> [--seed N] [--key=value ...]\n", name.c_str());
    return kExitUsage;
  }

  for (const auto& cmd : commands) {
    if (name != cmd.name) continue;
    try {
      return cmd.run(cfg);
    } catch (const ConfigError& e) {
      report_error("usage", name, e.what());
      return kExitUsage;
    } catch (const ssp::StepStarved& e) {
      report_error("starved", name, e.what());
      return kExitRuntime;
    } catch (const std::exception& e) {
      report_error("runtime", name, e.what());
      return kExitRuntime;
    }
  }
  return kExitUsage;
}
