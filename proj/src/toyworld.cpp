// SPDX-License-Identifier: Apache-2.0
#include "ssp/toyworld.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <random>
#include <regex>
#include <set>

#include "ssp/common.hpp"
#include "ssp/prompts.hpp"

namespace ssp::toy {

namespace {

constexpr std::string_view kThinkText = "<think>reasoning</think>";
constexpr std::string_view kAnswerPrefix = "The answer I provided is: ";
constexpr std::string_view kQuestionPrefix = "Question: ";
constexpr std::string_view kMaterialsPrefix = "Materials: ";

std::string make_name(std::mt19937_64& rng) {
  static constexpr std::string_view kCons = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::uniform_int_distribution<std::size_t> syl(2, 3);
  std::uniform_int_distribution<std::size_t> c(0, kCons.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, kVowels.size() - 1);
  std::string name;
  const std::size_t n = syl(rng);
  for (std::size_t i = 0; i < n; ++i) {
    name.push_back(kCons[c(rng)]);
    name.push_back(kVowels[v(rng)]);
  }
  name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  return name;
}

struct History {
  std::string prompt;
  // Assistant text and the observation that followed it, if any.
  std::vector<std::pair<std::string, std::optional<std::string>>> turns;
};

History split_history(const std::vector<ChatMessage>& messages) {
  History h;
  for (const auto& m : messages) {
    if (m.role == "system") continue;
    if (h.prompt.empty() && m.role == "user" && h.turns.empty()) {
      h.prompt = m.content;
    } else if (m.role == "assistant") {
      h.turns.emplace_back(m.content, std::nullopt);
    } else if (m.role == "user" && !h.turns.empty()) {
      h.turns.back().second = m.content;
    }
  }
  return h;
}

bool has_search(const std::string& model_text) {
  return model_text.find("<search>") != std::string::npos;
}

std::string after_last(const std::string& s, std::string_view marker) {
  const std::size_t p = s.rfind(marker);
  return p == std::string::npos ? std::string() : trim(s.substr(p + marker.size()));
}

std::string last_word(const std::string& s) {
  std::string word;
  for (auto it = s.rbegin(); it != s.rend(); ++it) {
    const unsigned char c = static_cast<unsigned char>(*it);
    if (std::isalnum(c)) {
      word.insert(word.begin(), static_cast<char>(c));
    } else if (!word.empty()) {
      break;
    }
  }
  return word;
}

// Proposer: walk backwards from the answer, one hop per search.
struct ProposerState {
  std::string answer;
  std::string target;
  std::vector<std::pair<std::string, std::string>> chain;  // (subject, relation)
};

ProposerState proposer_state(const History& h) {
  ProposerState st;
  const std::size_t p = h.prompt.find(kAnswerPrefix);
  if (p != std::string::npos) {
    std::size_t e = h.prompt.find('\n', p);
    std::string line = h.prompt.substr(p + kAnswerPrefix.size(),
                                       e == std::string::npos ? std::string::npos
                                                              : e - p - kAnswerPrefix.size());
    line = trim(line);
    if (!line.empty() && line.back() == '.') line.pop_back();
    st.answer = line;
  }
  st.target = st.answer;
  std::set<std::string> used = {st.answer};
  for (const auto& [text, obs] : h.turns) {
    if (!has_search(text) || !obs) continue;
    for (const Fact& f : parse_facts(*obs)) {
      if (f.object == st.target && !used.count(f.subject)) {
        st.chain.emplace_back(f.subject, f.relation);
        used.insert(f.subject);
        st.target = f.subject;
        break;
      }
    }
  }
  return st;
}

std::string proposer_question(const ProposerState& st) {
  if (st.chain.empty()) return "Who is it?";
  std::vector<std::string> rels;
  for (const auto& link : st.chain) rels.push_back(link.second);
  return chain_question_text(st.chain.back().first, rels);
}

// Search solver: resolve the chain forward, one relation per search.
struct SolverState {
  bool parsed = false;
  std::string question;
  std::string current;
  std::vector<std::string> pending;
};

SolverState solver_state(const History& h) {
  SolverState st;
  st.question = after_last(h.prompt, kQuestionPrefix);
  auto chain = parse_chain_question(st.question);
  if (!chain) return st;
  st.parsed = true;
  st.current = chain->start;
  st.pending = chain->apply_order;
  for (const auto& [text, obs] : h.turns) {
    if (!has_search(text) || !obs || st.pending.empty()) continue;
    for (const Fact& f : parse_facts(*obs)) {
      if (f.subject == st.current && f.relation == st.pending.front()) {
        st.current = f.object;
        st.pending.erase(st.pending.begin());
        break;
      }
    }
  }
  return st;
}

std::string rag_answer(const History& h) {
  const std::string question = after_last(h.prompt, kQuestionPrefix);
  auto chain = parse_chain_question(question);
  if (!chain) return last_word(question);
  std::string materials;
  const std::size_t m = h.prompt.rfind(kMaterialsPrefix);
  const std::size_t q = h.prompt.rfind(kQuestionPrefix);
  if (m != std::string::npos && q != std::string::npos && q > m) {
    materials = h.prompt.substr(m, q - m);
  }
  const auto facts = parse_facts(materials);
  std::string current = chain->start;
  for (const auto& rel : chain->apply_order) {
    auto it = std::find_if(facts.begin(), facts.end(), [&](const Fact& f) {
      return f.subject == current && f.relation == rel;
    });
    if (it == facts.end()) break;
    current = it->object;
  }
  return current;
}

std::string tagged(std::string_view tag, const std::string& body) {
  return "<" + std::string(tag) + ">" + body + "</" + std::string(tag) + ">";
}

std::vector<double> prior_row(const std::map<int, double>& mass) {
  double used = 0.0;
  for (const auto& [s, p] : mass) used += p;
  const double rest = (1.0 - used) / static_cast<double>(kVocabSize - mass.size());
  std::vector<double> row(kVocabSize);
  for (int s = 0; s < kVocabSize; ++s) {
    auto it = mass.find(s);
    row[static_cast<std::size_t>(s)] = std::log(it == mass.end() ? rest : it->second);
  }
  return row;
}

void set_row(ToyPolicy& p, int ctx, const std::map<int, double>& mass) {
  auto row = prior_row(mass);
  for (int s = 0; s < kVocabSize; ++s) {
    p.mutable_logits()(static_cast<std::size_t>(ctx), static_cast<std::size_t>(s)) =
        row[static_cast<std::size_t>(s)];
  }
}

}  // namespace

std::vector<std::string> vocabulary() {
  return {"bos_proposer", "bos_solver", "bos_rag", "info", "think",
          "search",       "answer",     "question", "eos"};
}

int bos_symbol(Role role) {
  switch (role) {
    case Role::Proposer:
      return kBosProposer;
    case Role::SolverSearch:
      return kBosSolver;
    case Role::SolverRAG:
      return kBosRag;
  }
  return kBosSolver;
}

std::vector<Fact> parse_facts(std::string_view text) {
  static const std::regex kFact(R"(([A-Z][a-z]+)'s ([a-z]+) is ([A-Z][a-z]+)\.)");
  std::vector<Fact> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kFact); it != std::sregex_iterator();
       ++it) {
    out.push_back({(*it)[1].str(), (*it)[2].str(), (*it)[3].str()});
  }
  return out;
}

std::string chain_question_text(const std::string& start,
                                const std::vector<std::string>& outer_first) {
  std::string q = "Who is";
  for (const auto& r : outer_first) q += " the " + r + " of";
  return q + " " + start + "?";
}

std::optional<ParsedChain> parse_chain_question(std::string_view question) {
  static const std::regex kChain(R"(^Who is the ([a-z]+(?: of the [a-z]+)*) of ([A-Z][a-z]+)\?$)");
  std::smatch m;
  const std::string q = trim(question);
  if (!std::regex_match(q, m, kChain)) return std::nullopt;
  ParsedChain out;
  out.start = m[2].str();
  const std::string rels = m[1].str();
  static constexpr std::string_view kSep = " of the ";
  std::size_t pos = 0;
  while (true) {
    std::size_t nxt = rels.find(kSep, pos);
    out.apply_order.push_back(rels.substr(pos, nxt == std::string::npos ? std::string::npos : nxt - pos));
    if (nxt == std::string::npos) break;
    pos = nxt + kSep.size();
  }
  std::reverse(out.apply_order.begin(), out.apply_order.end());
  return out;
}

FactWorld FactWorld::generate(std::size_t num_entities, std::uint64_t seed,
                              std::size_t relations_per_entity) {
  if (num_entities < 2) throw std::invalid_argument("FactWorld needs at least 2 entities");
  const auto& rels = relation_names();
  relations_per_entity = std::min(relations_per_entity, rels.size());
  std::mt19937_64 rng(derive_seed(seed, 0x776f726c64));
  FactWorld w;
  std::set<std::string> taken;
  while (w.entities_.size() < num_entities) {
    std::string n = make_name(rng);
    if (taken.insert(n).second) w.entities_.push_back(n);
  }
  std::uniform_int_distribution<std::size_t> pick(0, num_entities - 1);
  for (std::size_t e = 0; e < num_entities; ++e) {
    const std::string& name = w.entities_[e];
    std::vector<std::string> mine(rels.begin(), rels.end());
    std::shuffle(mine.begin(), mine.end(), rng);
    mine.resize(relations_per_entity);
    std::string text = name + " is a person.";
    for (const auto& r : mine) {
      std::size_t o = pick(rng);
      while (o == e) o = pick(rng);
      w.edges_[{name, r}] = w.entities_[o];
      text += " " + name + "'s " + r + " is " + w.entities_[o] + ".";
    }
    char id[16];
    std::snprintf(id, sizeof(id), "p%04zu", e);
    w.docs_.push_back({id, name, text});
  }
  return w;
}

std::optional<std::string> FactWorld::follow(const std::string& subject,
                                             const std::string& relation) const {
  auto it = edges_.find({subject, relation});
  if (it == edges_.end()) return std::nullopt;
  return it->second;
}

std::vector<ChainQuestion> FactWorld::sample_questions(std::size_t count, std::uint64_t seed,
                                                       std::size_t min_hops,
                                                       std::size_t max_hops) const {
  std::mt19937_64 rng(derive_seed(seed, 0x71756573));
  std::uniform_int_distribution<std::size_t> hops_d(min_hops, max_hops);
  std::uniform_int_distribution<std::size_t> ent_d(0, entities_.size() - 1);
  const auto& rels = relation_names();
  std::vector<ChainQuestion> out;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (out.size() < count && attempts++ < count * 1000) {
    const std::size_t hops = hops_d(rng);
    const std::string start = entities_[ent_d(rng)];
    std::string cur = start;
    std::set<std::string> path = {start};
    std::vector<std::string> applied;
    bool ok = true;
    for (std::size_t h = 0; h < hops && ok; ++h) {
      std::vector<std::string> avail;
      for (const auto& r : rels) {
        auto nxt = follow(cur, r);
        if (nxt && !path.count(*nxt)) avail.push_back(r);
      }
      if (avail.empty()) {
        ok = false;
        break;
      }
      const std::string r = avail[std::uniform_int_distribution<std::size_t>(0, avail.size() - 1)(rng)];
      applied.push_back(r);
      cur = *follow(cur, r);
      path.insert(cur);
    }
    if (!ok) continue;
    std::vector<std::string> outer_first(applied.rbegin(), applied.rend());
    ChainQuestion q{chain_question_text(start, outer_first), cur, hops};
    if (seen.insert(q.question).second) out.push_back(std::move(q));
  }
  return out;
}

Role role_from_prompt(std::string_view prompt) {
  auto preamble = [](std::string_view name) {
    std::string_view t = builtin_prompt(name);
    return t.substr(0, std::min<std::size_t>(t.find('{'), 40));
  };
  if (starts_with(prompt, preamble("proposer"))) return Role::Proposer;
  if (starts_with(prompt, preamble("rag_solver"))) return Role::SolverRAG;
  return Role::SolverSearch;
}

std::string verbalize(int symbol, Role role, const std::vector<ChatMessage>& messages) {
  const History h = split_history(messages);
  switch (symbol) {
    case kBosProposer:
      return "<information>proposer</information>";
    case kBosSolver:
      return "<information>solver</information>";
    case kBosRag:
      return "<information>rag</information>";
    case kInfo:
      return "<information></information>";
    case kThink:
      return std::string(kThinkText);
    case kEos:
      return std::string(kEosText);
    default:
      break;
  }
  if (role == Role::Proposer) {
    ProposerState st = proposer_state(h);
    if (symbol == kSearch) return tagged("search", st.target);
    if (symbol == kQuestion) return tagged("question", proposer_question(st));
    return tagged("answer", st.target);
  }
  if (role == Role::SolverRAG) {
    const std::string ans = rag_answer(h);
    if (symbol == kAnswer) return "Answer: " + ans;
    if (symbol == kSearch) return tagged("search", ans);
    return tagged("question", ans);
  }
  SolverState st = solver_state(h);
  if (!st.parsed) {
    if (symbol == kSearch) return tagged("search", st.question);
    if (symbol == kAnswer) return tagged("answer", last_word(st.question));
    return tagged("question", st.question);
  }
  if (symbol == kSearch) {
    return tagged("search", st.pending.empty() ? st.current : st.current + " " + st.pending.front());
  }
  if (symbol == kAnswer) return tagged("answer", st.current);
  return tagged("question", st.question);
}

std::vector<int> symbols_from_text(std::string_view text) {
  struct Pattern {
    std::string_view open;
    std::string_view close;
    int symbol;
  };
  static const std::vector<Pattern> kPatterns = {
      {"<information>proposer</information>", "", kBosProposer},
      {"<information>solver</information>", "", kBosSolver},
      {"<information>rag</information>", "", kBosRag},
      {"<information></information>", "", kInfo},
      {"<think>", "</think>", kThink},
      {"<search>", "</search>", kSearch},
      {"<answer>", "</answer>", kAnswer},
      {"<question>", "</question>", kQuestion},
      {kEosText, "", kEos},
  };
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text.substr(pos, 7) == "Answer:") {
      out.push_back(kAnswer);
      break;
    }
    bool matched = false;
    for (const auto& p : kPatterns) {
      if (text.substr(pos, p.open.size()) != p.open) continue;
      std::size_t end = pos + p.open.size();
      if (!p.close.empty()) {
        const std::size_t c = text.find(p.close, end);
        end = c == std::string_view::npos ? text.size() : c + p.close.size();
      }
      out.push_back(p.symbol);
      pos = end;
      matched = true;
      break;
    }
    if (!matched) ++pos;
  }
  return out;
}

SymbolSequence encode(const Trajectory& traj) {
  SymbolSequence seq;
  seq.symbols.push_back(bos_symbol(traj.role));
  seq.mask.push_back(false);
  for (const auto& t : traj.turns) {
    for (int s : symbols_from_text(t.model_text)) {
      seq.symbols.push_back(s);
      seq.mask.push_back(true);
    }
    if (t.observation) {
      seq.symbols.push_back(kInfo);
      seq.mask.push_back(false);
    }
  }
  return seq;
}

ToyPolicies format_prior() {
  ToyPolicies p{ToyPolicy(vocabulary()), ToyPolicy(vocabulary())};
  set_row(p.proposer, kBosProposer, {{kSearch, 0.70}, {kThink, 0.12}, {kQuestion, 0.08}});
  set_row(p.proposer, kThink, {{kSearch, 0.55}, {kQuestion, 0.30}});
  set_row(p.proposer, kSearch, {{kSearch, 0.30}, {kQuestion, 0.55}, {kThink, 0.08}});

  set_row(p.solver, kBosSolver, {{kSearch, 0.60}, {kThink, 0.15}, {kAnswer, 0.15}});
  set_row(p.solver, kThink, {{kSearch, 0.55}, {kAnswer, 0.30}});
  set_row(p.solver, kSearch, {{kSearch, 0.45}, {kAnswer, 0.40}, {kThink, 0.08}});
  set_row(p.solver, kBosRag, {{kAnswer, 0.92}, {kThink, 0.04}});
  return p;
}

}  // namespace ssp::toy
