// SPDX-License-Identifier: Apache-2.0
#include "ssp/dialogue.hpp"

#include <algorithm>
#include <array>

#include "ssp/common.hpp"

namespace ssp {

namespace {

struct TagName {
  SegmentKind kind;
  std::string_view name;
};

constexpr std::array<TagName, 5> kTags = {{
    {SegmentKind::Think, "think"},
    {SegmentKind::Search, "search"},
    {SegmentKind::Answer, "answer"},
    {SegmentKind::Question, "question"},
    {SegmentKind::Information, "information"},
}};

constexpr std::string_view kAnswerMarker = "Answer:";

struct TagHit {
  std::size_t pos = 0;
  std::size_t len = 0;
  SegmentKind kind = SegmentKind::Plain;
  bool close = false;
};

std::string open_tag(SegmentKind k) {
  for (const auto& t : kTags) {
    if (t.kind == k) return "<" + std::string(t.name) + ">";
  }
  return {};
}

std::string close_tag(SegmentKind k) {
  for (const auto& t : kTags) {
    if (t.kind == k) return "</" + std::string(t.name) + ">";
  }
  return {};
}

std::optional<TagHit> find_tag(std::string_view raw, std::size_t from) {
  for (std::size_t p = raw.find('<', from); p != std::string_view::npos;
       p = raw.find('<', p + 1)) {
    const bool close = p + 1 < raw.size() && raw[p + 1] == '/';
    const std::size_t name_at = p + (close ? 2 : 1);
    for (const auto& t : kTags) {
      if (raw.substr(name_at, t.name.size()) == t.name &&
          raw.substr(name_at + t.name.size(), 1) == ">") {
        return TagHit{p, name_at + t.name.size() + 1 - p, t.kind, close};
      }
    }
  }
  return std::nullopt;
}

bool allowed_for(SegmentKind k, Role role) {
  switch (k) {
    case SegmentKind::Think:
      return true;
    case SegmentKind::Search:
      return role != Role::SolverRAG;
    case SegmentKind::Answer:
      return role == Role::SolverSearch;
    case SegmentKind::Question:
      return role == Role::Proposer;
    default:
      return false;
  }
}

void push_gap(std::string_view raw, std::size_t begin, std::size_t end,
              std::vector<Segment>& out) {
  if (end <= begin) return;
  std::string_view gap = raw.substr(begin, end - begin);
  if (trim(gap).empty()) return;
  out.push_back({SegmentKind::Plain, std::string(gap), {begin, end}});
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Proposer:
      return "proposer";
    case Role::SolverSearch:
      return "solver_search";
    case Role::SolverRAG:
      return "solver_rag";
  }
  return "?";
}

std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think:
      return "think";
    case SegmentKind::Search:
      return "search";
    case SegmentKind::Information:
      return "information";
    case SegmentKind::Answer:
      return "answer";
    case SegmentKind::Question:
      return "question";
    case SegmentKind::Plain:
      return "plain";
  }
  return "?";
}

std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::Completed:
      return "completed";
    case Terminal::Truncated:
      return "truncated";
    case Terminal::FormatError:
      return "format_error";
  }
  return "?";
}

std::string_view to_string(FormatErrorCode c) {
  switch (c) {
    case FormatErrorCode::UnclosedTag:
      return "UnclosedTag";
    case FormatErrorCode::NestedTag:
      return "NestedTag";
    case FormatErrorCode::MultipleActions:
      return "MultipleActions";
    case FormatErrorCode::MissingAction:
      return "MissingAction";
    case FormatErrorCode::WrongRoleTag:
      return "WrongRoleTag";
  }
  return "?";
}

Role role_from_string(std::string_view s) {
  for (Role r : {Role::Proposer, Role::SolverSearch, Role::SolverRAG}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown role \"" + std::string(s) + "\"");
}

Terminal terminal_from_string(std::string_view s) {
  for (Terminal t : {Terminal::Completed, Terminal::Truncated, Terminal::FormatError}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown terminal \"" + std::string(s) + "\"");
}

ParseOutcome parse_turn(std::string_view raw, Role role) {
  ParseOutcome out;
  std::size_t pos = 0;
  bool seen_think = false;
  bool have_action = false;
  auto fail = [&](FormatErrorCode c) {
    out.error = c;
    return out;
  };

  while (true) {
    auto tag = find_tag(raw, pos);
    const std::size_t gap_end = tag ? tag->pos : raw.size();
    if (role == Role::SolverRAG && !tag) break;  // tail is scanned for the marker below
    const std::size_t before = out.segments.size();
    push_gap(raw, pos, gap_end, out.segments);
    if (have_action && out.segments.size() > before) out.trailing_text = true;
    if (!tag) break;

    if (tag->close) return fail(FormatErrorCode::UnclosedTag);
    if (!allowed_for(tag->kind, role)) return fail(FormatErrorCode::WrongRoleTag);
    if (have_action) return fail(FormatErrorCode::MultipleActions);
    if (tag->kind == SegmentKind::Think && seen_think) {
      return fail(FormatErrorCode::MultipleActions);
    }

    const std::size_t body = tag->pos + tag->len;
    const std::string close = close_tag(tag->kind);
    const std::size_t cpos = raw.find(close, body);
    if (cpos == std::string_view::npos) return fail(FormatErrorCode::UnclosedTag);
    auto inner = find_tag(raw, body);
    if (inner && inner->pos < cpos) return fail(FormatErrorCode::NestedTag);

    out.segments.push_back(
        {tag->kind, std::string(raw.substr(body, cpos - body)), {tag->pos, cpos + close.size()}});
    if (tag->kind == SegmentKind::Think) {
      seen_think = true;
    } else {
      have_action = true;
    }
    pos = cpos + close.size();
  }

  if (role == Role::SolverRAG) {
    const std::size_t marker = raw.rfind(kAnswerMarker);
    if (marker == std::string_view::npos || marker < pos) {
      push_gap(raw, pos, raw.size(), out.segments);
      return fail(FormatErrorCode::MissingAction);
    }
    push_gap(raw, pos, marker, out.segments);
    const std::size_t body = marker + kAnswerMarker.size();
    out.segments.push_back(
        {SegmentKind::Answer, std::string(raw.substr(body)), {marker, raw.size()}});
    return out;
  }

  if (!have_action) return fail(FormatErrorCode::MissingAction);
  return out;
}

std::string render_segments(const std::vector<Segment>& segments, Role role) {
  std::string out;
  for (const auto& s : segments) {
    if (s.kind == SegmentKind::Plain) {
      out += s.text;
    } else if (s.kind == SegmentKind::Answer && role == Role::SolverRAG) {
      out += kAnswerMarker;
      out += s.text;
    } else {
      out += open_tag(s.kind) + s.text + close_tag(s.kind);
    }
  }
  return out;
}

std::size_t Trajectory::search_count() const {
  std::size_t n = 0;
  for (const auto& t : turns) {
    for (const auto& s : t.segments) n += s.kind == SegmentKind::Search ? 1 : 0;
  }
  return n;
}

std::size_t Trajectory::model_chars() const {
  std::size_t n = 0;
  for (const auto& t : turns) n += t.model_text.size();
  return n;
}

namespace {

const Segment* last_of(const Trajectory& traj, SegmentKind kind) {
  if (traj.turns.empty()) return nullptr;
  const auto& segs = traj.turns.back().segments;
  for (auto it = segs.rbegin(); it != segs.rend(); ++it) {
    if (it->kind == kind) return &*it;
  }
  return nullptr;
}

}  // namespace

std::string extract_question(const Trajectory& traj) {
  if (traj.role != Role::Proposer) throw ExtractionError("extract_question: not a proposer trajectory");
  if (traj.terminal != Terminal::Completed) {
    throw ExtractionError("extract_question: trajectory is " + std::string(to_string(traj.terminal)));
  }
  const Segment* q = last_of(traj, SegmentKind::Question);
  if (!q) throw ExtractionError("extract_question: no question segment");
  return trim(q->text);
}

std::string extract_answer(const Trajectory& traj) {
  if (traj.role == Role::Proposer) throw ExtractionError("extract_answer: proposer trajectory");
  if (traj.terminal != Terminal::Completed) {
    throw ExtractionError("extract_answer: trajectory is " + std::string(to_string(traj.terminal)));
  }
  const Segment* a = last_of(traj, SegmentKind::Answer);
  if (!a) throw ExtractionError("extract_answer: no answer segment");
  return trim(a->text);
}

std::optional<std::string> try_extract_answer(const Trajectory& traj) {
  try {
    return extract_answer(traj);
  } catch (const ExtractionError&) {
    return std::nullopt;
  }
}

std::vector<Document> collect_observations(const Trajectory& traj) {
  std::vector<Document> out;
  std::vector<std::string> seen;
  for (const auto& t : traj.turns) {
    for (const auto& d : t.retrieved) {
      if (std::find(seen.begin(), seen.end(), d.doc_id) != seen.end()) continue;
      seen.push_back(d.doc_id);
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Segment> flatten(const Trajectory& traj) {
  std::vector<Segment> out;
  for (const auto& t : traj.turns) {
    out.insert(out.end(), t.segments.begin(), t.segments.end());
    if (t.observation) out.push_back({SegmentKind::Information, *t.observation, {}});
  }
  return out;
}

std::vector<bool> loss_mask(const Trajectory& traj) {
  std::vector<bool> mask;
  for (const auto& s : flatten(traj)) mask.push_back(s.kind != SegmentKind::Information);
  return mask;
}

nlohmann::ordered_json trajectory_to_json(const Trajectory& traj) {
  nlohmann::ordered_json j;
  j["role"] = to_string(traj.role);
  j["prompt"] = traj.prompt;
  j["turns"] = nlohmann::ordered_json::array();
  for (const auto& t : traj.turns) {
    nlohmann::ordered_json turn;
    turn["model_text"] = t.model_text;
    turn["observation"] = t.observation ? nlohmann::ordered_json(*t.observation)
                                        : nlohmann::ordered_json(nullptr);
    j["turns"].push_back(std::move(turn));
  }
  j["terminal"] = to_string(traj.terminal);
  return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory traj;
  traj.role = role_from_string(j.at("role").get<std::string>());
  traj.prompt = j.at("prompt").get<std::string>();
  traj.terminal = terminal_from_string(j.at("terminal").get<std::string>());
  for (const auto& tj : j.at("turns")) {
    Turn t;
    t.model_text = tj.at("model_text").get<std::string>();
    ParseOutcome p = parse_turn(t.model_text, traj.role);
    t.segments = std::move(p.segments);
    if (p.trailing_text) ++traj.trailing_text_warnings;
    if (p.error) traj.format_error = p.error;
    if (tj.contains("observation") && !tj["observation"].is_null()) {
      t.observation = tj["observation"].get<std::string>();
    }
    traj.turns.push_back(std::move(t));
  }
  return traj;
}

}  // namespace ssp
