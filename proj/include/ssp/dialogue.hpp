// SPDX-License-Identifier: Apache-2.0
//
// Tag-structured multi-turn trajectories: the output grammar agents must
// follow, extraction of questions/answers/observations, and loss masks.
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ssp/retriever.hpp"

namespace ssp {

enum class Role { Proposer, SolverSearch, SolverRAG };
enum class SegmentKind { Think, Search, Information, Answer, Question, Plain };
enum class Terminal { Completed, Truncated, FormatError };
enum class FormatErrorCode { UnclosedTag, NestedTag, MultipleActions, MissingAction, WrongRoleTag };

std::string_view to_string(Role r);
std::string_view to_string(SegmentKind k);
std::string_view to_string(Terminal t);
std::string_view to_string(FormatErrorCode c);
Role role_from_string(std::string_view s);
Terminal terminal_from_string(std::string_view s);

// Half-open character range into the turn's raw text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct Segment {
  SegmentKind kind = SegmentKind::Plain;
  std::string text;
  Span span;
  bool operator==(const Segment&) const = default;
};

struct ParseOutcome {
  // On error this holds the prefix parsed before the failure.
  std::vector<Segment> segments;
  std::optional<FormatErrorCode> error;
  // Set when non-tag text follows the action; it is kept as a Plain segment
  // but has no effect on the turn's meaning.
  bool trailing_text = false;

  bool ok() const { return !error.has_value(); }
};

// Grammar: an optional single <think>...</think>, then exactly one action.
// Actions are <search> plus the role's terminal tag (<question> for the
// proposer, <answer> for the search solver). The RAG solver writes free text
// (think allowed) ending with a line that starts with "Answer:". Whitespace-only
// gaps between tags are dropped; other free text becomes Plain segments.
ParseOutcome parse_turn(std::string_view raw, Role role);

// Inverse of parse_turn up to whitespace between tags.
std::string render_segments(const std::vector<Segment>& segments, Role role);

struct Turn {
  std::string model_text;
  std::vector<Segment> segments;
  std::optional<std::string> observation;
  // Documents behind the observation, in retrieval order.
  std::vector<Document> retrieved;
};

struct Trajectory {
  Role role = Role::SolverSearch;
  std::string prompt;
  std::vector<Turn> turns;
  Terminal terminal = Terminal::Truncated;
  std::optional<FormatErrorCode> format_error;
  std::size_t trailing_text_warnings = 0;

  std::size_t search_count() const;
  std::size_t model_chars() const;
};

class ExtractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string extract_question(const Trajectory& traj);
std::string extract_answer(const Trajectory& traj);
// Like extract_answer but returns nullopt instead of throwing.
std::optional<std::string> try_extract_answer(const Trajectory& traj);

// Every retrieved document across turns, deduplicated by doc_id at first
// occurrence.
std::vector<Document> collect_observations(const Trajectory& traj);

// Model and environment segments in order; each observation becomes an
// Information segment right after its turn. The prompt is not part of it.
std::vector<Segment> flatten(const Trajectory& traj);

// Aligned with flatten(): true for model-produced segments, false for
// Information.
std::vector<bool> loss_mask(const Trajectory& traj);

nlohmann::ordered_json trajectory_to_json(const Trajectory& traj);
// Re-parses each turn's model_text; retrieved documents are not part of the
// dump and come back empty.
Trajectory trajectory_from_json(const nlohmann::json& j);

}  // namespace ssp
