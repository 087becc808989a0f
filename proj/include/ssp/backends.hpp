// SPDX-License-Identifier: Apache-2.0
//
// Text-generation backends. All three share the same stop-sequence contract:
// output ends at (and includes) the first stop sequence found.
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssp/policy.hpp"

namespace ssp {

struct ChatMessage {
  std::string role;  // system, user or assistant
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct GenerationRequest {
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  std::size_t max_new_tokens = 512;
  std::vector<std::string> stop_sequences;
  std::uint64_t seed = 0;
};

enum class FinishReason { Stop, Length };

struct GenerationResult {
  std::string text;
  FinishReason finish = FinishReason::Length;
  std::optional<std::string> stop_hit;
  bool operator==(const GenerationResult&) const = default;
};

class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, int retries = 0)
      : std::runtime_error(what), retries_(retries) {}
  int retries() const { return retries_; }

 private:
  int retries_;
};

class ScriptExhausted : public BackendError {
 public:
  ScriptExhausted() : BackendError("ScriptExhausted: scripted backend has no lines left") {}
};

// Throws std::invalid_argument for an empty message list, unknown message
// roles, or a negative temperature.
void validate_request(const GenerationRequest& req);

// Cuts `text` after the earliest-ending stop sequence. Returns Stop with the
// matched sequence, or `otherwise` untouched when nothing matches.
GenerationResult apply_stop_sequences(std::string text, const std::vector<std::string>& stops,
                                      FinishReason otherwise = FinishReason::Length);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult generate(const GenerationRequest& req) = 0;
  virtual std::string kind() const = 0;
};

// Deterministic test policy. Either replays fixed lines in order (single
// consumer) or calls a responder function (safe for concurrent use if the
// function is).
class ScriptedBackend : public Backend {
 public:
  using Responder = std::function<std::string(const GenerationRequest&)>;

  explicit ScriptedBackend(std::vector<std::string> lines);
  explicit ScriptedBackend(Responder responder);

  GenerationResult generate(const GenerationRequest& req) override;
  std::string kind() const override { return "scripted"; }
  bool sequential() const { return !responder_; }
  std::size_t remaining() const;

 private:
  std::vector<std::string> lines_;
  std::size_t next_ = 0;
  Responder responder_;
  mutable std::mutex mu_;
};

struct ToyPolicies {
  ToyPolicy proposer;
  ToyPolicy solver;  // also drives the RAG solver role
};

// Samples from the toy policies and verbalises the symbols into tagged text.
// Symbols per turn are capped; hitting the cap ends the turn with Length.
class ToyBackend : public Backend {
 public:
  explicit ToyBackend(ToyPolicies policies, std::size_t max_symbols_per_turn = 4);

  GenerationResult generate(const GenerationRequest& req) override;
  std::string kind() const override { return "toy"; }

  ToyPolicies policies() const;
  void set_policies(ToyPolicies p);

 private:
  ToyPolicies policies_;
  std::size_t max_symbols_;
  mutable std::shared_mutex mu_;
};

// Deep copy of the current toy parameters, used as the KL reference.
// Throws UnsupportedOperation for any other backend kind.
ToyPolicies snapshot_reference(const Backend& backend);

struct RemoteConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8000
  std::string api_key;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{120};
};

// Fills base_url and api_key from SSP_LLM_BASE_URL / SSP_LLM_API_KEY when set.
RemoteConfig remote_config_from_env(RemoteConfig cfg = {});

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);

  GenerationResult generate(const GenerationRequest& req) override;
  std::string kind() const override { return "remote"; }

  // Request body exactly as sent on the wire.
  static std::string encode_request(const GenerationRequest& req);
  static GenerationResult decode_response(const std::string& body);

 private:
  RemoteConfig cfg_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace ssp
