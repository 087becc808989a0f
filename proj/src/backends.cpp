// SPDX-License-Identifier: Apache-2.0
#include "ssp/backends.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ssp/common.hpp"
#include "ssp/toyworld.hpp"

namespace ssp {

void validate_request(const GenerationRequest& req) {
  if (req.messages.empty()) throw std::invalid_argument("generation request has no messages");
  for (const auto& m : req.messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw std::invalid_argument("unknown message role \"" + m.role + "\"");
    }
  }
  if (!(req.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
}

GenerationResult apply_stop_sequences(std::string text, const std::vector<std::string>& stops,
                                      FinishReason otherwise) {
  std::size_t best_end = std::string::npos;
  const std::string* best = nullptr;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    const std::size_t p = text.find(s);
    if (p == std::string::npos) continue;
    const std::size_t end = p + s.size();
    if (end < best_end || (end == best_end && s.size() > best->size())) {
      best_end = end;
      best = &s;
    }
  }
  if (!best) return {std::move(text), otherwise, std::nullopt};
  text.resize(best_end);
  return {std::move(text), FinishReason::Stop, *best};
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> lines) : lines_(std::move(lines)) {}

ScriptedBackend::ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return responder_ ? 0 : lines_.size() - next_;
}

GenerationResult ScriptedBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  std::string text;
  if (responder_) {
    text = responder_(req);
  } else {
    std::lock_guard<std::mutex> lock(mu_);
    if (next_ >= lines_.size()) throw ScriptExhausted();
    text = lines_[next_++];
  }
  return apply_stop_sequences(std::move(text), req.stop_sequences);
}

ToyBackend::ToyBackend(ToyPolicies policies, std::size_t max_symbols_per_turn)
    : policies_(std::move(policies)), max_symbols_(max_symbols_per_turn) {
  if (policies_.proposer.vocab() != toy::vocabulary() ||
      policies_.solver.vocab() != toy::vocabulary()) {
    throw std::invalid_argument("ToyBackend: policies must use the toy vocabulary");
  }
}

ToyPolicies ToyBackend::policies() const {
  std::shared_lock lock(mu_);
  return policies_;
}

void ToyBackend::set_policies(ToyPolicies p) {
  std::unique_lock lock(mu_);
  policies_ = std::move(p);
}

GenerationResult ToyBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  std::string prompt;
  int prev = -1;
  for (const auto& m : req.messages) {
    if (m.role == "user" && prompt.empty()) prompt = m.content;
    if (m.role == "assistant") {
      auto syms = toy::symbols_from_text(m.content);
      if (!syms.empty()) prev = syms.back();
    }
  }
  const Role role = toy::role_from_prompt(prompt);
  if (prev < 0) prev = toy::bos_symbol(role);

  std::shared_lock lock(mu_);
  const ToyPolicy& policy = role == Role::Proposer ? policies_.proposer : policies_.solver;
  std::mt19937_64 rng(req.seed);
  std::string text;
  for (std::size_t i = 0; i < max_symbols_; ++i) {
    const int s = policy.sample(prev, req.temperature, rng);
    text += toy::verbalize(s, role, req.messages);
    prev = s;
    if (s == toy::kEos) return {text, FinishReason::Stop, std::string(toy::kEosText)};
    if (s == toy::kSearch || s == toy::kAnswer || s == toy::kQuestion) {
      return apply_stop_sequences(std::move(text), req.stop_sequences, FinishReason::Stop);
    }
  }
  return apply_stop_sequences(std::move(text), req.stop_sequences, FinishReason::Length);
}

ToyPolicies snapshot_reference(const Backend& backend) {
  const auto* toy = dynamic_cast<const ToyBackend*>(&backend);
  if (!toy) {
    throw UnsupportedOperation("snapshot_reference needs a toy backend, got " + backend.kind());
  }
  return toy->policies();
}

RemoteConfig remote_config_from_env(RemoteConfig cfg) {
  if (const char* url = std::getenv("SSP_LLM_BASE_URL"); url && *url) cfg.base_url = url;
  if (const char* key = std::getenv("SSP_LLM_API_KEY"); key && *key) cfg.api_key = key;
  return cfg;
}

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  std::string url = cfg_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const std::size_t scheme = url.find("://");
  if (url.empty() || scheme == std::string::npos) {
    throw std::invalid_argument("remote backend needs a base URL like http://host:port");
  }
  const std::size_t path = url.find('/', scheme + 3);
  scheme_host_port_ = url.substr(0, path);
  path_prefix_ = path == std::string::npos ? "" : url.substr(path);
}

std::string RemoteBackend::encode_request(const GenerationRequest& req) {
  nlohmann::ordered_json j;
  j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : req.messages) {
    nlohmann::ordered_json o;
    o["role"] = m.role;
    o["content"] = m.content;
    j["messages"].push_back(std::move(o));
  }
  j["temperature"] = req.temperature;
  j["max_new_tokens"] = req.max_new_tokens;
  j["stop"] = req.stop_sequences;
  return j.dump();
}

GenerationResult RemoteBackend::decode_response(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body);
  GenerationResult r;
  r.text = j.at("text").get<std::string>();
  const std::string finish = j.at("finish").get<std::string>();
  if (finish == "stop") {
    r.finish = FinishReason::Stop;
  } else if (finish == "length") {
    r.finish = FinishReason::Length;
  } else {
    throw std::runtime_error("unknown finish value \"" + finish + "\"");
  }
  if (j.contains("stop_hit") && !j["stop_hit"].is_null()) {
    r.stop_hit = j["stop_hit"].get<std::string>();
  }
  return r;
}

GenerationResult RemoteBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  const std::string body = encode_request(req);
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  auto backoff = cfg_.initial_backoff;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(path_prefix_ + "/generate", headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    GenerationResult r;
    try {
      r = decode_response(res->body);
    } catch (const std::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
      continue;
    }
    // Stop sequences are enforced here as well so every backend honours the
    // same contract even when the server overshoots.
    auto cut = apply_stop_sequences(r.text, req.stop_sequences, r.finish);
    if (cut.stop_hit) return cut;
    return r;
  }
  throw BackendError("remote generate failed after " + std::to_string(cfg_.max_retries) +
                         " retries: " + last_error,
                     cfg_.max_retries);
}

}  // namespace ssp
