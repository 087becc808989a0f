// SPDX-License-Identifier: Apache-2.0
#include "ssp/config.hpp"

#include <fstream>
#include <sstream>

#include "ssp/common.hpp"

namespace ssp {

const std::set<std::string>& Config::known_keys() {
  static const std::set<std::string> kKeys = {
      // shared
      "seed", "workers", "corpus", "index", "output", "backend", "script", "proposer_script",
      "solver_script", "judge", "judge_retries", "base_url", "max_retries", "top_k",
      "max_search_calls", "max_new_tokens", "max_total_chars", "temperature",
      "world_entities", "world_seed", "policy_dir",
      // retriever service
      "host", "port",
      // self-play
      "answers", "metrics", "checkpoint_dir", "checkpoint_every", "resume", "steps",
      "batch_size", "group_size", "strategy", "reset_period", "buffer_capacity", "noise_docs",
      "rag_samples", "resample_rounds", "beta", "length_norm", "format_fail_reward", "solver_lr",
      "proposer_lr", "proposer_warmup_steps", "max_starved", "proposer_searches",
      "training_records", "max_symbols_per_turn",
      // evaluation
      "qa", "sample_cap", "dataset", "report",
      // gradient check
      "configs", "vocab", "max_len", "tolerance", "fd_step", "rel_floor",
      // rollout dump
      "role", "input", "episodes"};
  return kKeys;
}

Config Config::parse(std::string_view text, const std::string& source) {
  Config c;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config c = parse(ss.str(), path.string());
  c.base_dir_ = path.parent_path();
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known_keys().count(key)) throw ConfigError("unknown config key \"" + key + "\"");
  values_[key] = value;
}

void Config::apply_override(std::string_view kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override \"" + std::string(kv) + "\" is not key=value");
  }
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key \"" + key + "\"");
  return it->second;
}

namespace {

template <typename T, typename F>
T convert(const std::string& key, const std::string& v, F f) {
  try {
    std::size_t used = 0;
    T out = f(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad value \"" + v + "\" for key \"" + key + "\"");
  }
}

}  // namespace

long long Config::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  return convert<long long>(key, get(key), [](const std::string& s, std::size_t* u) {
    return std::stoll(s, u);
  });
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const long long v = get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError("key \"" + key + "\" must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  return convert<std::uint64_t>(key, get(key), [](const std::string& s, std::size_t* u) {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    return static_cast<std::uint64_t>(std::stoull(s, u));
  });
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return convert<double>(key, get(key), [](const std::string& s, std::size_t* u) {
    return std::stod(s, u);
  });
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = to_lower_ascii(get(key));
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean \"" + v + "\" for key \"" + key + "\"");
}

std::filesystem::path Config::path(const std::string& key) const {
  std::filesystem::path p = require(key);
  if (p.is_relative() && !base_dir_.empty()) return base_dir_ / p;
  return p;
}

}  // namespace ssp
