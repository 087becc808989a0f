// SPDX-License-Identifier: Apache-2.0
#include "ssp/retriever_server.hpp"

#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace ssp {

namespace {

HttpReply bad_request(const std::string& reason) {
  nlohmann::ordered_json j;
  j["error"] = reason;
  return {400, j.dump()};
}

}  // namespace

HttpReply handle_retrieve(const Bm25Index& index, std::string_view body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    return bad_request("body is not valid JSON");
  }
  if (!req.is_object()) return bad_request("body must be a JSON object");
  if (!req.contains("queries") || !req["queries"].is_array()) {
    return bad_request("\"queries\" must be an array of strings");
  }
  if (!req.contains("topk") || !req["topk"].is_number_integer()) {
    return bad_request("\"topk\" must be an integer");
  }
  const auto topk = req["topk"].get<long long>();
  if (topk < 1) return bad_request("\"topk\" must be >= 1");

  std::vector<std::string> queries;
  for (const auto& q : req["queries"]) {
    if (!q.is_string()) return bad_request("\"queries\" must be an array of strings");
    queries.push_back(q.get<std::string>());
  }

  auto lists = index.retrieve_batch(queries, static_cast<std::size_t>(topk));
  nlohmann::ordered_json result = nlohmann::ordered_json::array();
  for (const auto& hits : lists) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& h : hits) {
      nlohmann::ordered_json o;
      o["id"] = h.document.doc_id;
      o["title"] = h.document.title;
      o["text"] = h.document.text;
      o["score"] = h.score;
      arr.push_back(std::move(o));
    }
    result.push_back(std::move(arr));
  }
  nlohmann::ordered_json out;
  out["result"] = std::move(result);
  return {200, out.dump()};
}

RetrieverService::RetrieverService(const Bm25Index& index)
    : index_(index), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/retrieve", [this](const httplib::Request& req, httplib::Response& res) {
    HttpReply reply = handle_retrieve(index_, req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
}

RetrieverService::~RetrieverService() { stop(); }

int RetrieverService::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw std::runtime_error("cannot bind retriever service to " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void RetrieverService::serve_forever(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void RetrieverService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ssp
