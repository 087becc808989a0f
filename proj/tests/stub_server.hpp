// SPDX-License-Identifier: Apache-2.0
//
// In-process HTTP stub for the remote generate endpoint. Records every
// request and replies from a queue of canned (status, body) pairs.
#pragma once

#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>

namespace ssp::testing {

class GenerateStub {
 public:
  struct Seen {
    std::string path;
    std::string body;
    std::string authorization;
  };

  GenerateStub() {
    server_.Post(R"(.*/generate)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      seen_.push_back({req.path, req.body, req.get_header_value("Authorization")});
      std::pair<int, std::string> reply{500, "{}"};
      if (!replies_.empty()) {
        reply = replies_.front();
        if (replies_.size() > 1) replies_.pop_front();
      }
      res.status = reply.first;
      res.set_content(reply.second, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~GenerateStub() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  // The last queued reply repeats once the queue is down to one entry.
  void reply(int status, std::string body) {
    std::lock_guard<std::mutex> lock(mu_);
    replies_.emplace_back(status, std::move(body));
  }
  std::vector<Seen> seen() {
    std::lock_guard<std::mutex> lock(mu_);
    return seen_;
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::deque<std::pair<int, std::string>> replies_;
  std::vector<Seen> seen_;
};

}  // namespace ssp::testing
