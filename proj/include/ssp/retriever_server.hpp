// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "ssp/retriever.hpp"

namespace httplib {
class Server;
}

namespace ssp {

struct HttpReply {
  int status = 200;
  std::string body;
};

// Handles one POST /retrieve body. Exposed separately so the wire format can
// be tested without a socket.
HttpReply handle_retrieve(const Bm25Index& index, std::string_view body);

// Serves POST /retrieve on a background thread until stop() or destruction.
class RetrieverService {
 public:
  explicit RetrieverService(const Bm25Index& index);
  ~RetrieverService();
  RetrieverService(const RetrieverService&) = delete;
  RetrieverService& operator=(const RetrieverService&) = delete;

  // Binds host:port (port 0 picks a free port) and returns the bound port.
  int start(const std::string& host, int port);
  // Blocks the calling thread serving requests.
  void serve_forever(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  const Bm25Index& index_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace ssp
