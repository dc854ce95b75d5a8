#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "groundqa/serve_eval.h"

namespace httplib {
class Server;
}

namespace groundqa {

class BadRequest : public Error {
 public:
  using Error::Error;
};

/// Chat body: {"messages": [{"role", "content"}...], "stream": bool,
/// "routing": "auto"|"both"|"graph_only"|"hybrid_only"}. The last message
/// must come from the user; earlier ones become history. Throws BadRequest.
QARequest parse_chat_request(const std::string& body, const OrchestratorConfig& defaults, bool* stream = nullptr);

/// Terminal payload: answer, evidence ids, guardrail events, timings.
nlohmann::json response_to_json(const QAResponse& resp);

/// POST /v1/chat (event stream or JSON) and GET /healthz.
class QAServer {
 public:
  QAServer(std::shared_ptr<const QAPipeline> pipeline, OrchestratorConfig defaults = {});
  ~QAServer();

  /// Binds to an ephemeral port and returns it.
  int bind_any(const std::string& host = "127.0.0.1");
  bool listen(const std::string& host, int port);
  /// Blocks; use after bind_any.
  bool serve();
  void stop();

 private:
  void install_routes();

  std::shared_ptr<const QAPipeline> pipeline_;
  OrchestratorConfig defaults_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace groundqa
