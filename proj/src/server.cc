#include "groundqa/server.h"

#include <httplib.h>

namespace groundqa {

using nlohmann::json;

namespace {

std::string sse(const json& payload, const char* event = nullptr) {
  std::string out;
  if (event) out += std::string("event: ") + event + "\n";
  out += "data: " + payload.dump() + "\n\n";
  return out;
}

json error_body(const std::string& code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}};
}

RoutingMode routing_from_name(const std::string& name) {
  if (name == "auto") return RoutingMode::automatic;
  if (name == "both") return RoutingMode::both;
  if (name == "graph_only") return RoutingMode::graph_only;
  if (name == "hybrid_only") return RoutingMode::hybrid_only;
  throw BadRequest("unknown routing mode: " + name);
}

}  // namespace

QARequest parse_chat_request(const std::string& body, const OrchestratorConfig& defaults, bool* stream) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw BadRequest("body must be a JSON object");
  if (!j.contains("messages") || !j["messages"].is_array() || j["messages"].empty()) {
    throw BadRequest("messages must be a non-empty array");
  }
  QARequest req;
  const auto& msgs = j["messages"];
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    const auto& m = msgs[i];
    if (!m.is_object() || !m.contains("role") || !m["role"].is_string() || !m.contains("content") ||
        !m["content"].is_string()) {
      throw BadRequest("messages[" + std::to_string(i) + "] needs string role and content");
    }
    const auto role = m["role"].get<std::string>();
    const auto content = m["content"].get<std::string>();
    if (i + 1 == msgs.size()) {
      if (role != "user") throw BadRequest("last message must have role user");
      req.query = content;
    } else {
      req.history.push_back(role + ": " + content);
    }
  }
  if (req.query.empty()) throw BadRequest("empty query");
  if (j.contains("stream")) {
    if (!j["stream"].is_boolean()) throw BadRequest("stream must be a boolean");
    if (stream) *stream = j["stream"].get<bool>();
  } else if (stream) {
    *stream = true;
  }
  if (j.contains("routing")) {
    if (!j["routing"].is_string()) throw BadRequest("routing must be a string");
    OrchestratorConfig cfg = defaults;
    cfg.routing = routing_from_name(j["routing"].get<std::string>());
    req.overrides = cfg;
  }
  return req;
}

json response_to_json(const QAResponse& resp) {
  json events = json::array();
  for (const auto& e : resp.guardrail_events) events.push_back(event_to_json(e));
  json degr = json::array();
  for (const auto& d : resp.degradations) degr.push_back({{"stage", d.stage}, {"reason", d.reason}});
  json j{{"answer", resp.answer},
         {"evidence_ids", resp.evidence_ids},
         {"guardrail_events", events},
         {"degradations", degr},
         {"timings", resp.timings.to_json()},
         {"refused", resp.refused}};
  if (resp.error) j["error"] = {{"code", *resp.error}, {"message", resp.error_message}};
  return j;
}

QAServer::QAServer(std::shared_ptr<const QAPipeline> pipeline, OrchestratorConfig defaults)
    : pipeline_(std::move(pipeline)), defaults_(defaults), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

QAServer::~QAServer() { stop(); }

void QAServer::install_routes() {
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}}.dump(), "application/json");
  });

  server_->Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) {
    bool stream = true;
    QARequest qa;
    try {
      qa = parse_chat_request(req.body, defaults_, &stream);
    } catch (const BadRequest& e) {
      res.status = 400;
      res.set_content(error_body("invalid_request", e.what()).dump(), "application/json");
      return;
    }

    if (!stream) {
      auto resp = pipeline_->answer(qa);
      if (resp.error) res.status = 502;
      res.set_content(response_to_json(resp).dump(), "application/json");
      return;
    }

    auto pipeline = pipeline_;
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [pipeline, qa](std::size_t, httplib::DataSink& sink) {
          bool open = true;
          auto resp = pipeline->answer(qa, [&](std::string_view delta) {
            if (!open) return;
            auto frame = sse(json{{"delta", std::string(delta)}});
            open = sink.write(frame.data(), frame.size());
          });
          if (open) {
            auto frame = sse(response_to_json(resp), resp.error ? "error" : "done");
            sink.write(frame.data(), frame.size());
          }
          sink.done();
          return true;
        });
  });
}

int QAServer::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }

bool QAServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

bool QAServer::serve() { return server_->listen_after_bind(); }

void QAServer::stop() {
  if (server_) server_->stop();
}

}  // namespace groundqa
