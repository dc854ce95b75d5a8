#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "groundqa/hybrid.h"
#include "groundqa/orchestrator.h"
#include "groundqa/reward.h"
#include "groundqa/serve_eval.h"

namespace groundqa {

/// "http://host:port/path" split into what httplib wants.
struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
  std::chrono::milliseconds timeout{10000};

  static Endpoint parse(const std::string& url, std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));
};

/// POST body as JSON; returns the parsed JSON reply. Throws ClientError on
/// transport failure, non-2xx status or an unparseable body.
nlohmann::json post_json(const Endpoint& ep, const nlohmann::json& body);

/// {text} -> {vector}
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(Endpoint ep) : ep_(std::move(ep)) {}
  std::vector<double> embed(std::string_view text) override;

 private:
  Endpoint ep_;
};

/// {query} -> {rewrites}
class HttpRewriter final : public QueryRewriter {
 public:
  explicit HttpRewriter(Endpoint ep) : ep_(std::move(ep)) {}
  std::vector<std::string> rewrite(const std::string& query) override;

 private:
  Endpoint ep_;
};

/// {query, passages} -> {scores}
class HttpReranker final : public Reranker {
 public:
  explicit HttpReranker(Endpoint ep) : ep_(std::move(ep)) {}
  std::vector<double> score(const std::string& query, const std::vector<std::string>& passages) override;

 private:
  Endpoint ep_;
};

/// {prompt} -> {text}; a non-JSON reply is returned as-is.
class HttpJudgeClient final : public JudgeClient {
 public:
  explicit HttpJudgeClient(Endpoint ep) : ep_(std::move(ep)) {}
  std::string complete(const std::string& prompt) override;

 private:
  Endpoint ep_;
};

/// {prompt, max_tokens} -> {text}, delivered as a single delta.
class HttpGenerator final : public Generator {
 public:
  explicit HttpGenerator(Endpoint ep, int max_tokens = 2048) : ep_(std::move(ep)), max_tokens_(max_tokens) {}
  void generate(const GenerationRequest& request, const DeltaSink& sink) override;

 private:
  Endpoint ep_;
  int max_tokens_;
};

/// One GET per URL, redirects not followed. Any failure yields nullopt.
class HttpStatusChecker final : public StatusChecker {
 public:
  explicit HttpStatusChecker(std::chrono::milliseconds timeout = kDefaultProbeTimeout) : timeout_(timeout) {}
  std::optional<int> status(const std::string& url) override;

 private:
  std::chrono::milliseconds timeout_;
};

// --- Offline stand-ins ------------------------------------------------------

/// Keeps the incoming order.
class IdentityReranker final : public Reranker {
 public:
  std::vector<double> score(const std::string& query, const std::vector<std::string>& passages) override;
};

/// Number of distinct query content terms present in the passage.
class TermOverlapReranker final : public Reranker {
 public:
  std::vector<double> score(const std::string& query, const std::vector<std::string>& passages) override;
};

/// Deterministic rewrites: the content terms, and the content terms plus
/// "help".
class StubRewriter final : public QueryRewriter {
 public:
  std::vector<std::string> rewrite(const std::string& query) override;
};

}  // namespace groundqa
