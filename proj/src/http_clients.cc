#include "groundqa/http_clients.h"

#include <httplib.h>

#include <set>

#include "groundqa/text.h"

namespace groundqa {

using nlohmann::json;

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ClientError("not an absolute URL: " + url);
  const auto path_begin = url.find_first_of("/?#", scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  std::string path = url.substr(path_begin);
  if (path.front() != '/') path.insert(path.begin(), '/');
  return {url.substr(0, path_begin), path};
}

void apply_timeout(httplib::Client& cli, std::chrono::milliseconds timeout) {
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
}

}  // namespace

Endpoint Endpoint::parse(const std::string& url, std::chrono::milliseconds timeout) {
  auto [origin, path] = split_url(url);
  return Endpoint{origin, path, timeout};
}

json post_json(const Endpoint& ep, const json& body) {
  httplib::Client cli(ep.origin);
  apply_timeout(cli, ep.timeout);
  auto res = cli.Post(ep.path, body.dump(), "application/json");
  if (!res) throw ClientError(ep.origin + ep.path + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw ClientError(ep.origin + ep.path + ": HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw ClientError(ep.origin + ep.path + ": bad JSON reply: " + e.what());
  }
}

std::vector<double> HttpEmbedder::embed(std::string_view text) {
  auto j = post_json(ep_, json{{"text", std::string(text)}});
  try {
    return j.at("vector").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ClientError(std::string("embedder reply: ") + e.what());
  }
}

std::vector<std::string> HttpRewriter::rewrite(const std::string& query) {
  auto j = post_json(ep_, json{{"query", query}});
  try {
    return j.at("rewrites").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ClientError(std::string("rewriter reply: ") + e.what());
  }
}

std::vector<double> HttpReranker::score(const std::string& query, const std::vector<std::string>& passages) {
  auto j = post_json(ep_, json{{"query", query}, {"passages", passages}});
  try {
    return j.at("scores").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ClientError(std::string("reranker reply: ") + e.what());
  }
}

std::string HttpJudgeClient::complete(const std::string& prompt) {
  httplib::Client cli(ep_.origin);
  apply_timeout(cli, ep_.timeout);
  auto res = cli.Post(ep_.path, json{{"prompt", prompt}}.dump(), "application/json");
  if (!res) throw ClientError("judge: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw ClientError("judge: HTTP " + std::to_string(res->status));
  auto j = json::parse(res->body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("text") && j["text"].is_string()) {
    return j["text"].get<std::string>();
  }
  return res->body;
}

void HttpGenerator::generate(const GenerationRequest& request, const DeltaSink& sink) {
  auto j = post_json(ep_, json{{"prompt", request.prompt}, {"max_tokens", max_tokens_}});
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) throw ClientError("generator reply lacks text");
  sink(j["text"].get<std::string>());
}

std::optional<int> HttpStatusChecker::status(const std::string& url) {
  try {
    auto [origin, path] = split_url(url);
    httplib::Client cli(origin);
    apply_timeout(cli, timeout_);
    cli.set_follow_location(false);
    auto res = cli.Get(path);
    if (!res) return std::nullopt;
    return res->status;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------

std::vector<double> IdentityReranker::score(const std::string&, const std::vector<std::string>& passages) {
  std::vector<double> s(passages.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(s.size() - i);
  return s;
}

std::vector<double> TermOverlapReranker::score(const std::string& query, const std::vector<std::string>& passages) {
  const auto q = content_terms(query);
  const std::set<std::string> terms(q.begin(), q.end());
  std::vector<double> s;
  s.reserve(passages.size());
  for (const auto& p : passages) {
    const auto toks = tokenize(p);
    const std::set<std::string> present(toks.begin(), toks.end());
    double hits = 0;
    for (const auto& t : terms) hits += present.count(t) ? 1.0 : 0.0;
    s.push_back(hits);
  }
  return s;
}

std::vector<std::string> StubRewriter::rewrite(const std::string& query) {
  std::string terms;
  for (const auto& t : content_terms(query)) terms += (terms.empty() ? "" : " ") + t;
  if (terms.empty()) return {};
  return {terms, terms + " help"};
}

}  // namespace groundqa
