#include "groundqa/orchestrator.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "groundqa/deadline.h"

namespace groundqa {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void note(std::vector<DegradationEvent>* events, std::string stage, std::string reason) {
  if (events) events->push_back({std::move(stage), std::move(reason)});
}

}  // namespace

std::string dedup_key(const Candidate& c) {
  return c.chunk_id.empty() ? "content:" + hex64(fnv1a64(c.text)) : c.chunk_id;
}

std::vector<std::string> EvidenceSet::texts() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back(i.text);
  return out;
}

std::vector<std::string> EvidenceSet::ids() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back(i.chunk_id);
  return out;
}

ChannelPlan route(const std::string& query, std::size_t entity_hits, const OrchestratorConfig& config) {
  if (query.empty()) throw Error("query must be non-empty");
  ChannelPlan plan;
  plan.graph_timeout_ms = config.graph_timeout_ms;
  plan.hybrid_timeout_ms = config.hybrid_timeout_ms;
  switch (config.routing) {
    case RoutingMode::both:
      break;
    case RoutingMode::graph_only:
      plan.use_hybrid = false;
      break;
    case RoutingMode::hybrid_only:
      plan.use_graph = false;
      break;
    case RoutingMode::automatic: {
      const bool simple = content_terms(query).size() <= config.simple_query_max_terms && entity_hits == 0;
      plan.use_graph = !simple;
      break;
    }
  }
  return plan;
}

std::vector<Candidate> merge_dedup(const std::vector<ChannelOutput>& lists) {
  std::map<std::string, Candidate> merged;
  for (const auto& list : lists) {
    std::size_t rank = 0;
    std::unordered_map<std::string, bool> seen;
    for (const auto& item : list.items) {
      auto key = dedup_key(item);
      if (!seen.emplace(key, true).second) continue;
      ++rank;
      auto [it, fresh] = merged.try_emplace(key, Candidate{item.chunk_id, item.text, 0.0, {}});
      it->second.score += 1.0 / (kRrfConstant + static_cast<double>(rank));
      auto& prov = it->second.provenance;
      if (std::find(prov.begin(), prov.end(), list.channel) == prov.end()) prov.push_back(list.channel);
      if (it->second.text.empty()) it->second.text = item.text;
    }
  }
  std::vector<std::pair<std::string, Candidate>> rows(merged.begin(), merged.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.second.score != b.second.score ? a.second.score > b.second.score : a.first < b.first;
  });
  std::vector<Candidate> out;
  out.reserve(rows.size());
  for (auto& [key, c] : rows) out.push_back(std::move(c));
  return out;
}

std::vector<Candidate> rerank(const std::string& query, std::vector<Candidate> candidates,
                              std::shared_ptr<Reranker> reranker, std::size_t k, std::chrono::milliseconds timeout,
                              std::vector<DegradationEvent>* events) {
  if (reranker && !candidates.empty()) {
    std::vector<std::string> passages;
    passages.reserve(candidates.size());
    for (const auto& c : candidates) passages.push_back(c.text);
    auto r = run_with_deadline([reranker, query, passages] { return reranker->score(query, passages); }, timeout);
    if (!r.ok()) {
      note(events, "rerank", r.error);
    } else if (r.value->size() != candidates.size()) {
      note(events, "rerank", "reranker returned " + std::to_string(r.value->size()) + " scores for " +
                                 std::to_string(candidates.size()) + " passages");
    } else if (!std::all_of(r.value->begin(), r.value->end(), [](double s) { return std::isfinite(s); })) {
      note(events, "rerank", "reranker returned non-finite scores");
    } else {
      const auto& scores = *r.value;
      std::vector<std::size_t> order(candidates.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
      std::vector<Candidate> sorted;
      sorted.reserve(candidates.size());
      for (auto i : order) {
        sorted.push_back(std::move(candidates[i]));
        sorted.back().score = scores[i];
      }
      candidates = std::move(sorted);
    }
  }
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

EvidenceSet truncate_to_budget(const std::vector<Candidate>& ordered, std::size_t budget_tokens,
                               const TokenCounter& counter, std::vector<DegradationEvent>* events) {
  EvidenceSet out;
  for (const auto& c : ordered) {
    const std::size_t n = counter(c.text);
    if (out.token_count + n > budget_tokens) {
      if (out.items.empty() && budget_tokens > 0) {
        note(events, "truncate", "first chunk " + c.chunk_id + " (" + std::to_string(n) +
                                     " tokens) exceeds budget " + std::to_string(budget_tokens));
      }
      break;
    }
    out.token_count += n;
    out.items.push_back({c.chunk_id, c.text, c.score, c.provenance, n});
  }
  return out;
}

// ---------------------------------------------------------------------------

GraphChannel::GraphChannel(std::shared_ptr<const KnowledgeGraph> graph, int hops, std::size_t k)
    : graph_(std::move(graph)), hops_(hops), k_(k) {}

std::vector<ScoredChunk> GraphChannel::retrieve(const QueryBundle& bundle) {
  auto g = graph();
  if (!g) return {};
  return graph_retrieve(bundle.original, *g, hops_, k_);
}

void GraphChannel::swap(std::shared_ptr<const KnowledgeGraph> graph) {
  std::lock_guard lock(mutex_);
  graph_ = std::move(graph);
}

std::shared_ptr<const KnowledgeGraph> GraphChannel::graph() const {
  std::lock_guard lock(mutex_);
  return graph_;
}

HybridChannel::HybridChannel(std::shared_ptr<const HybridRetriever> retriever, HybridMode mode)
    : retriever_(std::move(retriever)), mode_(mode) {}

std::vector<ScoredChunk> HybridChannel::retrieve(const QueryBundle& bundle) {
  if (!retriever_) return {};
  return retriever_->retrieve(bundle, mode_);
}

// ---------------------------------------------------------------------------

Orchestrator::Orchestrator(Parts parts, OrchestratorConfig config) : parts_(std::move(parts)), config_(config) {}

RetrievalResult Orchestrator::retrieve(const std::string& query) const { return retrieve(query, config_); }

RetrievalResult Orchestrator::retrieve(const std::string& query, const OrchestratorConfig& config) const {
  RetrievalResult out;

  auto t0 = Clock::now();
  out.bundle = rewrite_query(query, parts_.rewriter, std::chrono::milliseconds(config.rewrite_timeout_ms), &out.events);
  out.timings.rewrite_ms = ms_since(t0);

  const std::size_t hits = parts_.entity_hits ? parts_.entity_hits(query) : 0;
  out.plan = route(query, hits, config);
  if (!parts_.graph) out.plan.use_graph = false;
  if (!parts_.hybrid) out.plan.use_hybrid = false;

  struct ChannelRun {
    std::vector<ScoredChunk> items;
    double elapsed_ms = 0.0;
  };
  auto launch = [&](std::shared_ptr<RetrievalChannel> channel) {
    return launch_detached([channel, bundle = out.bundle] {
      auto start = Clock::now();
      ChannelRun t{channel->retrieve(bundle), 0.0};
      t.elapsed_ms = ms_since(start);
      return t;
    });
  };

  auto t1 = Clock::now();
  std::future<ChannelRun> graph_future, hybrid_future;
  if (out.plan.use_graph) graph_future = launch(parts_.graph);
  if (out.plan.use_hybrid) hybrid_future = launch(parts_.hybrid);

  auto collect = [&](std::future<ChannelRun>& fut, bool launched, Channel channel, int timeout_ms) {
    ChannelReport report{channel, launched, false, {}, 0.0, {}};
    if (!launched) return report;
    auto r = collect_until(fut, t1 + std::chrono::milliseconds(timeout_ms));
    if (r.ok()) {
      report.items = std::move(r.value->items);
      report.elapsed_ms = r.value->elapsed_ms;
    } else {
      report.timed_out = r.timed_out;
      report.error = r.error;
      report.elapsed_ms = ms_since(t1);
      out.events.push_back({std::string(channel_name(channel)), r.timed_out ? "timed out" : r.error});
    }
    return report;
  };
  out.channels.push_back(collect(graph_future, out.plan.use_graph, Channel::graph, out.plan.graph_timeout_ms));
  out.channels.push_back(collect(hybrid_future, out.plan.use_hybrid, Channel::hybrid, out.plan.hybrid_timeout_ms));
  out.timings.retrieval_ms = ms_since(t1);
  out.timings.graph_ms = out.channels[0].elapsed_ms;
  out.timings.hybrid_ms = out.channels[1].elapsed_ms;

  auto t2 = Clock::now();
  std::vector<ChannelOutput> lists;
  for (const auto& report : out.channels) {
    ChannelOutput list{report.channel, {}};
    for (const auto& sc : report.items) {
      Candidate c{sc.chunk_id, {}, sc.score, {report.channel}};
      if (parts_.lookup) {
        if (auto chunk = parts_.lookup(sc.chunk_id)) c.text = chunk->text;
      }
      list.items.push_back(std::move(c));
    }
    lists.push_back(std::move(list));
  }
  out.merged = merge_dedup(lists);
  out.timings.merge_ms = ms_since(t2);

  auto t3 = Clock::now();
  auto ordered = rerank(query, out.merged, parts_.reranker, config.rerank_k,
                        std::chrono::milliseconds(config.rerank_timeout_ms), &out.events);
  out.timings.rerank_ms = ms_since(t3);

  auto t4 = Clock::now();
  out.evidence = truncate_to_budget(ordered, config.budget_tokens, parts_.token_counter, &out.events);
  out.timings.truncate_ms = ms_since(t4);
  return out;
}

}  // namespace groundqa
