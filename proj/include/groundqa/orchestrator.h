#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "groundqa/common.h"
#include "groundqa/graph.h"
#include "groundqa/hybrid.h"
#include "groundqa/text.h"

namespace groundqa {

/// Retrieval candidate with its text. An empty chunk_id marks an external
/// passage; it is deduplicated by content hash instead.
struct Candidate {
  std::string chunk_id;
  std::string text;
  double score = 0.0;
  std::vector<Channel> provenance;
};

std::string dedup_key(const Candidate& c);

struct EvidenceItem {
  std::string chunk_id;
  std::string text;
  double score = 0.0;
  std::vector<Channel> provenance;
  std::size_t tokens = 0;
};

/// Final evidence D: rerank order, no duplicate ids, token_count <= budget.
struct EvidenceSet {
  std::vector<EvidenceItem> items;
  std::size_t token_count = 0;

  std::vector<std::string> texts() const;
  std::vector<std::string> ids() const;
  bool empty() const { return items.empty(); }
};

struct ChannelPlan {
  bool use_graph = true;
  bool use_hybrid = true;
  int graph_timeout_ms = 852;
  int hybrid_timeout_ms = 167;
};

enum class RoutingMode { automatic, both, graph_only, hybrid_only };

struct OrchestratorConfig {
  // Ceilings seeded from measured per-module latencies.
  int graph_timeout_ms = 852;
  int hybrid_timeout_ms = 167;
  int rerank_timeout_ms = 557;
  int rewrite_timeout_ms = 690;

  int graph_hops = 2;
  std::size_t graph_k = 10;
  std::size_t hybrid_k = 10;
  std::size_t rerank_k = 20;
  std::size_t budget_tokens = 8192;

  RoutingMode routing = RoutingMode::automatic;
  /// A query is simple when it has at most this many content terms and no
  /// entity hit; simple queries skip the graph channel.
  std::size_t simple_query_max_terms = 3;
};

/// Never disables the hybrid channel.
ChannelPlan route(const std::string& query, std::size_t entity_hits, const OrchestratorConfig& config);

struct ChannelOutput {
  Channel channel;
  std::vector<Candidate> items;
};

/// RRF over channel lists (1/(60 + rank) per list), one entry per dedup key,
/// provenance lists every contributing channel. Descending score, ties by key.
std::vector<Candidate> merge_dedup(const std::vector<ChannelOutput>& lists);

/// Cross-encoder style scorer: {query, passages[]} -> {scores[]}. Throws
/// ClientError.
class Reranker {
 public:
  virtual ~Reranker() = default;
  virtual std::vector<double> score(const std::string& query, const std::vector<std::string>& passages) = 0;
};

/// Reorders by reranker score (stable for ties) and keeps the top k. Failure,
/// timeout or a malformed score vector keeps the incoming order.
std::vector<Candidate> rerank(const std::string& query, std::vector<Candidate> candidates,
                              std::shared_ptr<Reranker> reranker, std::size_t k,
                              std::chrono::milliseconds timeout, std::vector<DegradationEvent>* events = nullptr);

/// Longest prefix whose cumulative token count fits the budget; chunks are
/// never split.
EvidenceSet truncate_to_budget(const std::vector<Candidate>& ordered, std::size_t budget_tokens,
                               const TokenCounter& counter = whitespace_token_count,
                               std::vector<DegradationEvent>* events = nullptr);

// --- Channels ---------------------------------------------------------------

class RetrievalChannel {
 public:
  virtual ~RetrievalChannel() = default;
  virtual std::vector<ScoredChunk> retrieve(const QueryBundle& bundle) = 0;
};

/// Local-search graph channel over the active graph; the graph can be swapped
/// atomically while queries run.
class GraphChannel final : public RetrievalChannel {
 public:
  GraphChannel(std::shared_ptr<const KnowledgeGraph> graph, int hops, std::size_t k);
  std::vector<ScoredChunk> retrieve(const QueryBundle& bundle) override;
  void swap(std::shared_ptr<const KnowledgeGraph> graph);
  std::shared_ptr<const KnowledgeGraph> graph() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const KnowledgeGraph> graph_;
  int hops_;
  std::size_t k_;
};

class HybridChannel final : public RetrievalChannel {
 public:
  explicit HybridChannel(std::shared_ptr<const HybridRetriever> retriever, HybridMode mode = HybridMode::hybrid);
  std::vector<ScoredChunk> retrieve(const QueryBundle& bundle) override;

 private:
  std::shared_ptr<const HybridRetriever> retriever_;
  HybridMode mode_;
};

// --- Orchestrator -----------------------------------------------------------

struct ChannelReport {
  Channel channel;
  bool launched = false;
  bool timed_out = false;
  std::string error;
  double elapsed_ms = 0.0;
  std::vector<ScoredChunk> items;
};

struct StageTimings {
  double rewrite_ms = 0.0;
  double retrieval_ms = 0.0;  // wall time of the concurrent channel section
  double graph_ms = 0.0;
  double hybrid_ms = 0.0;
  double merge_ms = 0.0;
  double rerank_ms = 0.0;
  double truncate_ms = 0.0;
};

struct RetrievalResult {
  QueryBundle bundle;
  ChannelPlan plan;
  std::vector<ChannelReport> channels;
  std::vector<Candidate> merged;
  EvidenceSet evidence;
  std::vector<DegradationEvent> events;
  StageTimings timings;
};

/// Runs the enabled channels concurrently with per-channel deadlines, then
/// merges, reranks and truncates. Safe for concurrent retrieve() calls.
class Orchestrator {
 public:
  struct Parts {
    std::shared_ptr<RetrievalChannel> graph;
    std::shared_ptr<RetrievalChannel> hybrid;
    std::shared_ptr<QueryRewriter> rewriter;
    std::shared_ptr<Reranker> reranker;
    ChunkLookup lookup;
    /// Counts graph entities named in a query; used by routing.
    std::function<std::size_t(const std::string&)> entity_hits;
    TokenCounter token_counter = whitespace_token_count;
  };

  Orchestrator(Parts parts, OrchestratorConfig config = {});

  RetrievalResult retrieve(const std::string& query) const;
  RetrievalResult retrieve(const std::string& query, const OrchestratorConfig& config) const;

  const OrchestratorConfig& config() const { return config_; }

 private:
  Parts parts_;
  OrchestratorConfig config_;
};

}  // namespace groundqa
