#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "groundqa/corpus_store.h"
#include "groundqa/graph.h"
#include "groundqa/guardrail.h"
#include "groundqa/hybrid.h"
#include "groundqa/orchestrator.h"
#include "groundqa/reward.h"

namespace groundqa {

// --- Retrieval stack --------------------------------------------------------

struct StackOptions {
  int percent = 10;
  Timestamp now = 0;
  OrchestratorConfig orchestrator;
  std::shared_ptr<QueryRewriter> rewriter;
  std::shared_ptr<Reranker> reranker;
  /// Defaults to the 256-dimensional hashing embedder.
  std::shared_ptr<Embedder> embedder;
  /// Extra gazetteer terms on top of the harvested ones.
  std::vector<std::string> terms;
  std::uint64_t community_seed = 42;
};

/// Everything retrieval needs, built from a corpus store: the K_h snapshot
/// (via rolling_update), the graph over it, the lexical and dense indexes over
/// the whole corpus, and an orchestrator wired to both channels.
struct RetrievalStack {
  std::shared_ptr<CorpusStore> store;
  std::shared_ptr<GazetteerExtractor> extractor;
  std::shared_ptr<GraphChannel> graph_channel;
  std::shared_ptr<const HybridRetriever> hybrid;
  std::shared_ptr<Orchestrator> orchestrator;
  HighCitationSnapshot snapshot;

  std::shared_ptr<const KnowledgeGraph> graph() const { return graph_channel->graph(); }
};

RetrievalStack build_stack(std::shared_ptr<CorpusStore> store, StackOptions options = {});

// --- Generation -------------------------------------------------------------

struct GenerationRequest {
  std::string query;
  std::string history;
  const EvidenceSet* evidence = nullptr;
  std::string prompt;
};

using DeltaSink = std::function<void(std::string_view)>;

/// External generator. Streams deltas through the sink; throws ClientError
/// when it cannot be reached.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual void generate(const GenerationRequest& request, const DeltaSink& sink) = 0;
};

std::string render_generation_prompt(const std::string& query, const std::string& history,
                                     const EvidenceSet& evidence);

/// Echoes the top evidence chunk, URLs included.
class FaithfulEchoGenerator final : public Generator {
 public:
  explicit FaithfulEchoGenerator(std::size_t chunk_bytes = 7) : chunk_bytes_(chunk_bytes) {}
  void generate(const GenerationRequest& request, const DeltaSink& sink) override;

 private:
  std::size_t chunk_bytes_;
};

/// Echoes the top evidence chunk and, for a seeded fraction of queries,
/// appends a fabricated link.
class UrlFabricatorGenerator final : public Generator {
 public:
  explicit UrlFabricatorGenerator(std::uint64_t seed = 1, double rate = 0.5, std::size_t chunk_bytes = 5);
  void generate(const GenerationRequest& request, const DeltaSink& sink) override;
  /// Whether this query gets a fabricated link.
  bool fabricates(const std::string& query) const;

 private:
  std::uint64_t seed_;
  double rate_;
  std::size_t chunk_bytes_;
};

/// Restates every evidence chunk with filler around it.
class VerboseGenerator final : public Generator {
 public:
  void generate(const GenerationRequest& request, const DeltaSink& sink) override;
};

// --- QA pipeline ------------------------------------------------------------

struct QARequest {
  std::string query;
  std::vector<std::string> history;
  std::optional<OrchestratorConfig> overrides;
};

struct QATimings {
  double rewrite_ms = 0.0;
  double graph_ms = 0.0;
  double hybrid_ms = 0.0;
  double retrieval_ms = 0.0;
  double merge_ms = 0.0;
  double rerank_ms = 0.0;
  double truncate_ms = 0.0;
  double generation_ms = 0.0;
  double guardrail_ms = 0.0;
  double total_ms = 0.0;

  /// Sequential stages only (channel times overlap inside retrieval_ms).
  double stage_sum() const;
  nlohmann::json to_json() const;
};

struct QAResponse {
  std::string answer;
  /// Generator output before the guardrail.
  std::string raw_answer;
  std::vector<std::string> evidence_ids;
  std::vector<std::string> evidence_texts;
  std::vector<GuardrailEvent> guardrail_events;
  std::vector<DegradationEvent> degradations;
  QATimings timings;
  bool refused = false;
  /// Machine-readable error code, e.g. "generator_unavailable".
  std::optional<std::string> error;
  std::string error_message;
};

struct PipelineConfig {
  PrefixPool prefix_pool;
  std::shared_ptr<StatusChecker> checker;
  GuardrailConfig guardrail;
  std::string refusal_template =
      "I could not find this in the knowledge base, so I cannot answer reliably. Please contact support.";
  std::chrono::milliseconds probe_timeout = kDefaultProbeTimeout;
};

/// retrieve -> generate -> guardrail. Each call owns one guardrail state.
class QAPipeline {
 public:
  QAPipeline(std::shared_ptr<const Orchestrator> orchestrator, std::shared_ptr<Generator> generator,
             PipelineConfig config);

  /// Guarded deltas go to sink as they clear the guardrail.
  QAResponse answer(const QARequest& request, const DeltaSink& sink = nullptr) const;

  const PipelineConfig& config() const { return config_; }

 private:
  std::shared_ptr<const Orchestrator> orchestrator_;
  std::shared_ptr<Generator> generator_;
  PipelineConfig config_;
};

// --- Metrics ----------------------------------------------------------------

struct EvalCase {
  std::string id;
  std::string query;
  std::string gold_answer;
  std::vector<std::string> gold_chunk_ids;
  int hops = 1;
  bool hallucinated = false;
};

nlohmann::json eval_case_to_json(const EvalCase& c);
EvalCase eval_case_from_json(const nlohmann::json& j);

/// Fraction of cases flagged hallucinated. Throws EmptyCaseSet.
double hallucination_rate(std::span<const EvalCase> cases);

/// True when answer contains a URL the validator rejects.
bool has_url_hallucination(const std::string& answer, UrlValidator& validator);

/// Word-level ROUGE-L F1 (beta = 1) on tokenize() output, scaled to [0, 100].
double rouge_l(std::string_view candidate, std::string_view reference);

/// Length of the longest common subsequence of two token sequences
/// (bit-parallel).
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RetrievalRun {
  std::vector<std::string> retrieved;
  std::vector<std::string> gold;
};

struct RecallMetrics {
  double effective_chunks_per_query = 0.0;
  /// Micro-recall over gold chunks, in percent.
  double recall_effectiveness = 0.0;
};

RecallMetrics recall_metrics(std::span<const RetrievalRun> runs);

// --- Synthetic data ---------------------------------------------------------

struct Citation {
  std::string chunk_id;
  Timestamp ts = 0;
};

struct SynthData {
  std::vector<ChunkRecord> corpus;
  std::vector<EvalCase> cases;
  std::vector<std::string> prefix_pool;
  std::vector<Citation> citations;
};

/// size eval cases; round(hop_fraction * size) of them need a two-hop graph
/// walk (the gold chunk shares no content term with the query and is linked
/// to it only through a bridging entity). Case chunks are cited heavily and
/// make up 10% of the corpus; the rest is lightly cited filler. Gold answers
/// carry a URL from the gold chunk. Deterministic under seed.
SynthData synth_corpus(std::uint64_t seed, std::size_t size, double hop_fraction);

void write_synth(const SynthData& data, const std::filesystem::path& dir);

// --- Evaluation -------------------------------------------------------------

struct CaseResult {
  std::string case_id;
  std::string answer;
  std::string raw_answer;
  std::vector<std::string> evidence_ids;
  bool hallucinated = false;
  bool raw_hallucinated = false;
  double rouge_l = 0.0;
  std::vector<GuardrailEvent> guardrail_events;
  QATimings timings;
};

struct EvalReport {
  std::vector<CaseResult> results;
  double hallucination_rate = 0.0;
  /// URL-hallucination rate of the generator output before the guardrail.
  double unguarded_hallucination_rate = 0.0;
  double mean_rouge_l = 0.0;
  RecallMetrics recall;

  nlohmann::json summary_json() const;
};

/// Runs every case through the pipeline; hallucination verdicts come from
/// the URL oracle on both the guarded answer and the raw generator output.
EvalReport run_eval(const QAPipeline& pipeline, std::span<const EvalCase> cases);

}  // namespace groundqa
