#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "groundqa/common.h"
#include "groundqa/corpus_store.h"
#include "groundqa/text.h"

namespace groundqa {

// --- Query rewriting --------------------------------------------------------

/// Original query first, then at most three distinct rewrites.
struct QueryBundle {
  static constexpr std::size_t kMaxRewrites = 3;

  std::string original;
  std::vector<std::string> rewrites;

  std::size_t size() const { return 1 + rewrites.size(); }
  std::vector<std::string> all() const;
};

/// External rewriting client: {query} -> {rewrites[3]}. Throws ClientError.
class QueryRewriter {
 public:
  virtual ~QueryRewriter() = default;
  virtual std::vector<std::string> rewrite(const std::string& query) = 0;
};

/// Never fails: a rewriter error or timeout degrades to the original-only
/// bundle and appends a DegradationEvent.
QueryBundle rewrite_query(const std::string& query, std::shared_ptr<QueryRewriter> rewriter,
                          std::chrono::milliseconds timeout, std::vector<DegradationEvent>* events = nullptr);

// --- Lexical (BM25) ---------------------------------------------------------

struct Posting {
  std::string chunk_id;
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

class LexicalIndex {
 public:
  static LexicalIndex build(std::span<const KnowledgeChunk> chunks, Tokenizer tokenizer = tokenize);

  /// term -> postings sorted by chunk id
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
  const std::map<std::string, std::size_t>& doc_lengths() const { return doc_lengths_; }
  double avg_doc_len() const { return avg_doc_len_; }
  std::size_t doc_count() const { return doc_lengths_.size(); }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::vector<Posting>> postings_;
  std::map<std::string, std::size_t> doc_lengths_;
  double avg_doc_len_ = 0.0;
  Tokenizer tokenizer_ = tokenize;
};

/// IDF(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
double bm25_idf(std::size_t doc_count, std::size_t df);

/// BM25 over the distinct query terms. Zero-score documents are dropped;
/// ties broken by ascending chunk id. Throws EmptyIndex.
std::vector<ScoredChunk> lexical_retrieve(std::string_view query, const LexicalIndex& index, std::size_t k,
                                          const Bm25Params& params = {});

// --- Dense ------------------------------------------------------------------

/// External embedding client: {text} -> {vector}. Throws ClientError.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) = 0;
};

/// Feature-hashed bag of words, L2-normalized. Deterministic.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dims = 256) : dims_(dims) {}
  std::vector<double> embed(std::string_view text) override;
  std::size_t dims() const { return dims_; }

 private:
  std::size_t dims_;
};

struct EmbeddingRecord {
  std::string chunk_id;
  std::vector<double> vector;  // unit norm
};

double cosine(std::span<const double> a, std::span<const double> b);

/// Throws ClientError when the embedder fails or returns ragged dimensions.
std::vector<EmbeddingRecord> embed_chunks(std::span<const KnowledgeChunk> chunks, Embedder& embedder);

/// Exhaustive cosine top-k (positive similarities only). Embedder failure
/// degrades to an empty result plus an event.
std::vector<ScoredChunk> dense_retrieve(std::string_view query, Embedder& embedder,
                                        std::span<const EmbeddingRecord> records, std::size_t k,
                                        std::vector<DegradationEvent>* events = nullptr);

// --- Fusion -----------------------------------------------------------------

inline constexpr double kRrfConstant = 60.0;

/// Reciprocal rank fusion: score(c) = sum over lists of 1/(60 + rank_c),
/// ranks 1-based, first occurrence per list. Descending, ties by id, top-k.
std::vector<ScoredChunk> rrf_fuse(std::span<const std::vector<ScoredChunk>> lists, std::size_t k,
                                  Channel tag);

std::vector<ScoredChunk> fuse(const std::vector<ScoredChunk>& lexical, const std::vector<ScoredChunk>& dense,
                              std::size_t k);

// --- Channel ----------------------------------------------------------------

enum class HybridMode { lexical, dense, hybrid };

/// Traditional retrieval channel. Each bundle query is retrieved
/// independently per sub-channel (concurrently), the per-query lists are
/// RRF-fused per sub-channel, and the lexical and dense lists are fused last.
class HybridRetriever {
 public:
  HybridRetriever(LexicalIndex lexical, std::vector<EmbeddingRecord> records, std::shared_ptr<Embedder> embedder,
                  std::size_t k = 10);

  std::vector<ScoredChunk> retrieve(const QueryBundle& bundle, HybridMode mode = HybridMode::hybrid,
                                    std::vector<DegradationEvent>* events = nullptr) const;

  const LexicalIndex& lexical() const { return lexical_; }
  std::size_t k() const { return k_; }

 private:
  LexicalIndex lexical_;
  std::vector<EmbeddingRecord> records_;
  std::shared_ptr<Embedder> embedder_;
  std::size_t k_;
};

}  // namespace groundqa
