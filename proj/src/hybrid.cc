#include "groundqa/hybrid.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "groundqa/deadline.h"

namespace groundqa {

using nlohmann::json;

namespace {

void note(std::vector<DegradationEvent>* events, std::string stage, std::string reason) {
  if (events) events->push_back({std::move(stage), std::move(reason)});
}

void sort_scored(std::vector<ScoredChunk>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
    return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
  });
}

}  // namespace

std::vector<std::string> QueryBundle::all() const {
  std::vector<std::string> out{original};
  out.insert(out.end(), rewrites.begin(), rewrites.end());
  return out;
}

QueryBundle rewrite_query(const std::string& query, std::shared_ptr<QueryRewriter> rewriter,
                          std::chrono::milliseconds timeout, std::vector<DegradationEvent>* events) {
  if (query.empty()) throw Error("query must be non-empty");
  QueryBundle bundle{query, {}};
  if (!rewriter) return bundle;

  auto result = run_with_deadline([rewriter, query] { return rewriter->rewrite(query); }, timeout);
  if (!result.ok()) {
    note(events, "rewrite", result.error);
    return bundle;
  }
  std::unordered_set<std::string> seen{query};
  for (auto& r : *result.value) {
    if (bundle.rewrites.size() == QueryBundle::kMaxRewrites) break;
    if (r.empty() || !seen.insert(r).second) continue;
    bundle.rewrites.push_back(std::move(r));
  }
  return bundle;
}

// ---------------------------------------------------------------------------

LexicalIndex LexicalIndex::build(std::span<const KnowledgeChunk> chunks, Tokenizer tokenizer) {
  LexicalIndex index;
  index.tokenizer_ = std::move(tokenizer);
  std::map<std::string, std::map<std::string, std::uint32_t>> tf;  // term -> chunk -> tf
  for (const auto& c : chunks) {
    auto toks = index.tokenizer_(c.text);
    index.doc_lengths_[c.id] = toks.size();
    for (const auto& t : toks) ++tf[t][c.id];
  }
  for (auto& [term, docs] : tf) {
    auto& list = index.postings_[term];
    for (auto& [id, n] : docs) list.push_back({id, n});
  }
  double total = 0.0;
  for (const auto& [id, len] : index.doc_lengths_) total += static_cast<double>(len);
  index.avg_doc_len_ = index.doc_lengths_.empty() ? 0.0 : total / static_cast<double>(index.doc_lengths_.size());
  return index;
}

json LexicalIndex::to_json() const {
  json p = json::object();
  for (const auto& [term, list] : postings_) {
    json arr = json::array();
    for (const auto& posting : list) arr.push_back({posting.chunk_id, posting.tf});
    p[term] = std::move(arr);
  }
  return json{{"postings", p}, {"doc_lengths", doc_lengths_}, {"avg_doc_len", avg_doc_len_},
              {"doc_count", doc_count()}};
}

double bm25_idf(std::size_t doc_count, std::size_t df) {
  const double n = static_cast<double>(doc_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

std::vector<ScoredChunk> lexical_retrieve(std::string_view query, const LexicalIndex& index, std::size_t k,
                                          const Bm25Params& params) {
  if (k < 1) throw Error("k must be >= 1");
  if (index.doc_count() == 0) throw EmptyIndex();
  auto qtoks = index.tokenizer()(query);
  std::set<std::string> terms(qtoks.begin(), qtoks.end());

  std::unordered_map<std::string, double> scores;
  const double avgdl = index.avg_doc_len();
  for (const auto& t : terms) {
    auto it = index.postings().find(t);
    if (it == index.postings().end()) continue;
    const double idf = bm25_idf(index.doc_count(), it->second.size());
    for (const auto& p : it->second) {
      const double tf = p.tf;
      const double dl = static_cast<double>(index.doc_lengths().at(p.chunk_id));
      const double norm = avgdl > 0.0 ? dl / avgdl : 0.0;
      scores[p.chunk_id] += idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
    }
  }
  std::vector<ScoredChunk> out;
  for (const auto& [id, s] : scores) {
    if (s > 0.0) out.push_back({id, s, Channel::lexical});
  }
  sort_scored(out);
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> HashingEmbedder::embed(std::string_view text) {
  std::vector<double> v(dims_, 0.0);
  for (const auto& t : tokenize(text)) v[fnv1a64(t) % dims_] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<EmbeddingRecord> embed_chunks(std::span<const KnowledgeChunk> chunks, Embedder& embedder) {
  std::vector<EmbeddingRecord> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) {
    auto v = embedder.embed(c.text);
    if (!out.empty() && v.size() != out.front().vector.size()) {
      throw ClientError("embedder returned ragged dimensions");
    }
    out.push_back({c.id, std::move(v)});
  }
  return out;
}

std::vector<ScoredChunk> dense_retrieve(std::string_view query, Embedder& embedder,
                                        std::span<const EmbeddingRecord> records, std::size_t k,
                                        std::vector<DegradationEvent>* events) {
  if (records.empty()) return {};
  std::vector<double> q;
  try {
    q = embedder.embed(query);
  } catch (const std::exception& e) {
    note(events, "dense", std::string("embedder failure: ") + e.what());
    return {};
  }
  if (q.size() != records.front().vector.size()) {
    note(events, "dense", "embedder failure: query dimension mismatch");
    return {};
  }
  std::vector<ScoredChunk> out;
  for (const auto& r : records) {
    double s = cosine(q, r.vector);
    if (s > 0.0 && std::isfinite(s)) out.push_back({r.chunk_id, s, Channel::dense});
  }
  sort_scored(out);
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ScoredChunk> rrf_fuse(std::span<const std::vector<ScoredChunk>> lists, std::size_t k, Channel tag) {
  std::unordered_map<std::string, double> scores;
  for (const auto& list : lists) {
    std::unordered_set<std::string> seen;
    std::size_t rank = 0;
    for (const auto& item : list) {
      if (!seen.insert(item.chunk_id).second) continue;
      ++rank;
      scores[item.chunk_id] += 1.0 / (kRrfConstant + static_cast<double>(rank));
    }
  }
  std::vector<ScoredChunk> out;
  out.reserve(scores.size());
  for (const auto& [id, s] : scores) out.push_back({id, s, tag});
  sort_scored(out);
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<ScoredChunk> fuse(const std::vector<ScoredChunk>& lexical, const std::vector<ScoredChunk>& dense,
                              std::size_t k) {
  const std::vector<ScoredChunk> lists[] = {lexical, dense};
  return rrf_fuse(lists, k, Channel::hybrid);
}

// ---------------------------------------------------------------------------

HybridRetriever::HybridRetriever(LexicalIndex lexical, std::vector<EmbeddingRecord> records,
                                 std::shared_ptr<Embedder> embedder, std::size_t k)
    : lexical_(std::move(lexical)), records_(std::move(records)), embedder_(std::move(embedder)), k_(k) {
  if (k_ < 1) throw Error("k must be >= 1");
}

std::vector<ScoredChunk> HybridRetriever::retrieve(const QueryBundle& bundle, HybridMode mode,
                                                   std::vector<DegradationEvent>* events) const {
  struct PerQuery {
    std::vector<ScoredChunk> lexical;
    std::vector<ScoredChunk> dense;
    std::vector<DegradationEvent> events;
  };
  const bool use_lexical = mode != HybridMode::dense;
  const bool use_dense = mode != HybridMode::lexical && embedder_ != nullptr;

  auto run = [&](const std::string& q) {
    PerQuery r;
    if (use_lexical) {
      try {
        r.lexical = lexical_retrieve(q, lexical_, k_);
      } catch (const EmptyIndex&) {
        r.events.push_back({"lexical", "empty index"});
      }
    }
    if (use_dense) r.dense = dense_retrieve(q, *embedder_, records_, k_, &r.events);
    return r;
  };

  auto queries = bundle.all();
  std::vector<std::future<PerQuery>> futures;
  for (std::size_t i = 1; i < queries.size(); ++i) futures.push_back(std::async(std::launch::async, run, queries[i]));
  std::vector<PerQuery> results;
  results.push_back(run(queries.front()));
  for (auto& f : futures) results.push_back(f.get());

  std::vector<std::vector<ScoredChunk>> lex_lists, dense_lists;
  for (auto& r : results) {
    lex_lists.push_back(std::move(r.lexical));
    dense_lists.push_back(std::move(r.dense));
    if (events) events->insert(events->end(), r.events.begin(), r.events.end());
  }
  auto lex = rrf_fuse(lex_lists, k_, Channel::lexical);
  auto dense = rrf_fuse(dense_lists, k_, Channel::dense);
  switch (mode) {
    case HybridMode::lexical: return lex;
    case HybridMode::dense: return dense;
    case HybridMode::hybrid: break;
  }
  return fuse(lex, dense, k_);
}

}  // namespace groundqa
