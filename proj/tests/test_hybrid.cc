#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "groundqa/hybrid.h"

using namespace groundqa;

namespace {

std::vector<KnowledgeChunk> make_chunks(const std::vector<std::string>& texts) {
  std::vector<KnowledgeChunk> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "d%02zu", i);
    out.push_back({id, texts[i], {}, "", 0});
  }
  return out;
}

// Straight-from-the-formula BM25 over raw texts; no postings.
std::map<std::string, double> bm25_oracle(const std::vector<KnowledgeChunk>& docs, const std::string& query) {
  const double k1 = 1.2, b = 0.75;
  std::vector<std::vector<std::string>> toks;
  double total = 0;
  for (const auto& d : docs) {
    toks.push_back(tokenize(d.text));
    total += static_cast<double>(toks.back().size());
  }
  const double n = static_cast<double>(docs.size());
  const double avg = total / n;
  auto q = tokenize(query);
  std::set<std::string> terms(q.begin(), q.end());
  std::map<std::string, double> score;
  for (const auto& t : terms) {
    double df = 0;
    for (const auto& dt : toks) df += std::count(dt.begin(), dt.end(), t) > 0 ? 1 : 0;
    if (df == 0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const double tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), t));
      if (tf == 0) continue;
      const double len = static_cast<double>(toks[i].size());
      score[docs[i].id] += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg));
    }
  }
  return score;
}

class ListRewriter final : public QueryRewriter {
 public:
  explicit ListRewriter(std::vector<std::string> r, std::chrono::milliseconds delay = {}) : r_(std::move(r)), delay_(delay) {}
  std::vector<std::string> rewrite(const std::string&) override {
    std::this_thread::sleep_for(delay_);
    return r_;
  }

 private:
  std::vector<std::string> r_;
  std::chrono::milliseconds delay_;
};

class BrokenRewriter final : public QueryRewriter {
 public:
  std::vector<std::string> rewrite(const std::string&) override { throw ClientError("rewriter down"); }
};

class BrokenEmbedder final : public Embedder {
 public:
  std::vector<double> embed(std::string_view) override { throw ClientError("embedder down"); }
};

}  // namespace

TEST_CASE("bm25 idf formula") {
  CHECK(bm25_idf(10, 1) == doctest::Approx(std::log(1.0 + 9.5 / 1.5)).epsilon(1e-12));
  CHECK(bm25_idf(10, 10) > 0.0);  // never negative
}

TEST_CASE("BM25 matches the formula oracle on random corpora") {
  std::mt19937_64 rng(99);
  const std::vector<std::string> vocab{"ad", "billing", "refund", "policy", "review", "budget", "cap", "invoice",
                                       "account", "campaign", "appeal", "keyword", "creative", "pause", "limit"};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n; ++i) {
      std::string t;
      const std::size_t len = 1 + rng() % 25;
      for (std::size_t w = 0; w < len; ++w) t += vocab[rng() % vocab.size()] + " ";
      texts.push_back(t);
    }
    auto docs = make_chunks(texts);
    auto index = LexicalIndex::build(docs);
    std::string q;
    for (std::size_t w = 0; w < 1 + rng() % 4; ++w) q += vocab[rng() % vocab.size()] + " ";
    q += "unseen";

    auto oracle = bm25_oracle(docs, q);
    auto got = lexical_retrieve(q, index, 1000);
    REQUIRE(got.size() == oracle.size());
    for (const auto& s : got) {
      REQUIRE(oracle.count(s.chunk_id));
      CHECK(std::abs(s.score - oracle[s.chunk_id]) < 1e-9);
      CHECK(s.channel == Channel::lexical);
    }
    for (std::size_t i = 1; i < got.size(); ++i) {
      bool ordered = got[i - 1].score > got[i].score ||
                     (got[i - 1].score == got[i].score && got[i - 1].chunk_id < got[i].chunk_id);
      CHECK(ordered);
    }
  }
}

TEST_CASE("lexical retrieve truncates and rejects an empty index") {
  auto docs = make_chunks({"refund refund", "refund", "billing"});
  auto index = LexicalIndex::build(docs);
  auto top = lexical_retrieve("refund", index, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].chunk_id == "d00");
  CHECK(lexical_retrieve("nothing", index, 5).empty());
  CHECK_THROWS_AS(lexical_retrieve("x", LexicalIndex::build(std::vector<KnowledgeChunk>{}), 5), EmptyIndex);
}

TEST_CASE("custom tokenizer is honoured") {
  auto docs = make_chunks({"Refund-Policy", "refund policy"});
  Tokenizer ws = [](std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ' ') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  };
  auto index = LexicalIndex::build(docs, ws);
  auto hits = lexical_retrieve("Refund-Policy", index, 5);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].chunk_id == "d00");
}

TEST_CASE("hashing embedder is unit norm and deterministic") {
  HashingEmbedder e(256);
  auto v = e.embed("refund policy for ads");
  double norm = 0;
  for (double x : v) norm += x * x;
  CHECK(v.size() == 256);
  CHECK(norm == doctest::Approx(1.0));
  CHECK(v == e.embed("refund policy for ads"));
  CHECK(cosine(v, v) == doctest::Approx(1.0));
}

TEST_CASE("dense retrieve ranks the identical text first and degrades on failure") {
  auto docs = make_chunks({"refund policy details", "keyword limits", "budget caps explained"});
  auto embedder = std::make_shared<HashingEmbedder>();
  auto records = embed_chunks(docs, *embedder);
  auto hits = dense_retrieve("keyword limits", *embedder, records, 2);
  REQUIRE(!hits.empty());
  CHECK(hits[0].chunk_id == "d01");
  CHECK(hits[0].channel == Channel::dense);

  BrokenEmbedder broken;
  std::vector<DegradationEvent> events;
  CHECK(dense_retrieve("x", broken, records, 2, &events).empty());
  CHECK(events.size() == 1);
  CHECK_THROWS_AS(embed_chunks(docs, broken), ClientError);
}

TEST_CASE("RRF fusion, hand computed") {
  std::vector<ScoredChunk> a{{"x", 9, Channel::lexical}, {"y", 5, Channel::lexical}};
  std::vector<ScoredChunk> b{{"y", 0.9, Channel::dense}, {"z", 0.8, Channel::dense}, {"y", 0.1, Channel::dense}};
  auto fused = fuse(a, b, 10);
  REQUIRE(fused.size() == 3);
  CHECK(fused[0].chunk_id == "y");
  CHECK(fused[0].score == doctest::Approx(1.0 / 62 + 1.0 / 61));
  CHECK(fused[1].chunk_id == "x");
  CHECK(fused[1].score == doctest::Approx(1.0 / 61));
  CHECK(fused[2].chunk_id == "z");
  CHECK(fused[2].score == doctest::Approx(1.0 / 62));
  CHECK(fused[0].channel == Channel::hybrid);
  CHECK(fuse(a, b, 1).size() == 1);
}

TEST_CASE("RRF ties break by id") {
  std::vector<ScoredChunk> a{{"b", 1, Channel::lexical}};
  std::vector<ScoredChunk> c{{"a", 1, Channel::dense}};
  auto fused = fuse(a, c, 10);
  REQUIRE(fused.size() == 2);
  CHECK(fused[0].chunk_id == "a");
}

TEST_CASE("rewrite_query dedups, caps and degrades") {
  using namespace std::chrono_literals;
  auto b = rewrite_query("q", std::make_shared<ListRewriter>(std::vector<std::string>{"q", "r1", "r1", "", "r2", "r3", "r4"}), 500ms);
  CHECK(b.rewrites == std::vector<std::string>{"r1", "r2", "r3"});
  CHECK(b.size() == 4);

  std::vector<DegradationEvent> events;
  auto slow = rewrite_query("q", std::make_shared<ListRewriter>(std::vector<std::string>{"r"}, 300ms), 20ms, &events);
  CHECK(slow.rewrites.empty());
  CHECK(events.size() == 1);

  auto broken = rewrite_query("q", std::make_shared<BrokenRewriter>(), 500ms, &events);
  CHECK(broken.rewrites.empty());
  CHECK(events.size() == 2);
  CHECK(rewrite_query("q", nullptr, 10ms).size() == 1);
  CHECK_THROWS(rewrite_query("", nullptr, 10ms));
}

TEST_CASE("hybrid retriever fuses bundle queries and both sub-channels") {
  auto docs = make_chunks({"refund policy", "budget caps", "keyword appeal", "refund appeal window"});
  auto embedder = std::make_shared<HashingEmbedder>();
  HybridRetriever r(LexicalIndex::build(docs), embed_chunks(docs, *embedder), embedder, 3);
  QueryBundle bundle{"refund", {"appeal"}};
  auto lex = r.retrieve(bundle, HybridMode::lexical);
  std::set<std::string> ids;
  for (const auto& s : lex) ids.insert(s.chunk_id);
  CHECK(ids.count("d00"));
  CHECK(ids.count("d02"));
  CHECK(lex.front().chunk_id == "d03");  // hit by both bundle queries
  auto hyb = r.retrieve(bundle, HybridMode::hybrid);
  CHECK(hyb.size() <= 3);
  CHECK(hyb.front().chunk_id == "d03");
  for (const auto& s : hyb) CHECK(s.channel == Channel::hybrid);
}

TEST_CASE("hybrid retriever degrades to lexical when the embedder fails") {
  auto docs = make_chunks({"refund policy", "budget caps"});
  auto ok = std::make_shared<HashingEmbedder>();
  HybridRetriever r(LexicalIndex::build(docs), embed_chunks(docs, *ok), std::make_shared<BrokenEmbedder>(), 5);
  std::vector<DegradationEvent> events;
  auto out = r.retrieve(QueryBundle{"refund", {}}, HybridMode::hybrid, &events);
  REQUIRE(out.size() == 1);
  CHECK(out[0].chunk_id == "d00");
  CHECK(!events.empty());
}
