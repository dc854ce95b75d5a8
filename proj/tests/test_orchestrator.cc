#include <doctest.h>

#include <thread>

#include "groundqa/orchestrator.h"

using namespace groundqa;
using namespace std::chrono_literals;

namespace {

Candidate cand(const std::string& id, const std::string& text = "") { return {id, text.empty() ? "text of " + id : text, 0.0, {}}; }

class FixedChannel final : public RetrievalChannel {
 public:
  FixedChannel(std::vector<ScoredChunk> items, std::chrono::milliseconds delay = 0ms, bool fail = false)
      : items_(std::move(items)), delay_(delay), fail_(fail) {}
  std::vector<ScoredChunk> retrieve(const QueryBundle&) override {
    std::this_thread::sleep_for(delay_);
    if (fail_) throw std::runtime_error("channel exploded");
    return items_;
  }

 private:
  std::vector<ScoredChunk> items_;
  std::chrono::milliseconds delay_;
  bool fail_;
};

class ScoreReranker final : public Reranker {
 public:
  explicit ScoreReranker(std::vector<double> s, std::chrono::milliseconds delay = 0ms) : s_(std::move(s)), delay_(delay) {}
  std::vector<double> score(const std::string&, const std::vector<std::string>&) override {
    std::this_thread::sleep_for(delay_);
    return s_;
  }

 private:
  std::vector<double> s_;
  std::chrono::milliseconds delay_;
};

ChunkLookup text_lookup() {
  return [](const std::string& id) -> std::optional<KnowledgeChunk> {
    return KnowledgeChunk{id, "body " + id, {}, "", 0};
  };
}

}  // namespace

TEST_CASE("merge_dedup: RRF across channels with provenance") {
  std::vector<ChannelOutput> lists{
      {Channel::graph, {cand("a"), cand("b")}},
      {Channel::hybrid, {cand("b"), cand("c"), cand("b")}},
  };
  auto merged = merge_dedup(lists);
  REQUIRE(merged.size() == 3);
  CHECK(merged[0].chunk_id == "b");
  CHECK(merged[0].score == doctest::Approx(1.0 / 62 + 1.0 / 61));
  CHECK(merged[0].provenance == std::vector<Channel>{Channel::graph, Channel::hybrid});
  CHECK(merged[1].chunk_id == "a");
  CHECK(merged[2].chunk_id == "c");
}

TEST_CASE("merge_dedup: id-less passages dedup by content") {
  std::vector<ChannelOutput> lists{
      {Channel::graph, {cand("", "same passage")}},
      {Channel::hybrid, {cand("", "same passage"), cand("", "other passage")}},
  };
  auto merged = merge_dedup(lists);
  CHECK(merged.size() == 2);
  CHECK(merged[0].text == "same passage");
  CHECK(merged[0].provenance.size() == 2);
}

TEST_CASE("rerank reorders stably and keeps top k") {
  std::vector<Candidate> in{cand("a"), cand("b"), cand("c"), cand("d")};
  auto out = rerank("q", in, std::make_shared<ScoreReranker>(std::vector<double>{0.1, 0.9, 0.5, 0.9}), 3, 500ms);
  REQUIRE(out.size() == 3);
  CHECK(out[0].chunk_id == "b");
  CHECK(out[1].chunk_id == "d");
  CHECK(out[2].chunk_id == "c");
}

TEST_CASE("rerank failures keep the incoming order") {
  std::vector<Candidate> in{cand("a"), cand("b"), cand("c")};
  std::vector<DegradationEvent> events;
  auto wrong = rerank("q", in, std::make_shared<ScoreReranker>(std::vector<double>{1.0}), 10, 500ms, &events);
  CHECK(wrong[0].chunk_id == "a");
  auto slow = rerank("q", in, std::make_shared<ScoreReranker>(std::vector<double>{0, 1, 2}, 300ms), 10, 20ms, &events);
  CHECK(slow[0].chunk_id == "a");
  auto nan = rerank("q", in, std::make_shared<ScoreReranker>(std::vector<double>{0, NAN, 2}), 10, 500ms, &events);
  CHECK(nan[0].chunk_id == "a");
  CHECK(events.size() == 3);
  CHECK(rerank("q", in, nullptr, 2, 10ms).size() == 2);
}

TEST_CASE("truncate_to_budget keeps the longest fitting prefix") {
  std::vector<Candidate> in{cand("a", "one two three"), cand("b", "four five"), cand("c", "six")};
  auto d = truncate_to_budget(in, 5);
  CHECK(d.ids() == std::vector<std::string>{"a", "b"});
  CHECK(d.token_count == 5);
  CHECK(d.items[1].tokens == 2);

  std::vector<DegradationEvent> events;
  auto none = truncate_to_budget(in, 2, whitespace_token_count, &events);
  CHECK(none.empty());
  CHECK(events.size() == 1);
  CHECK(truncate_to_budget(in, 0).empty());
}

TEST_CASE("routing: simple queries skip the graph, hybrid always on") {
  OrchestratorConfig cfg;
  CHECK_FALSE(route("refund policy", 0, cfg).use_graph);
  CHECK(route("refund policy", 1, cfg).use_graph);
  CHECK(route("refund policy window for disputed invoices", 0, cfg).use_graph);
  for (auto mode : {RoutingMode::automatic, RoutingMode::both, RoutingMode::hybrid_only}) {
    cfg.routing = mode;
    CHECK(route("x", 0, cfg).use_hybrid);
  }
  cfg.routing = RoutingMode::graph_only;
  CHECK_FALSE(route("x", 0, cfg).use_hybrid);
  CHECK_THROWS(route("", 0, cfg));
}

TEST_CASE("orchestrator merges both channels into evidence") {
  Orchestrator::Parts parts;
  parts.graph = std::make_shared<FixedChannel>(std::vector<ScoredChunk>{{"g1", 1, Channel::graph}, {"s", 1, Channel::graph}});
  parts.hybrid = std::make_shared<FixedChannel>(std::vector<ScoredChunk>{{"s", 1, Channel::hybrid}, {"h1", 1, Channel::hybrid}});
  parts.lookup = text_lookup();
  OrchestratorConfig cfg;
  cfg.routing = RoutingMode::both;
  Orchestrator orch(parts, cfg);
  auto r = orch.retrieve("anything at all here");
  CHECK(r.evidence.ids() == std::vector<std::string>{"s", "g1", "h1"});
  CHECK(r.evidence.items[0].text == "body s");
  CHECK(r.events.empty());
  CHECK(r.channels.size() == 2);
}

TEST_CASE("orchestrator degrades to the surviving channel") {
  Orchestrator::Parts parts;
  parts.graph = std::make_shared<FixedChannel>(std::vector<ScoredChunk>{{"g1", 1, Channel::graph}}, 0ms, true);
  parts.hybrid = std::make_shared<FixedChannel>(std::vector<ScoredChunk>{{"h1", 1, Channel::hybrid}});
  parts.lookup = text_lookup();
  OrchestratorConfig cfg;
  cfg.routing = RoutingMode::both;
  Orchestrator orch(parts, cfg);
  auto r = orch.retrieve("q");
  CHECK(r.evidence.ids() == std::vector<std::string>{"h1"});
  REQUIRE(r.events.size() == 1);
  CHECK(r.events[0].stage == "graph");
  CHECK_FALSE(r.channels[0].timed_out);
}

TEST_CASE("orchestrator honours per-channel timeouts") {
  Orchestrator::Parts parts;
  parts.graph = std::make_shared<FixedChannel>(std::vector<ScoredChunk>{{"g1", 1, Channel::graph}});
  parts.hybrid = std::make_shared<FixedChannel>(std::vector<ScoredChunk>{{"h1", 1, Channel::hybrid}}, 400ms);
  parts.lookup = text_lookup();
  OrchestratorConfig cfg;
  cfg.routing = RoutingMode::both;
  cfg.hybrid_timeout_ms = 50;
  Orchestrator orch(parts, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  auto r = orch.retrieve("q");
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  CHECK(ms < 50 + 50);
  CHECK(r.evidence.ids() == std::vector<std::string>{"g1"});
  CHECK(r.channels[1].timed_out);
}

TEST_CASE("graph channel swap is visible to later queries") {
  auto g1 = std::make_shared<KnowledgeGraph>();
  GraphChannel ch(g1, 2, 10);
  CHECK(ch.retrieve(QueryBundle{"x", {}}).empty());
  auto g2 = std::make_shared<const KnowledgeGraph>();
  ch.swap(g2);
  CHECK(ch.graph() == g2);
}
