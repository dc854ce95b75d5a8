#include <doctest.h>

#include <random>
#include <set>

#include "groundqa/corpus_store.h"
#include "groundqa/graph.h"

using namespace groundqa;

namespace {

struct MapLookup {
  std::map<std::string, KnowledgeChunk> chunks;

  void put(const std::string& id, const std::string& text) { chunks[id] = KnowledgeChunk{id, text, {}, "", 0}; }
  ChunkLookup fn() const {
    return [this](const std::string& id) -> std::optional<KnowledgeChunk> {
      auto it = chunks.find(id);
      if (it == chunks.end()) return std::nullopt;
      return it->second;
    };
  }
  HighCitationSnapshot snapshot() const {
    HighCitationSnapshot s;
    for (const auto& [id, c] : chunks) s.chunk_ids.push_back(id);
    return s;
  }
};

class FailingExtractor final : public EntityExtractor {
 public:
  Extraction extract(const KnowledgeChunk& chunk) const override {
    if (chunk.id == "bad") throw std::runtime_error("model refused");
    return inner.extract(chunk);
  }
  GazetteerExtractor inner{{"Alpha", "Beta"}};
};

}  // namespace

TEST_CASE("harvest keeps mid-sentence capitalized runs and quoted phrases") {
  std::vector<KnowledgeChunk> chunks{
      {"a", "Payments for the Ads Console are handled by Kelvora Billing.", {}, "", 0},
      {"b", "The Smart Bidding feature uses \"target cost per action\" goals.", {}, "", 0},
      {"c", "Refunds go to https://Help.Example.com/Refunds quickly. Contact X now.", {}, "", 0},
  };
  auto terms = GazetteerExtractor::harvest_terms(chunks);
  std::set<std::string> got(terms.begin(), terms.end());
  CHECK(got.count("ads console"));
  CHECK(got.count("kelvora billing"));
  CHECK(got.count("smart bidding"));  // "The" dropped
  CHECK(got.count("target cost per action"));
  CHECK_FALSE(got.count("payments"));  // sentence-initial
  CHECK_FALSE(got.count("refunds"));
  CHECK_FALSE(got.count("help"));  // inside a URL
  CHECK_FALSE(got.count("x"));     // single character
}

TEST_CASE("gazetteer extraction emits co-occurrence relations") {
  GazetteerExtractor ex({"Ads Console", "Kelvora", "billing"});
  KnowledgeChunk c{"k1", "Kelvora uses the ads console for Billing.", {}, "", 0};
  auto out = ex.extract(c);
  CHECK(out.entities == std::vector<std::string>{"ads console", "billing", "kelvora"});
  CHECK(out.relations.size() == 3);
  for (const auto& r : out.relations) {
    CHECK(r.evidence_chunk == "k1");
    CHECK(r.label == "co-occurs");
  }
}

TEST_CASE("build_graph records entities, relations and titles") {
  MapLookup db;
  db.put("c1", "Alpha works with Beta. More text.");
  db.put("c2", "Beta reports to Gamma.");
  db.put("c3", "Nothing here.");
  GazetteerExtractor ex({"Alpha", "Beta", "Gamma"});
  auto g = build_graph(db.snapshot(), db.fn(), ex);
  CHECK(g.entities.size() == 3);
  CHECK(g.relations.size() == 2);
  CHECK(g.entities.at("beta").chunk_ids == std::set<std::string>{"c1", "c2"});
  CHECK(g.chunk_titles.at("c1") == "Alpha works with Beta.");
  CHECK(g.neighbors("beta") == std::vector<std::string>{"alpha", "gamma"});
}

TEST_CASE("unknown snapshot id throws") {
  MapLookup db;
  db.put("c1", "Alpha.");
  HighCitationSnapshot s{{"c1", "missing"}, 10, 0};
  CHECK_THROWS_AS(build_graph(s, db.fn(), GazetteerExtractor({"Alpha"})), UnknownChunk);
}

TEST_CASE("extractor failure is a diagnostic, not an abort") {
  MapLookup db;
  db.put("good", "Alpha meets Beta.");
  db.put("bad", "Alpha again.");
  auto g = build_graph(db.snapshot(), db.fn(), FailingExtractor{});
  CHECK(g.diagnostics.size() == 1);
  CHECK(g.entities.at("alpha").chunk_ids == std::set<std::string>{"good"});
}

TEST_CASE("barbell graph splits into its two cliques") {
  // Two K4 cliques joined by the single edge 3-4. Ground truth is the clique
  // membership itself.
  WeightedAdjacency adj(8);
  auto link = [&](int a, int b) {
    adj[static_cast<std::size_t>(a)].push_back({b, 1.0});
    adj[static_cast<std::size_t>(b)].push_back({a, 1.0});
  };
  for (int base : {0, 4}) {
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) link(base + i, base + j);
    }
  }
  link(3, 4);
  std::vector<std::string> keys;
  for (int i = 0; i < 8; ++i) keys.push_back("n" + std::to_string(i));
  auto labels = label_propagation(adj, keys, 42);
  for (int i = 1; i < 4; ++i) CHECK(labels[static_cast<std::size_t>(i)] == labels[0]);
  for (int i = 5; i < 8; ++i) CHECK(labels[static_cast<std::size_t>(i)] == labels[4]);
  CHECK(labels[0] != labels[4]);
}

TEST_CASE("label propagation is deterministic per seed") {
  std::mt19937_64 rng(11);
  WeightedAdjacency adj(30);
  std::vector<std::string> keys;
  for (int i = 0; i < 30; ++i) keys.push_back("k" + std::to_string(i));
  for (int e = 0; e < 60; ++e) {
    int a = static_cast<int>(rng() % 30), b = static_cast<int>(rng() % 30);
    if (a == b) continue;
    adj[static_cast<std::size_t>(a)].push_back({b, 1.0});
    adj[static_cast<std::size_t>(b)].push_back({a, 1.0});
  }
  CHECK(label_propagation(adj, keys, 42) == label_propagation(adj, keys, 42));
}

TEST_CASE("community hierarchy nests and summaries follow snapshot order") {
  MapLookup db;
  db.put("c1", "Alpha works with Beta. Tail.");
  db.put("c2", "Beta and Alpha again.");
  db.put("c3", "Gamma meets Delta.");
  GazetteerExtractor ex({"Alpha", "Beta", "Gamma", "Delta"});
  HighCitationSnapshot snap{{"c2", "c1", "c3"}, 100, 0};
  auto g = build_graph(snap, db.fn(), ex);
  const auto& h = g.communities;
  REQUIRE(h.levels.size() == 2);
  const auto& l0 = h.levels[0];
  CHECK(l0.at("alpha") == l0.at("beta"));
  CHECK(l0.at("gamma") == l0.at("delta"));
  CHECK(l0.at("alpha") != l0.at("gamma"));
  // level 1 never splits a level-0 community
  CHECK(h.levels[1].at("alpha") == h.levels[1].at("beta"));
  CHECK(h.summaries[0].at(l0.at("alpha")) == "Beta and Alpha again. Alpha works with Beta.");
}

TEST_CASE("graph_retrieve scores by hop distance") {
  MapLookup db;
  // First sentences carry no query term, so no summary bonus applies.
  db.put("bridge", "Routing note. Billing for Kelvora runs through Mintaro.");
  db.put("gold", "Policy note. Mintaro accounts settle within 30 days.");
  db.put("far", "Audit note. Zentor handles Mintaro audits.");
  db.put("other", "Misc note. Unrelated Quorn text.");
  GazetteerExtractor ex({"Kelvora", "Mintaro", "Zentor", "Quorn"});
  auto g = build_graph(db.snapshot(), db.fn(), ex);
  auto hits = graph_retrieve("Kelvora payment deadline?", g, 2, 10);
  std::map<std::string, double> s;
  for (const auto& h : hits) s[h.chunk_id] = h.score;
  CHECK(s.size() == 3);
  CHECK(s.at("bridge") == doctest::Approx(1.0 + 0.5));
  CHECK(s.at("gold") == doctest::Approx(0.5));
  CHECK(s.at("far") == doctest::Approx(0.5 + 1.0 / 3.0));
  CHECK(hits.front().chunk_id == "bridge");

  auto one = graph_retrieve("Kelvora payment deadline?", g, 1, 10);
  CHECK(one.size() == 3);  // hop-1 Mintaro still attaches gold and far
  CHECK(graph_retrieve("nothing known", g, 2, 10).empty());
  CHECK_THROWS(graph_retrieve("Kelvora", g, 0, 10));
  CHECK_THROWS(graph_retrieve("Kelvora", g, 2, 0));
}

TEST_CASE("summary term overlap adds the community bonus") {
  MapLookup db;
  db.put("c1", "Refund policy applies. It covers Kelvora accounts.");
  GazetteerExtractor ex({"Kelvora"});
  auto g = build_graph(db.snapshot(), db.fn(), ex);
  auto with = graph_retrieve("Kelvora refund", g, 2, 10);
  auto without = graph_retrieve("Kelvora", g, 2, 10);
  REQUIRE(with.size() == 1);
  CHECK(with[0].score == doctest::Approx(without[0].score + 0.25));
}

TEST_CASE("graph JSON is canonical and rebuilds identically") {
  MapLookup db;
  db.put("c1", "Alpha works with Beta.");
  db.put("c2", "Gamma and Beta.");
  GazetteerExtractor ex({"Alpha", "Beta", "Gamma"});
  auto a = build_graph(db.snapshot(), db.fn(), ex).to_json().dump();
  auto b = build_graph(db.snapshot(), db.fn(), ex).to_json().dump();
  CHECK(a == b);
}

TEST_CASE("incremental update equals a rebuild over random edit sequences") {
  std::mt19937_64 rng(23);
  const std::vector<std::string> names{"Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta", "Eta", "Theta"};
  GazetteerExtractor ex(names);
  auto random_text = [&] {
    std::string t = "Note";
    const int k = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < k; ++i) t += " about " + names[rng() % names.size()];
    return t + ".";
  };
  for (int trial = 0; trial < 10; ++trial) {
    MapLookup db;
    const int n = 5 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) db.put("c" + std::to_string(i), random_text());
    auto graph = build_graph(db.snapshot(), db.fn(), ex);
    for (int step = 0; step < 50; ++step) {
      const auto id = "c" + std::to_string(rng() % 50);
      switch (rng() % 3) {
        case 0: db.put(id, random_text()); break;                    // add or edit
        case 1: if (db.chunks.size() > 1) db.chunks.erase(id); break;  // remove
        default: break;                                               // no-op edit
      }
      auto snap = db.snapshot();
      graph = incremental_update(graph, snap, db.fn(), ex);
      auto rebuilt = build_graph(snap, db.fn(), ex);
      REQUIRE(graph.to_json() == rebuilt.to_json());
    }
  }
}
