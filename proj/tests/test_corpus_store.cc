#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "groundqa/corpus_store.h"

using namespace groundqa;

namespace {

constexpr Timestamp kWeek = 7 * 24 * 3600;
constexpr Timestamp kT0 = 100 * kWeek;  // window-aligned

std::vector<ChunkRecord> records(int n, Timestamp updated = 1000) {
  std::vector<ChunkRecord> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"c" + std::to_string(100 + i), "chunk number " + std::to_string(i), "doc.md", updated + i % 3});
  }
  return out;
}

// Sort oracle: heat desc, updated_at desc, id asc; ceil(N% of total).
std::vector<std::string> oracle_top(const std::vector<ChunkRecord>& recs, const std::map<std::string, int>& heat,
                                    int percent) {
  struct Row {
    int heat;
    Timestamp updated;
    std::string id;
  };
  std::vector<Row> rows;
  for (const auto& r : recs) {
    auto it = heat.find(r.id);
    rows.push_back({it == heat.end() ? 0 : it->second, r.updated_at, r.id});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(b.heat, b.updated, a.id) < std::tie(a.heat, a.updated, b.id);
  });
  const std::size_t total = rows.size();
  std::size_t k = percent * total / 100;
  if (percent * total % 100 != 0) ++k;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(rows[i].id);
  return ids;
}

}  // namespace

TEST_CASE("ingest counts added and replaced") {
  CorpusStore store;
  auto s1 = store.ingest_chunks(records(5));
  CHECK(s1.added == 5);
  CHECK(s1.replaced == 0);
  auto s2 = store.ingest_chunks(records(2));
  CHECK(s2.added == 0);
  CHECK(s2.replaced == 2);
  CHECK(store.size() == 5);
}

TEST_CASE("ingest extracts URLs from the text") {
  CorpusStore store;
  std::vector<ChunkRecord> r{{"a", "see https://Help.X.io/a. and http://y.io", "d", 1}};
  store.ingest_chunks(r);
  auto c = store.find("a");
  REQUIRE(c);
  CHECK(c->urls == std::vector<std::string>{"https://help.x.io/a", "http://y.io"});
}

TEST_CASE("malformed records carry their index") {
  nlohmann::json bad = {{"id", "x"}, {"text", 5}};
  try {
    chunk_record_from_json(bad, 7);
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.index() == 7);
  }
  CHECK_THROWS_AS(chunk_record_from_json(nlohmann::json{{"text", "t"}}, 0), MalformedRecord);
  CHECK_NOTHROW(chunk_record_from_json(nlohmann::json{{"id", "a"}, {"text", "t"}}, 0));

  CorpusStore store;
  std::vector<ChunkRecord> r{{"a", "ok", "", 0}, {"", "no id", "", 0}};
  CHECK_THROWS_AS(store.ingest_chunks(r), MalformedRecord);
  CHECK(store.size() == 0);
}

TEST_CASE("record_citation on an unknown id throws") {
  CorpusStore store;
  store.ingest_chunks(records(2));
  CHECK_THROWS_AS(store.record_citation("nope", kT0), UnknownChunk);
}

TEST_CASE("citations in the same window accumulate") {
  CorpusStore store;
  store.ingest_chunks(records(3));
  CHECK(store.record_citation("c100", kT0) == 1);
  CHECK(store.record_citation("c100", kT0 + 10) == 2);
  CHECK(store.record_citation("c100", kT0 + kWeek - 1) == 3);
  CHECK(store.window_start() == kT0);
}

TEST_CASE("a citation past the window boundary starts a new window") {
  CorpusStore store;
  store.ingest_chunks(records(3));
  store.record_citation("c100", kT0);
  store.record_citation("c100", kT0);
  CHECK(store.record_citation("c101", kT0 + kWeek) == 1);
  CHECK(store.window_start() == kT0 + kWeek);
  auto report = store.heat_report();
  REQUIRE(report.size() == 3);
  CHECK(report[0].count == 0);  // c100 belongs to the closed window
  CHECK(report[1].count == 1);
}

TEST_CASE("select_high_citation matches the sort oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    CorpusStore store;
    const int n = 1 + static_cast<int>(rng() % 40);
    auto recs = records(n, 500);
    for (auto& r : recs) r.updated_at = static_cast<Timestamp>(rng() % 4);
    store.ingest_chunks(recs);
    std::map<std::string, int> heat;
    for (int k = 0; k < 3 * n; ++k) {
      const auto& id = recs[rng() % recs.size()].id;
      store.record_citation(id, kT0 + static_cast<Timestamp>(rng() % 1000));
      ++heat[id];
    }
    for (int percent : {0, 1, 10, 50, 100}) {
      CHECK(store.select_high_citation(percent).chunk_ids == oracle_top(recs, heat, percent));
    }
  }
}

TEST_CASE("snapshot size uses the ceiling") {
  CHECK(high_citation_count(10, 25) == 3);
  CHECK(high_citation_count(10, 30) == 3);
  CHECK(high_citation_count(1, 5) == 1);
  CHECK(high_citation_count(0, 5) == 0);
  CHECK(high_citation_count(100, 5) == 5);
  CorpusStore store;
  CHECK_THROWS_AS(store.select_high_citation(101), Error);
}

TEST_CASE("consecutive rolling updates keep the same membership") {
  CorpusStore store;
  store.ingest_chunks(records(10));
  for (int i = 0; i < 5; ++i) store.record_citation("c105", kT0 + i);
  for (int i = 0; i < 3; ++i) store.record_citation("c102", kT0 + i);
  auto a = store.rolling_update(20, kT0 + 100);
  auto b = store.rolling_update(20, kT0 + 200);
  CHECK(a.chunk_ids == std::vector<std::string>{"c105", "c102"});
  CHECK(a.chunk_ids == b.chunk_ids);
  REQUIRE(store.active_snapshot());
  CHECK(store.active_snapshot()->chunk_ids == a.chunk_ids);
  CHECK(store.active_snapshot()->created_at == kT0 + 200);
}

TEST_CASE("rolling update follows the newest window with citations") {
  CorpusStore store;
  store.ingest_chunks(records(10));
  for (int i = 0; i < 4; ++i) store.record_citation("c101", kT0 + i);
  store.rolling_update(10, kT0 + 10);
  store.record_citation("c108", kT0 + 20);
  auto snap = store.rolling_update(10, kT0 + 30);
  CHECK(snap.chunk_ids == std::vector<std::string>{"c108"});
}

TEST_CASE("store journal replays on open") {
  auto dir = std::filesystem::temp_directory_path() / "groundqa_store_test";
  std::filesystem::remove_all(dir);
  {
    CorpusStore store(StoreOptions{kWeek, dir});
    store.ingest_chunks(records(4));
    store.record_citation("c103", kT0);
    store.record_citation("c103", kT0 + 1);
  }
  CorpusStore reopened(StoreOptions{kWeek, dir});
  CHECK(reopened.size() == 4);
  CHECK(reopened.select_high_citation(25).chunk_ids == std::vector<std::string>{"c103"});
  std::filesystem::remove_all(dir);
}
