#include "groundqa/corpus_store.h"

#include <algorithm>
#include <fstream>

#include "groundqa/url.h"

namespace groundqa {

using nlohmann::json;

namespace {

constexpr const char* kChunkJournal = "chunks.jsonl";
constexpr const char* kCitationJournal = "citations.jsonl";

void append_line(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open " + path.string() + " for append");
  out << j.dump() << '\n';
}

}  // namespace

ChunkRecord chunk_record_from_json(const json& j, std::size_t index) {
  if (!j.is_object()) throw MalformedRecord(index, "not a JSON object");
  auto id = j.find("id");
  auto text = j.find("text");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    throw MalformedRecord(index, "missing id");
  }
  if (text == j.end() || !text->is_string() || text->get<std::string>().empty()) {
    throw MalformedRecord(index, "missing text");
  }
  ChunkRecord r;
  r.id = id->get<std::string>();
  r.text = text->get<std::string>();
  r.source_doc = j.value("source_doc", std::string{});
  if (auto ts = j.find("updated_at"); ts != j.end() && ts->is_number_integer()) {
    r.updated_at = ts->get<Timestamp>();
  }
  return r;
}

json chunk_record_to_json(const ChunkRecord& r) {
  return json{{"id", r.id}, {"text", r.text}, {"source_doc", r.source_doc}, {"updated_at", r.updated_at}};
}

std::size_t high_citation_count(int percent, std::size_t total) {
  if (percent <= 0) return 0;
  if (percent >= 100) return total;
  return (static_cast<std::size_t>(percent) * total + 99) / 100;
}

CorpusStore::CorpusStore(StoreOptions options) : options_(std::move(options)) {
  if (options_.window_length <= 0) throw Error("window_length must be positive");
  if (options_.directory) {
    std::filesystem::create_directories(*options_.directory);
    replay_journal();
  }
}

void CorpusStore::replay_journal() {
  auto dir = *options_.directory;
  std::string line;
  if (std::ifstream in(dir / kChunkJournal); in) {
    std::vector<ChunkRecord> records;
    std::size_t i = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      records.push_back(chunk_record_from_json(json::parse(line), i++));
    }
    ingest_locked(records);
  }
  if (std::ifstream in(dir / kCitationJournal); in) {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = json::parse(line);
      cite_locked(j.at("chunk_id").get<std::string>(), j.at("ts").get<Timestamp>());
    }
  }
}

IngestStats CorpusStore::ingest_chunks(std::span<const ChunkRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id.empty()) throw MalformedRecord(i, "missing id");
    if (records[i].text.empty()) throw MalformedRecord(i, "missing text");
  }
  std::unique_lock lock(mutex_);
  auto stats = ingest_locked(records);
  if (options_.directory) {
    for (const auto& r : records) append_line(*options_.directory / kChunkJournal, chunk_record_to_json(r));
  }
  return stats;
}

IngestStats CorpusStore::ingest_locked(std::span<const ChunkRecord> records) {
  IngestStats stats;
  for (const auto& r : records) {
    KnowledgeChunk chunk{r.id, r.text, extract_urls(r.text), r.source_doc, r.updated_at};
    auto [it, inserted] = chunks_.insert_or_assign(r.id, std::move(chunk));
    (inserted ? stats.added : stats.replaced) += 1;
  }
  return stats;
}

std::uint64_t CorpusStore::record_citation(const std::string& chunk_id, Timestamp at) {
  std::unique_lock lock(mutex_);
  auto count = cite_locked(chunk_id, at);
  if (options_.directory) {
    append_line(*options_.directory / kCitationJournal, json{{"chunk_id", chunk_id}, {"ts", at}});
  }
  return count;
}

std::uint64_t CorpusStore::cite_locked(const std::string& chunk_id, Timestamp at) {
  if (!chunks_.contains(chunk_id)) throw UnknownChunk(chunk_id);
  const Timestamp len = options_.window_length;
  if (at >= window_start_ + len) {
    close_window_locked();
    window_start_ += ((at - window_start_) / len) * len;
  }
  return ++heat_[chunk_id];
}

void CorpusStore::close_window_locked() {
  bool any = std::any_of(heat_.begin(), heat_.end(), [](const auto& kv) { return kv.second > 0; });
  if (any) ranking_heat_ = heat_;
  heat_.clear();
}

HighCitationSnapshot CorpusStore::rank_locked(const HeatMap& heat, int percent, Timestamp now) const {
  if (percent < 0 || percent > 100) throw Error("percent must be in [0, 100]");
  struct Row {
    std::uint64_t heat;
    Timestamp updated_at;
    const std::string* id;
  };
  std::vector<Row> rows;
  rows.reserve(chunks_.size());
  for (const auto& [id, chunk] : chunks_) {
    auto it = heat.find(id);
    rows.push_back({it == heat.end() ? 0 : it->second, chunk.updated_at, &id});
  }
  std::size_t k = high_citation_count(percent, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end(),
                    [](const Row& a, const Row& b) {
                      if (a.heat != b.heat) return a.heat > b.heat;
                      if (a.updated_at != b.updated_at) return a.updated_at > b.updated_at;
                      return *a.id < *b.id;
                    });
  HighCitationSnapshot snap;
  snap.percent = percent;
  snap.created_at = now;
  snap.chunk_ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) snap.chunk_ids.push_back(*rows[i].id);
  return snap;
}

HighCitationSnapshot CorpusStore::select_high_citation(int percent, Timestamp now) const {
  std::shared_lock lock(mutex_);
  return rank_locked(heat_, percent, now);
}

HighCitationSnapshot CorpusStore::rolling_update(int percent, Timestamp now) {
  HighCitationSnapshot snap;
  {
    std::unique_lock lock(mutex_);
    close_window_locked();
    window_start_ = now;
    snap = rank_locked(ranking_heat_, percent, now);
  }
  auto published = std::make_shared<const HighCitationSnapshot>(snap);
  std::lock_guard guard(snapshot_mutex_);
  active_ = std::move(published);
  return snap;
}

std::shared_ptr<const HighCitationSnapshot> CorpusStore::active_snapshot() const {
  std::lock_guard guard(snapshot_mutex_);
  return active_;
}

std::optional<KnowledgeChunk> CorpusStore::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = chunks_.find(id);
  if (it == chunks_.end()) return std::nullopt;
  return it->second;
}

std::vector<KnowledgeChunk> CorpusStore::chunks() const {
  std::shared_lock lock(mutex_);
  std::vector<KnowledgeChunk> out;
  out.reserve(chunks_.size());
  for (const auto& [id, c] : chunks_) out.push_back(c);
  return out;
}

std::vector<CitationHeat> CorpusStore::heat_report() const {
  std::shared_lock lock(mutex_);
  std::vector<CitationHeat> out;
  out.reserve(chunks_.size());
  for (const auto& [id, c] : chunks_) {
    auto it = heat_.find(id);
    out.push_back({id, it == heat_.end() ? 0 : it->second, window_start_});
  }
  return out;
}

std::size_t CorpusStore::size() const {
  std::shared_lock lock(mutex_);
  return chunks_.size();
}

Timestamp CorpusStore::window_start() const {
  std::shared_lock lock(mutex_);
  return window_start_;
}

}  // namespace groundqa
