#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "groundqa/common.h"

namespace groundqa {

/// One unit of the knowledge base. urls is always extract_urls(text).
struct KnowledgeChunk {
  std::string id;
  std::string text;
  std::vector<std::string> urls;
  std::string source_doc;
  Timestamp updated_at = 0;
};

/// Raw ingest record, as read from a corpus JSONL line.
struct ChunkRecord {
  std::string id;
  std::string text;
  std::string source_doc;
  Timestamp updated_at = 0;
};

/// Throws MalformedRecord(index) when id or text is missing or not a string.
ChunkRecord chunk_record_from_json(const nlohmann::json& j, std::size_t index);
nlohmann::json chunk_record_to_json(const ChunkRecord& r);

struct IngestStats {
  std::size_t added = 0;
  std::size_t replaced = 0;
};

struct CitationHeat {
  std::string chunk_id;
  std::uint64_t count = 0;
  Timestamp window_start = 0;
};

/// Top-N% chunks by heat, ordered by descending heat.
struct HighCitationSnapshot {
  std::vector<std::string> chunk_ids;
  int percent = 0;
  Timestamp created_at = 0;
};

/// Snapshot cardinality: ceil(percent/100 * total), clamped to [0, total].
std::size_t high_citation_count(int percent, std::size_t total);

struct StoreOptions {
  /// Tumbling citation window length in seconds.
  Timestamp window_length = 7 * 24 * 3600;
  /// When set, ingested records are appended here (chunks.jsonl) and
  /// citations to citations.jsonl; existing files are replayed on open.
  std::optional<std::filesystem::path> directory;
};

/// Knowledge chunks plus citation-heat accounting. Readers may run
/// concurrently; writers are exclusive. The active K_h snapshot is swapped
/// atomically by rolling_update().
class CorpusStore {
 public:
  explicit CorpusStore(StoreOptions options = {});

  IngestStats ingest_chunks(std::span<const ChunkRecord> records);

  /// Returns the updated count in the active window. Throws UnknownChunk.
  std::uint64_t record_citation(const std::string& chunk_id, Timestamp at);

  /// Ranks by the active window's heat: heat desc, updated_at desc, id asc.
  HighCitationSnapshot select_high_citation(int percent, Timestamp now = 0) const;

  /// Closes the active window and publishes a fresh snapshot ranked by the
  /// heat of the most recent window that saw any citations. The next window
  /// starts at now.
  HighCitationSnapshot rolling_update(int percent, Timestamp now);

  /// Null until the first rolling_update().
  std::shared_ptr<const HighCitationSnapshot> active_snapshot() const;

  std::optional<KnowledgeChunk> find(const std::string& id) const;
  /// All chunks, ascending id.
  std::vector<KnowledgeChunk> chunks() const;
  /// Heat of every chunk in the active window, ascending id.
  std::vector<CitationHeat> heat_report() const;
  std::size_t size() const;
  Timestamp window_start() const;

 private:
  using HeatMap = std::unordered_map<std::string, std::uint64_t>;

  HighCitationSnapshot rank_locked(const HeatMap& heat, int percent, Timestamp now) const;
  void close_window_locked();
  IngestStats ingest_locked(std::span<const ChunkRecord> records);
  std::uint64_t cite_locked(const std::string& chunk_id, Timestamp at);
  void replay_journal();

  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, KnowledgeChunk> chunks_;
  HeatMap heat_;
  HeatMap ranking_heat_;
  Timestamp window_start_ = 0;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const HighCitationSnapshot> active_;
};

}  // namespace groundqa
