#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "groundqa/common.h"
#include "groundqa/corpus_store.h"

namespace groundqa {

struct Entity {
  std::string name;
  std::set<std::string> chunk_ids;
};

/// Undirected co-occurrence edge; src < dst lexicographically.
struct Relation {
  std::string src;
  std::string dst;
  std::string evidence_chunk;
  std::string label;

  auto operator<=>(const Relation&) const = default;
};

struct Extraction {
  std::vector<std::string> entities;
  std::vector<Relation> relations;
};

class ExtractorFailure : public Error {
 public:
  ExtractorFailure(const std::string& chunk_id, const std::string& what)
      : Error("extractor failed on " + chunk_id + ": " + what), chunk_id_(chunk_id) {}
  const std::string& chunk_id() const { return chunk_id_; }

 private:
  std::string chunk_id_;
};

/// Entity/relation extraction slot. An LLM-backed client can be plugged in
/// here; implementations throw ExtractorFailure for a chunk they cannot
/// process.
class EntityExtractor {
 public:
  virtual ~EntityExtractor() = default;
  virtual Extraction extract(const KnowledgeChunk& chunk) const = 0;
};

/// Dictionary matcher plus co-occurrence relations. Terms are matched as
/// case-insensitive token sequences; every pair of distinct entities found in
/// one chunk yields a relation labelled "co-occurs".
class GazetteerExtractor final : public EntityExtractor {
 public:
  explicit GazetteerExtractor(std::vector<std::string> terms);

  /// Candidate terms from a corpus: runs of capitalized words and
  /// double-quoted phrases of at most five words. A sentence-initial run is
  /// dropped unless it starts with a stopword ("The Ads Console" keeps "Ads
  /// Console"). URL spans are ignored.
  static std::vector<std::string> harvest_terms(const std::vector<KnowledgeChunk>& chunks);

  Extraction extract(const KnowledgeChunk& chunk) const override;

  /// Canonical entity names whose token sequence occurs in text, sorted.
  std::vector<std::string> match(std::string_view text) const;

  const std::vector<std::string>& terms() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> by_first_token_;
};

/// Token-sequence form of an entity name ("Ad  Review" -> "ad review").
std::string canonical_entity_name(std::string_view term);

/// levels[l] maps entity -> community id at level l; level l+1 communities are
/// unions of level-l ones. summaries[l] maps community id -> summary text.
struct CommunityHierarchy {
  std::vector<std::map<std::string, int>> levels;
  std::vector<std::map<int, std::string>> summaries;
};

/// G = (V, E) over the high-citation subset. Immutable once built; updates
/// produce a new graph.
struct KnowledgeGraph {
  std::map<std::string, Entity> entities;
  std::set<Relation> relations;
  /// Per-chunk extraction output, reused by incremental_update.
  std::map<std::string, Extraction> extractions;
  std::map<std::string, std::uint64_t> chunk_fingerprints;
  std::map<std::string, std::string> chunk_titles;
  /// Snapshot order (descending heat).
  std::vector<std::string> chunk_order;
  CommunityHierarchy communities;
  std::vector<std::string> diagnostics;

  /// Canonical JSON (sorted keys, sorted arrays); diagnostics excluded.
  nlohmann::json to_json() const;

  std::vector<std::string> neighbors(const std::string& entity) const;
  /// Entities whose name occurs as a token sequence in text.
  std::vector<std::string> match_entities(std::string_view text) const;

  /// Rebuilds the lookup structures behind neighbors() and match_entities().
  void reindex();

 private:
  std::map<std::string, std::set<std::string>> adjacency_;
  std::unordered_map<std::string, std::vector<std::string>> by_first_token_;
};

using ChunkLookup = std::function<std::optional<KnowledgeChunk>(const std::string&)>;

ChunkLookup lookup_in(const CorpusStore& store);

struct GraphOptions {
  std::uint64_t community_seed = 42;
};

/// Throws UnknownChunk if a snapshot id does not resolve. Extractor failures
/// are recorded in diagnostics and the chunk is skipped.
KnowledgeGraph build_graph(const HighCitationSnapshot& snapshot, const ChunkLookup& lookup,
                           const EntityExtractor& extractor, const GraphOptions& options = {});

/// Re-extracts only chunks that are new or whose text changed; the result
/// serializes identically to build_graph(changed_snapshot).
KnowledgeGraph incremental_update(const KnowledgeGraph& graph,
                                  const HighCitationSnapshot& changed_snapshot,
                                  const ChunkLookup& lookup, const EntityExtractor& extractor,
                                  const GraphOptions& options = {});

/// Weighted adjacency list over nodes 0..n-1.
using WeightedAdjacency = std::vector<std::vector<std::pair<int, double>>>;

/// Seeded synchronous label propagation. Each node votes over its closed
/// neighborhood (self weight = max(1, heaviest
/// incident edge)); ties go to the label whose node key has the
/// lowest seeded hash. Runs to fixpoint or max_rounds. Returns one label per
/// node; labels are node indices.
std::vector<int> label_propagation(const WeightedAdjacency& adj,
                                   const std::vector<std::string>& node_keys,
                                   std::uint64_t seed, int max_rounds = 100);

/// Two-level hierarchy: level 0 from label propagation on the entity graph,
/// level 1 from re-running it on the contracted level-0 graph.
CommunityHierarchy detect_communities(const KnowledgeGraph& graph, std::uint64_t seed = 42);

struct GraphHit {
  std::string chunk_id;
  double score = 0.0;
  int min_hop = 0;
};

/// Local search: seeds are entities named in the query, expanded breadth
/// first up to hops. Score per chunk is the sum over attaching visited
/// entities of 1/(1 + hop), plus 0.25 when a level-0 community summary of an
/// attaching entity shares a content term with the query. Sorted by score
/// desc, id asc, truncated to limit.
std::vector<ScoredChunk> graph_retrieve(std::string_view query, const KnowledgeGraph& graph,
                                        int hops = 2, std::size_t limit = 10);

}  // namespace groundqa
