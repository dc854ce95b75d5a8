#include "groundqa/graph.h"

#include <algorithm>
#include <cctype>
#include <deque>
#include <numeric>
#include <unordered_set>

#include "groundqa/text.h"
#include "groundqa/url.h"

namespace groundqa {

using nlohmann::json;

namespace {

constexpr const char* kCoOccurs = "co-occurs";
constexpr std::size_t kSummaryChunks = 3;
constexpr std::size_t kSummaryMaxChars = 256;
constexpr double kSummaryBonus = 0.25;

std::vector<std::string> split_name(const std::string& name) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= name.size()) {
    auto sp = name.find(' ', start);
    if (sp == std::string::npos) sp = name.size();
    if (sp > start) out.push_back(name.substr(start, sp - start));
    start = sp + 1;
  }
  return out;
}

/// Returns the entity names (from index keyed by first token) occurring in tokens.
std::vector<std::string> match_tokens(
    const std::vector<std::string>& tokens,
    const std::unordered_map<std::string, std::vector<std::vector<std::string>>>& index) {
  std::set<std::string> found;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = index.find(tokens[i]);
    if (it == index.end()) continue;
    for (const auto& seq : it->second) {
      if (i + seq.size() > tokens.size()) continue;
      if (std::equal(seq.begin(), seq.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        std::string name = seq[0];
        for (std::size_t k = 1; k < seq.size(); ++k) name += " " + seq[k];
        found.insert(std::move(name));
      }
    }
  }
  return {found.begin(), found.end()};
}

struct RawToken {
  std::size_t begin;
  std::size_t end;
  bool capitalized;
};

std::vector<RawToken> raw_tokens(const std::string& text) {
  std::vector<RawToken> out;
  std::size_t i = 0;
  auto alnum = [&](std::size_t k) {
    auto c = static_cast<unsigned char>(text[k]);
    return c < 0x80 && std::isalnum(c);
  };
  while (i < text.size()) {
    if (!alnum(i)) {
      ++i;
      continue;
    }
    std::size_t b = i;
    while (i < text.size() && alnum(i)) ++i;
    out.push_back({b, i, std::isupper(static_cast<unsigned char>(text[b])) != 0});
  }
  return out;
}

bool sentence_initial(const std::string& text, std::size_t pos) {
  while (pos > 0) {
    char c = text[pos - 1];
    if (c == '\n') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return c == '.' || c == '!' || c == '?';
    --pos;
  }
  return true;
}

bool usable_term(const std::string& canonical) {
  auto toks = split_name(canonical);
  if (toks.empty()) return false;
  bool all_stop = std::all_of(toks.begin(), toks.end(), [](const auto& t) { return is_stopword(t); });
  if (all_stop) return false;
  if (toks.size() == 1) {
    const auto& t = toks[0];
    if (t.size() < 2) return false;
    if (std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return false;
    }
  }
  return true;
}

std::string blank_urls(std::string text) {
  for (const auto& m : find_urls(text)) {
    std::fill_n(text.begin() + static_cast<std::ptrdiff_t>(m.begin), m.length, ' ');
  }
  return text;
}

}  // namespace

std::string canonical_entity_name(std::string_view term) {
  auto toks = tokenize(term);
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

GazetteerExtractor::GazetteerExtractor(std::vector<std::string> terms) {
  std::set<std::string> names;
  for (const auto& t : terms) {
    auto name = canonical_entity_name(t);
    if (!name.empty()) names.insert(std::move(name));
  }
  names_.assign(names.begin(), names.end());
  for (const auto& n : names_) {
    auto seq = split_name(n);
    by_first_token_[seq.front()].push_back(std::move(seq));
  }
}

std::vector<std::string> GazetteerExtractor::harvest_terms(const std::vector<KnowledgeChunk>& chunks) {
  std::set<std::string> strong;
  for (const auto& chunk : chunks) {
    const std::string text = blank_urls(chunk.text);
    auto toks = raw_tokens(text);
    std::size_t i = 0;
    while (i < toks.size()) {
      if (!toks[i].capitalized) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < toks.size() && toks[j].capitalized && toks[j].begin == toks[j - 1].end + 1 &&
             text[toks[j - 1].end] == ' ') {
        ++j;
      }
      std::size_t first = i;
      if (sentence_initial(text, toks[i].begin)) {
        auto lead = to_lower(std::string_view(text).substr(toks[i].begin, toks[i].end - toks[i].begin));
        first = is_stopword(lead) ? i + 1 : j;  // non-stopword initial runs are too ambiguous
      }
      if (first < j) {
        auto term = text.substr(toks[first].begin, toks[j - 1].end - toks[first].begin);
        auto name = canonical_entity_name(term);
        if (usable_term(name)) strong.insert(std::move(name));
      }
      i = j;
    }
    // Quoted phrases.
    std::size_t q = text.find('"');
    while (q != std::string::npos) {
      auto close = text.find('"', q + 1);
      if (close == std::string::npos) break;
      auto name = canonical_entity_name(std::string_view(text).substr(q + 1, close - q - 1));
      if (!name.empty() && split_name(name).size() <= 5 && usable_term(name)) strong.insert(name);
      q = text.find('"', close + 1);
    }
  }
  return {strong.begin(), strong.end()};
}

std::vector<std::string> GazetteerExtractor::match(std::string_view text) const {
  return match_tokens(tokenize(blank_urls(std::string(text))), by_first_token_);
}

Extraction GazetteerExtractor::extract(const KnowledgeChunk& chunk) const {
  Extraction ex;
  ex.entities = match(chunk.text);
  for (std::size_t a = 0; a < ex.entities.size(); ++a) {
    for (std::size_t b = a + 1; b < ex.entities.size(); ++b) {
      ex.relations.push_back({ex.entities[a], ex.entities[b], chunk.id, kCoOccurs});
    }
  }
  return ex;
}

// ---------------------------------------------------------------------------

void KnowledgeGraph::reindex() {
  adjacency_.clear();
  by_first_token_.clear();
  for (const auto& [name, e] : entities) adjacency_[name];
  for (const auto& r : relations) {
    adjacency_[r.src].insert(r.dst);
    adjacency_[r.dst].insert(r.src);
  }
  for (const auto& [name, e] : entities) {
    auto toks = split_name(name);
    if (!toks.empty()) by_first_token_[toks.front()].push_back(name);
  }
}

std::vector<std::string> KnowledgeGraph::neighbors(const std::string& entity) const {
  auto it = adjacency_.find(entity);
  if (it == adjacency_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::vector<std::string> KnowledgeGraph::match_entities(std::string_view text) const {
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> index;
  auto toks = tokenize(text);
  for (const auto& t : toks) {
    auto it = by_first_token_.find(t);
    if (it == by_first_token_.end() || index.contains(t)) continue;
    auto& seqs = index[t];
    for (const auto& name : it->second) seqs.push_back(split_name(name));
  }
  return match_tokens(toks, index);
}

json KnowledgeGraph::to_json() const {
  json ents = json::object();
  for (const auto& [name, e] : entities) ents[name] = std::vector<std::string>(e.chunk_ids.begin(), e.chunk_ids.end());
  json rels = json::array();
  for (const auto& r : relations) rels.push_back({r.src, r.dst, r.evidence_chunk, r.label});
  json chunks = json::object();
  for (const auto& [id, fp] : chunk_fingerprints) {
    auto t = chunk_titles.find(id);
    chunks[id] = {{"fingerprint", hex64(fp)}, {"title", t == chunk_titles.end() ? "" : t->second}};
  }
  json levels = json::array();
  for (const auto& level : communities.levels) levels.push_back(level);
  json summaries = json::array();
  for (const auto& level : communities.summaries) {
    json s = json::object();
    for (const auto& [id, text] : level) s[std::to_string(id)] = text;
    summaries.push_back(std::move(s));
  }
  return json{{"entities", ents},
              {"relations", rels},
              {"chunks", chunks},
              {"chunk_order", chunk_order},
              {"communities", {{"levels", levels}, {"summaries", summaries}}}};
}

ChunkLookup lookup_in(const CorpusStore& store) {
  return [&store](const std::string& id) { return store.find(id); };
}

// ---------------------------------------------------------------------------

std::vector<int> label_propagation(const WeightedAdjacency& adj, const std::vector<std::string>& node_keys,
                                   std::uint64_t seed, int max_rounds) {
  const std::size_t n = adj.size();
  std::vector<std::uint64_t> priority(n);
  const std::string salt = std::to_string(seed) + ":";
  for (std::size_t i = 0; i < n; ++i) priority[i] = fnv1a64(salt + node_keys.at(i));

  std::vector<int> labels(n);
  std::iota(labels.begin(), labels.end(), 0);
  std::map<int, double> votes;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<int> next(n);
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      votes.clear();
      // self vote as heavy as the strongest edge, else weighted pairs flip forever
      double self_w = 1.0;
      for (const auto& [j, w] : adj[i]) self_w = std::max(self_w, w);
      votes[labels[i]] += self_w;
      for (const auto& [j, w] : adj[i]) votes[labels[static_cast<std::size_t>(j)]] += w;
      int best = labels[i];
      double best_w = -1.0;
      for (const auto& [label, w] : votes) {
        bool better = w > best_w ||
                      (w == best_w && priority[static_cast<std::size_t>(label)] <
                                          priority[static_cast<std::size_t>(best)]);
        if (better) {
          best = label;
          best_w = w;
        }
      }
      next[i] = best;
      changed |= best != labels[i];
    }
    labels.swap(next);
    if (!changed) break;
  }
  return labels;
}

namespace {

/// Renumbers labels to 0..C-1 by first occurrence in node order.
std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, fresh] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

std::map<int, std::string> summarize(const KnowledgeGraph& graph, const std::map<std::string, int>& partition) {
  std::unordered_map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < graph.chunk_order.size(); ++i) rank.emplace(graph.chunk_order[i], i);
  std::map<int, std::set<std::string>> members;
  for (const auto& [entity, cid] : partition) {
    auto& m = members[cid];
    const auto& e = graph.entities.at(entity);
    m.insert(e.chunk_ids.begin(), e.chunk_ids.end());
  }
  std::map<int, std::string> out;
  for (auto& [cid, ids] : members) {
    std::vector<std::string> ordered(ids.begin(), ids.end());
    std::sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
      auto ra = rank.count(a) ? rank.at(a) : rank.size();
      auto rb = rank.count(b) ? rank.at(b) : rank.size();
      return ra != rb ? ra < rb : a < b;
    });
    std::string summary;
    for (std::size_t i = 0; i < ordered.size() && i < kSummaryChunks; ++i) {
      auto t = graph.chunk_titles.find(ordered[i]);
      if (t == graph.chunk_titles.end()) continue;
      if (!summary.empty()) summary += ' ';
      summary += t->second;
    }
    if (summary.size() > kSummaryMaxChars) summary.resize(kSummaryMaxChars);
    out.emplace(cid, std::move(summary));
  }
  return out;
}

}  // namespace

CommunityHierarchy detect_communities(const KnowledgeGraph& graph, std::uint64_t seed) {
  CommunityHierarchy h;
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;
  for (const auto& [name, e] : graph.entities) {
    index.emplace(name, static_cast<int>(names.size()));
    names.push_back(name);
  }
  const std::size_t n = names.size();

  std::vector<std::map<int, double>> weights(n);
  for (const auto& r : graph.relations) {
    auto a = index.find(r.src), b = index.find(r.dst);
    if (a == index.end() || b == index.end() || a->second == b->second) continue;
    weights[static_cast<std::size_t>(a->second)][b->second] += 1.0;
    weights[static_cast<std::size_t>(b->second)][a->second] += 1.0;
  }
  WeightedAdjacency adj(n);
  for (std::size_t i = 0; i < n; ++i) adj[i].assign(weights[i].begin(), weights[i].end());

  auto level0 = canonical_labels(label_propagation(adj, names, seed));
  const int c0 = level0.empty() ? 0 : *std::max_element(level0.begin(), level0.end()) + 1;

  // Contract level-0 communities; representative key is the first member name.
  std::vector<std::string> reps(static_cast<std::size_t>(c0));
  for (std::size_t i = n; i-- > 0;) reps[static_cast<std::size_t>(level0[i])] = names[i];
  std::vector<std::map<int, double>> cweights(static_cast<std::size_t>(c0));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, w] : adj[i]) {
      int ci = level0[i], cj = level0[static_cast<std::size_t>(j)];
      if (ci != cj) cweights[static_cast<std::size_t>(ci)][cj] += w;
    }
  }
  WeightedAdjacency cadj(static_cast<std::size_t>(c0));
  for (std::size_t c = 0; c < cadj.size(); ++c) cadj[c].assign(cweights[c].begin(), cweights[c].end());
  auto level1_of_c = canonical_labels(label_propagation(cadj, reps, seed));

  std::map<std::string, int> p0, p1;
  for (std::size_t i = 0; i < n; ++i) {
    p0.emplace(names[i], level0[i]);
    p1.emplace(names[i], level1_of_c[static_cast<std::size_t>(level0[i])]);
  }
  h.summaries.push_back(summarize(graph, p0));
  h.summaries.push_back(summarize(graph, p1));
  h.levels.push_back(std::move(p0));
  h.levels.push_back(std::move(p1));
  return h;
}

// ---------------------------------------------------------------------------

KnowledgeGraph incremental_update(const KnowledgeGraph& graph, const HighCitationSnapshot& changed_snapshot,
                                  const ChunkLookup& lookup, const EntityExtractor& extractor,
                                  const GraphOptions& options) {
  KnowledgeGraph out;
  out.chunk_order = changed_snapshot.chunk_ids;
  for (const auto& id : changed_snapshot.chunk_ids) {
    auto chunk = lookup(id);
    if (!chunk) throw UnknownChunk(id);
    const auto fp = fnv1a64(chunk->text);
    out.chunk_fingerprints[id] = fp;
    out.chunk_titles[id] = first_sentence(chunk->text);

    auto old = graph.extractions.find(id);
    auto old_fp = graph.chunk_fingerprints.find(id);
    if (old != graph.extractions.end() && old_fp != graph.chunk_fingerprints.end() && old_fp->second == fp) {
      out.extractions.emplace(id, old->second);
      continue;
    }
    try {
      Extraction ex = extractor.extract(*chunk);
      std::set<std::string> ents;
      for (auto& e : ex.entities) {
        if (!e.empty()) ents.insert(e);
      }
      Extraction clean;
      clean.entities.assign(ents.begin(), ents.end());
      std::set<Relation> rels;
      for (auto r : ex.relations) {
        if (r.src == r.dst || !ents.contains(r.src) || !ents.contains(r.dst)) continue;
        if (r.dst < r.src) std::swap(r.src, r.dst);
        r.evidence_chunk = id;
        rels.insert(std::move(r));
      }
      clean.relations.assign(rels.begin(), rels.end());
      out.extractions.emplace(id, std::move(clean));
    } catch (const std::exception& e) {
      out.diagnostics.push_back(ExtractorFailure(id, e.what()).what());
    }
  }

  for (const auto& [id, ex] : out.extractions) {
    for (const auto& name : ex.entities) {
      auto& ent = out.entities[name];
      ent.name = name;
      ent.chunk_ids.insert(id);
    }
    out.relations.insert(ex.relations.begin(), ex.relations.end());
  }
  out.reindex();
  out.communities = detect_communities(out, options.community_seed);
  return out;
}

KnowledgeGraph build_graph(const HighCitationSnapshot& snapshot, const ChunkLookup& lookup,
                           const EntityExtractor& extractor, const GraphOptions& options) {
  return incremental_update(KnowledgeGraph{}, snapshot, lookup, extractor, options);
}

// ---------------------------------------------------------------------------

std::vector<ScoredChunk> graph_retrieve(std::string_view query, const KnowledgeGraph& graph, int hops,
                                        std::size_t limit) {
  if (hops < 1) throw Error("hops must be >= 1");
  if (limit < 1) throw Error("limit must be >= 1");
  auto seeds = graph.match_entities(query);
  if (seeds.empty()) return {};

  std::map<std::string, int> dist;
  std::deque<std::string> frontier;
  for (const auto& s : seeds) {
    dist.emplace(s, 0);
    frontier.push_back(s);
  }
  while (!frontier.empty()) {
    auto cur = frontier.front();
    frontier.pop_front();
    int d = dist.at(cur);
    if (d == hops) continue;
    for (const auto& nb : graph.neighbors(cur)) {
      if (dist.emplace(nb, d + 1).second) frontier.push_back(nb);
    }
  }

  std::map<std::string, double> score;
  std::map<std::string, std::vector<std::string>> attached;
  for (const auto& [entity, d] : dist) {
    auto it = graph.entities.find(entity);
    if (it == graph.entities.end()) continue;
    for (const auto& cid : it->second.chunk_ids) {
      score[cid] += 1.0 / (1.0 + d);
      attached[cid].push_back(entity);
    }
  }

  std::set<std::string> qterms;
  for (auto& t : content_terms(query)) qterms.insert(std::move(t));
  std::map<int, bool> summary_hit;
  auto shares_term = [&](int community) {
    auto [it, fresh] = summary_hit.try_emplace(community, false);
    if (fresh && !graph.communities.summaries.empty()) {
      const auto& sums = graph.communities.summaries.front();
      if (auto s = sums.find(community); s != sums.end()) {
        for (const auto& t : tokenize(s->second)) {
          if (qterms.contains(t)) {
            it->second = true;
            break;
          }
        }
      }
    }
    return it->second;
  };
  if (!graph.communities.levels.empty()) {
    const auto& level0 = graph.communities.levels.front();
    for (auto& [cid, s] : score) {
      for (const auto& e : attached[cid]) {
        auto c = level0.find(e);
        if (c != level0.end() && shares_term(c->second)) {
          s += kSummaryBonus;
          break;
        }
      }
    }
  }

  std::vector<ScoredChunk> out;
  out.reserve(score.size());
  for (const auto& [cid, s] : score) out.push_back({cid, s, Channel::graph});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
  });
  if (out.size() > limit) out.resize(limit);
  return out;
}

}  // namespace groundqa
