#include "groundqa/serve_eval.h"

#include <algorithm>
#include <ctime>
#include <numeric>
#include <set>
#include <unordered_map>

#include "groundqa/text.h"
#include "groundqa/url.h"

namespace groundqa {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void stream_in_pieces(std::string_view text, std::size_t piece, const DeltaSink& sink) {
  if (piece == 0) piece = 1;
  for (std::size_t i = 0; i < text.size(); i += piece) sink(text.substr(i, piece));
}

}  // namespace

// --- Stack ------------------------------------------------------------------

RetrievalStack build_stack(std::shared_ptr<CorpusStore> store, StackOptions options) {
  if (!store) throw Error("build_stack: null store");
  RetrievalStack stack;
  stack.store = store;

  const Timestamp now = options.now != 0 ? options.now : static_cast<Timestamp>(std::time(nullptr));
  stack.snapshot = store->rolling_update(options.percent, now);

  auto chunks = store->chunks();
  auto terms = GazetteerExtractor::harvest_terms(chunks);
  terms.insert(terms.end(), options.terms.begin(), options.terms.end());
  stack.extractor = std::make_shared<GazetteerExtractor>(std::move(terms));

  ChunkLookup lookup = [store](const std::string& id) { return store->find(id); };
  auto graph = std::make_shared<const KnowledgeGraph>(
      build_graph(stack.snapshot, lookup, *stack.extractor, GraphOptions{options.community_seed}));
  stack.graph_channel =
      std::make_shared<GraphChannel>(graph, options.orchestrator.graph_hops, options.orchestrator.graph_k);

  auto embedder = options.embedder ? options.embedder : std::make_shared<HashingEmbedder>(256);
  auto records = embed_chunks(chunks, *embedder);
  stack.hybrid = std::make_shared<const HybridRetriever>(LexicalIndex::build(chunks), std::move(records), embedder,
                                                          options.orchestrator.hybrid_k);

  Orchestrator::Parts parts;
  parts.graph = stack.graph_channel;
  parts.hybrid = std::make_shared<HybridChannel>(stack.hybrid);
  parts.rewriter = options.rewriter;
  parts.reranker = options.reranker;
  parts.lookup = lookup;
  auto gc = stack.graph_channel;
  parts.entity_hits = [gc](const std::string& q) { return gc->graph()->match_entities(q).size(); };
  stack.orchestrator = std::make_shared<Orchestrator>(std::move(parts), options.orchestrator);
  return stack;
}

// --- Generators -------------------------------------------------------------

std::string render_generation_prompt(const std::string& query, const std::string& history,
                                     const EvidenceSet& evidence) {
  std::string p = "Answer the customer using only the evidence. Copy links exactly or leave them out.\n\n";
  if (!history.empty()) p += "Conversation so far:\n" + history + "\n\n";
  p += "Evidence:\n";
  for (std::size_t i = 0; i < evidence.items.size(); ++i) {
    p += "[" + std::to_string(i + 1) + "] " + evidence.items[i].text + "\n";
  }
  p += "\nQuestion: " + query + "\nAnswer:";
  return p;
}

void FaithfulEchoGenerator::generate(const GenerationRequest& request, const DeltaSink& sink) {
  if (!request.evidence || request.evidence->empty()) return;
  stream_in_pieces(request.evidence->items.front().text, chunk_bytes_, sink);
}

UrlFabricatorGenerator::UrlFabricatorGenerator(std::uint64_t seed, double rate, std::size_t chunk_bytes)
    : seed_(seed), rate_(rate), chunk_bytes_(chunk_bytes) {}

bool UrlFabricatorGenerator::fabricates(const std::string& query) const {
  const auto h = fnv1a64(std::to_string(seed_) + "|" + query);
  return static_cast<double>(h >> 11) * 0x1.0p-53 < rate_;
}

void UrlFabricatorGenerator::generate(const GenerationRequest& request, const DeltaSink& sink) {
  std::string text;
  if (request.evidence && !request.evidence->empty()) text = request.evidence->items.front().text;
  if (fabricates(request.query)) {
    const auto h = fnv1a64(request.query, seed_ ^ 0x9e3779b97f4a7c15ULL);
    // Alternate between an unapproved host and a plausible-looking path on
    // an approved one.
    if (h & 1) {
      text += " More at https://example.com/help/" + hex64(h).substr(0, 8) + ".";
    } else {
      text += " See also https://help.adsplatform.example/kb/article-" + hex64(h).substr(0, 6) + " for details.";
    }
  }
  stream_in_pieces(text, chunk_bytes_, sink);
}

void VerboseGenerator::generate(const GenerationRequest& request, const DeltaSink& sink) {
  sink("Thanks for reaching out! Here is everything relevant I found. ");
  if (request.evidence) {
    for (const auto& item : request.evidence->items) {
      sink("In addition, ");
      stream_in_pieces(item.text, 11, sink);
      sink(" ");
    }
  }
  sink("Let me know if anything else comes up.");
}

// --- Pipeline ---------------------------------------------------------------

double QATimings::stage_sum() const {
  return rewrite_ms + retrieval_ms + merge_ms + rerank_ms + truncate_ms + generation_ms + guardrail_ms;
}

json QATimings::to_json() const {
  return json{{"rewrite_ms", rewrite_ms},       {"graph_ms", graph_ms},
              {"hybrid_ms", hybrid_ms},         {"retrieval_ms", retrieval_ms},
              {"merge_ms", merge_ms},           {"rerank_ms", rerank_ms},
              {"truncate_ms", truncate_ms},     {"generation_ms", generation_ms},
              {"guardrail_ms", guardrail_ms},   {"total_ms", total_ms}};
}

QAPipeline::QAPipeline(std::shared_ptr<const Orchestrator> orchestrator, std::shared_ptr<Generator> generator,
                       PipelineConfig config)
    : orchestrator_(std::move(orchestrator)), generator_(std::move(generator)), config_(std::move(config)) {
  if (!orchestrator_) throw Error("QAPipeline: null orchestrator");
  if (!generator_) throw Error("QAPipeline: null generator");
}

QAResponse QAPipeline::answer(const QARequest& request, const DeltaSink& sink) const {
  QAResponse resp;
  const auto t0 = Clock::now();

  auto retrieval = request.overrides ? orchestrator_->retrieve(request.query, *request.overrides)
                                     : orchestrator_->retrieve(request.query);
  resp.timings.rewrite_ms = retrieval.timings.rewrite_ms;
  resp.timings.graph_ms = retrieval.timings.graph_ms;
  resp.timings.hybrid_ms = retrieval.timings.hybrid_ms;
  resp.timings.retrieval_ms = retrieval.timings.retrieval_ms;
  resp.timings.merge_ms = retrieval.timings.merge_ms;
  resp.timings.rerank_ms = retrieval.timings.rerank_ms;
  resp.timings.truncate_ms = retrieval.timings.truncate_ms;
  resp.evidence_ids = retrieval.evidence.ids();
  resp.evidence_texts = retrieval.evidence.texts();
  resp.degradations = retrieval.events;

  if (retrieval.evidence.empty()) {
    resp.refused = true;
    resp.answer = config_.refusal_template;
    resp.raw_answer = resp.answer;
    if (sink) sink(resp.answer);
    resp.timings.total_ms = ms_between(t0, Clock::now());
    return resp;
  }

  auto validator = std::make_shared<UrlValidator>(evidence_urls(resp.evidence_texts), config_.prefix_pool,
                                                  config_.checker, config_.probe_timeout);
  Guardrail guard(config_.guardrail, validator);
  GuardrailState state;
  Clock::duration guard_time{0};

  auto emit = [&](const std::string& out) {
    if (out.empty()) return;
    resp.answer += out;
    if (sink) sink(out);
  };
  DeltaSink on_delta = [&](std::string_view delta) {
    resp.raw_answer.append(delta);
    const auto g0 = Clock::now();
    auto out = guard.scan_chunk(state, delta);
    guard_time += Clock::now() - g0;
    emit(out);
  };

  GenerationRequest gen{request.query, {}, &retrieval.evidence, {}};
  for (const auto& turn : request.history) gen.history += turn + "\n";
  gen.prompt = render_generation_prompt(gen.query, gen.history, retrieval.evidence);

  const auto g_start = Clock::now();
  bool ok = true;
  try {
    generator_->generate(gen, on_delta);
  } catch (const std::exception& e) {
    ok = false;
    resp.error = "generator_unavailable";
    resp.error_message = e.what();
  }
  if (ok) {
    const auto f0 = Clock::now();
    auto out = guard.finalize(state);
    guard_time += Clock::now() - f0;
    emit(out);
  }
  const auto g_end = Clock::now();

  resp.timings.guardrail_ms = std::chrono::duration<double, std::milli>(guard_time).count();
  resp.timings.generation_ms = std::max(0.0, ms_between(g_start, g_end) - resp.timings.guardrail_ms);
  resp.guardrail_events = std::move(state.events);
  resp.timings.total_ms = ms_between(t0, Clock::now());
  return resp;
}

// --- Metrics ----------------------------------------------------------------

json eval_case_to_json(const EvalCase& c) {
  return json{{"id", c.id},
              {"query", c.query},
              {"gold_answer", c.gold_answer},
              {"gold_chunk_ids", c.gold_chunk_ids},
              {"hops", c.hops},
              {"hallucinated", c.hallucinated}};
}

EvalCase eval_case_from_json(const json& j) {
  if (!j.is_object() || !j.contains("query") || !j["query"].is_string()) throw Error("eval case needs a query");
  EvalCase c;
  c.id = j.value("id", std::string{});
  c.query = j["query"].get<std::string>();
  c.gold_answer = j.value("gold_answer", std::string{});
  if (j.contains("gold_chunk_ids")) c.gold_chunk_ids = j["gold_chunk_ids"].get<std::vector<std::string>>();
  c.hops = j.value("hops", 1);
  c.hallucinated = j.value("hallucinated", false);
  return c;
}

double hallucination_rate(std::span<const EvalCase> cases) {
  if (cases.empty()) throw EmptyCaseSet();
  const auto flagged = std::count_if(cases.begin(), cases.end(), [](const EvalCase& c) { return c.hallucinated; });
  return static_cast<double>(flagged) / static_cast<double>(cases.size());
}

bool has_url_hallucination(const std::string& answer, UrlValidator& validator) {
  for (const auto& url : extract_urls(answer)) {
    if (!validator.validate(url).valid) return true;
  }
  return false;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  // Bit-parallel LCS (Allison-Dix / Crochemore et al.): one bit per
  // position of a, V starts all ones, and each symbol of b does
  // V = (V + (V & M)) | (V & ~M). The zero bits of V count the LCS.
  const std::size_t m = a.size();
  if (m == 0 || b.empty()) return 0;
  const std::size_t words = (m + 63) / 64;

  std::unordered_map<std::string_view, std::vector<std::uint64_t>> match;
  for (std::size_t i = 0; i < m; ++i) {
    auto& mask = match[a[i]];
    if (mask.empty()) mask.assign(words, 0);
    mask[i / 64] |= std::uint64_t{1} << (i % 64);
  }

  std::vector<std::uint64_t> v(words, ~std::uint64_t{0});
  for (const auto& sym : b) {
    auto it = match.find(sym);
    if (it == match.end()) continue;
    const auto& mask = it->second;
    std::uint64_t carry = 0;
    for (std::size_t w = 0; w < words; ++w) {
      const std::uint64_t u = v[w] & mask[w];
      const std::uint64_t sum = v[w] + u;
      const std::uint64_t c1 = sum < v[w] ? 1 : 0;
      const std::uint64_t sum2 = sum + carry;
      const std::uint64_t c2 = sum2 < sum ? 1 : 0;
      v[w] = sum2 | (v[w] - u);
      carry = c1 | c2;
    }
  }

  std::size_t zeros = 0;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t live = v[w];
    const std::size_t bits = std::min<std::size_t>(64, m - w * 64);
    if (bits < 64) live |= ~((std::uint64_t{1} << bits) - 1);
    zeros += static_cast<std::size_t>(__builtin_popcountll(~live));
  }
  return zeros;
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(r, c));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rec = lcs / static_cast<double>(r.size());
  return 100.0 * 2.0 * p * rec / (p + rec);
}

RecallMetrics recall_metrics(std::span<const RetrievalRun> runs) {
  if (runs.empty()) throw EmptyCaseSet();
  RecallMetrics m;
  std::size_t retrieved = 0, gold = 0, hit = 0;
  for (const auto& run : runs) {
    retrieved += run.retrieved.size();
    std::set<std::string> got(run.retrieved.begin(), run.retrieved.end());
    for (const auto& g : std::set<std::string>(run.gold.begin(), run.gold.end())) {
      ++gold;
      if (got.count(g)) ++hit;
    }
  }
  m.effective_chunks_per_query = static_cast<double>(retrieved) / static_cast<double>(runs.size());
  m.recall_effectiveness = gold == 0 ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(gold);
  return m;
}

// --- Eval -------------------------------------------------------------------

json EvalReport::summary_json() const {
  return json{{"cases", results.size()},
              {"hallucination_rate", hallucination_rate},
              {"unguarded_hallucination_rate", unguarded_hallucination_rate},
              {"rouge_l", mean_rouge_l},
              {"effective_chunks_per_query", recall.effective_chunks_per_query},
              {"recall_effectiveness", recall.recall_effectiveness}};
}

EvalReport run_eval(const QAPipeline& pipeline, std::span<const EvalCase> cases) {
  if (cases.empty()) throw EmptyCaseSet();
  const auto& config = pipeline.config();

  EvalReport report;
  std::vector<EvalCase> guarded, raw;
  std::vector<RetrievalRun> runs;
  for (const auto& c : cases) {
    auto resp = pipeline.answer(QARequest{c.query, {}, std::nullopt});
    UrlValidator oracle(evidence_urls(resp.evidence_texts), config.prefix_pool, config.checker,
                        config.probe_timeout);
    CaseResult r;
    r.case_id = c.id;
    r.answer = resp.answer;
    r.raw_answer = resp.raw_answer;
    r.evidence_ids = resp.evidence_ids;
    r.hallucinated = has_url_hallucination(resp.answer, oracle);
    r.raw_hallucinated = has_url_hallucination(resp.raw_answer, oracle);
    r.rouge_l = rouge_l(resp.answer, c.gold_answer);
    r.guardrail_events = resp.guardrail_events;
    r.timings = resp.timings;
    report.results.push_back(std::move(r));
  }

  // Aggregate once every case is in.
  double rouge_sum = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& r = report.results[i];
    EvalCase g = cases[i], u = cases[i];
    g.hallucinated = r.hallucinated;
    u.hallucinated = r.raw_hallucinated;
    guarded.push_back(std::move(g));
    raw.push_back(std::move(u));
    runs.push_back({r.evidence_ids, cases[i].gold_chunk_ids});
    rouge_sum += r.rouge_l;
  }
  report.hallucination_rate = hallucination_rate(guarded);
  report.unguarded_hallucination_rate = hallucination_rate(raw);
  report.mean_rouge_l = rouge_sum / static_cast<double>(cases.size());
  report.recall = recall_metrics(runs);
  return report;
}

}  // namespace groundqa
