// groundqa: command-line front end.

#include <CLI11.hpp>

#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "groundqa/corpus_store.h"
#include "groundqa/graph.h"
#include "groundqa/grpo.h"
#include "groundqa/guardrail.h"
#include "groundqa/http_clients.h"
#include "groundqa/hybrid.h"
#include "groundqa/orchestrator.h"
#include "groundqa/reward.h"
#include "groundqa/serve_eval.h"
#include "groundqa/server.h"

using namespace groundqa;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines_of(const std::string& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<ChunkRecord> read_corpus(const std::string& path) {
  std::vector<ChunkRecord> out;
  std::size_t i = 0;
  for (const auto& line : lines_of(path)) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw MalformedRecord(i, "not JSON");
    out.push_back(chunk_record_from_json(j, i++));
  }
  return out;
}

std::vector<Citation> read_citations(const std::string& path) {
  std::vector<Citation> out;
  for (const auto& line : lines_of(path)) {
    auto j = json::parse(line);
    out.push_back({j.at("chunk_id").get<std::string>(), j.at("ts").get<Timestamp>()});
  }
  return out;
}

/// Evidence file: JSONL chunks ("text" field) or plain text, one per line.
std::vector<std::string> read_evidence(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& line : lines_of(path)) {
    json j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("text") && j["text"].is_string()) {
      out.push_back(j["text"].get<std::string>());
    } else {
      out.push_back(line);
    }
  }
  return out;
}

std::vector<EvalCase> read_cases(const std::string& path) {
  std::vector<EvalCase> out;
  for (const auto& line : lines_of(path)) out.push_back(eval_case_from_json(json::parse(line)));
  return out;
}

struct Common {
  std::string store_dir = ".groundqa";
  int percent = 10;
  Timestamp now = 0;
  std::string rewriter_url, reranker_url, embedder_url;
  bool stub_rewriter = false;
  std::string reranker = "none";  // none | identity | overlap
};

std::shared_ptr<CorpusStore> open_store(const Common& c) {
  std::filesystem::create_directories(c.store_dir);
  StoreOptions opts;
  opts.directory = c.store_dir;
  return std::make_shared<CorpusStore>(opts);
}

StackOptions stack_options(const Common& c) {
  StackOptions o;
  o.percent = c.percent;
  o.now = c.now;
  if (!c.rewriter_url.empty()) {
    o.rewriter = std::make_shared<HttpRewriter>(Endpoint::parse(c.rewriter_url));
  } else if (c.stub_rewriter) {
    o.rewriter = std::make_shared<StubRewriter>();
  }
  if (!c.reranker_url.empty()) {
    o.reranker = std::make_shared<HttpReranker>(Endpoint::parse(c.reranker_url));
  } else if (c.reranker == "identity") {
    o.reranker = std::make_shared<IdentityReranker>();
  } else if (c.reranker == "overlap") {
    o.reranker = std::make_shared<TermOverlapReranker>();
  } else if (c.reranker != "none") {
    throw Error("unknown reranker: " + c.reranker);
  }
  if (!c.embedder_url.empty()) o.embedder = std::make_shared<HttpEmbedder>(Endpoint::parse(c.embedder_url));
  return o;
}

std::shared_ptr<Generator> make_generator(const std::string& spec) {
  if (spec == "echo") return std::make_shared<FaithfulEchoGenerator>();
  if (spec == "fabricator") return std::make_shared<UrlFabricatorGenerator>();
  if (spec == "verbose") return std::make_shared<VerboseGenerator>();
  if (spec.rfind("http", 0) == 0) return std::make_shared<HttpGenerator>(Endpoint::parse(spec));
  throw Error("unknown generator: " + spec + " (echo, fabricator, verbose or a URL)");
}

std::shared_ptr<StatusChecker> make_checker(bool offline, const std::vector<std::string>& statuses) {
  if (!offline) return std::make_shared<HttpStatusChecker>();
  std::map<std::string, int> table;
  for (const auto& s : statuses) {
    auto eq = s.rfind('=');
    if (eq == std::string::npos) throw Error("--status wants URL=CODE: " + s);
    table[s.substr(0, eq)] = std::stoi(s.substr(eq + 1));
  }
  return std::make_shared<StaticStatusChecker>(table);
}

json scored_json(const std::vector<ScoredChunk>& items, const CorpusStore* store = nullptr) {
  json arr = json::array();
  for (const auto& s : items) {
    json j{{"chunk_id", s.chunk_id}, {"score", s.score}, {"channel", channel_name(s.channel)}};
    if (store) {
      if (auto c = store->find(s.chunk_id)) j["text"] = c->text;
    }
    arr.push_back(j);
  }
  return arr;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

QAServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grounded customer-support QA"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--store", common.store_dir, "store directory")->capture_default_str();

  auto add_retrieval_opts = [&](CLI::App* sub) {
    sub->add_option("--percent", common.percent, "high-citation percent N")->capture_default_str();
    sub->add_option("--now", common.now, "clock for the rolling update (unix seconds)");
    sub->add_option("--rewriter-url", common.rewriter_url);
    sub->add_flag("--stub-rewriter", common.stub_rewriter, "offline deterministic rewrites");
    sub->add_option("--reranker-url", common.reranker_url);
    sub->add_option("--reranker", common.reranker, "none, identity or overlap")->capture_default_str();
    sub->add_option("--embedder-url", common.embedder_url);
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "add chunks (and optionally citations) to the store");
  std::string corpus_path, citations_path;
  ingest->add_option("corpus", corpus_path, "JSONL chunks")->required();
  ingest->add_option("--citations", citations_path, "JSONL {chunk_id, ts}");
  ingest->callback([&] {
    auto store = open_store(common);
    auto stats = store->ingest_chunks(read_corpus(corpus_path));
    std::size_t cites = 0;
    if (!citations_path.empty()) {
      for (const auto& c : read_citations(citations_path)) {
        store->record_citation(c.chunk_id, c.ts);
        ++cites;
      }
    }
    std::cout << json{{"added", stats.added}, {"replaced", stats.replaced}, {"citations", cites},
                      {"total", store->size()}}.dump()
              << "\n";
  });

  // heat-report
  auto* heat = app.add_subcommand("heat-report", "citation heat in the active window");
  heat->callback([&] {
    auto store = open_store(common);
    for (const auto& h : store->heat_report()) {
      std::cout << json{{"chunk_id", h.chunk_id}, {"count", h.count}, {"window_start", h.window_start}}.dump()
                << "\n";
    }
  });

  // snapshot
  auto* snap = app.add_subcommand("snapshot", "close the window and print the top-N% snapshot");
  snap->add_option("--percent", common.percent)->capture_default_str();
  snap->add_option("--now", common.now);
  snap->callback([&] {
    auto store = open_store(common);
    const Timestamp now = common.now ? common.now : static_cast<Timestamp>(std::time(nullptr));
    auto s = store->rolling_update(common.percent, now);
    std::cout << json{{"percent", s.percent}, {"created_at", s.created_at}, {"chunk_ids", s.chunk_ids}}.dump(2)
              << "\n";
  });

  // graph
  auto* graph = app.add_subcommand("graph", "knowledge graph over the high-citation subset");
  graph->require_subcommand(1);
  add_retrieval_opts(graph);
  auto* gbuild = graph->add_subcommand("build", "print the canonical graph JSON");
  std::string graph_out;
  gbuild->add_option("--out", graph_out);
  gbuild->callback([&] {
    auto stack = build_stack(open_store(common), stack_options(common));
    auto j = stack.graph()->to_json();
    if (graph_out.empty()) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::ofstream(graph_out) << j.dump(2) << "\n";
      std::cerr << stack.graph()->entities.size() << " entities, " << stack.graph()->relations.size()
                << " relations\n";
    }
    for (const auto& d : stack.graph()->diagnostics) std::cerr << "warning: " << d << "\n";
  });
  auto* gcomm = graph->add_subcommand("communities", "community hierarchy and summaries");
  gcomm->callback([&] {
    auto stack = build_stack(open_store(common), stack_options(common));
    std::cout << stack.graph()->to_json()["communities"].dump(2) << "\n";
  });
  auto* gquery = graph->add_subcommand("query", "graph-channel retrieval");
  std::string gq;
  int hops = 2;
  std::size_t gk = 10;
  gquery->add_option("query", gq)->required();
  gquery->add_option("--hops", hops)->capture_default_str();
  gquery->add_option("--k", gk)->capture_default_str();
  gquery->callback([&] {
    auto stack = build_stack(open_store(common), stack_options(common));
    std::cout << scored_json(graph_retrieve(gq, *stack.graph(), hops, gk), stack.store.get()).dump(2) << "\n";
  });

  // index build
  auto* index = app.add_subcommand("index", "lexical index");
  index->require_subcommand(1);
  auto* ibuild = index->add_subcommand("build", "build the BM25 index and print it (or stats with --out)");
  std::string index_out;
  ibuild->add_option("--out", index_out);
  ibuild->callback([&] {
    auto store = open_store(common);
    auto chunks = store->chunks();
    auto idx = LexicalIndex::build(chunks);
    if (index_out.empty()) {
      std::cout << idx.to_json().dump() << "\n";
    } else {
      std::ofstream(index_out) << idx.to_json().dump() << "\n";
      std::cout << json{{"documents", idx.doc_count()}, {"terms", idx.postings().size()},
                        {"avg_doc_len", idx.avg_doc_len()}}.dump()
                << "\n";
    }
  });

  // search
  auto* search = app.add_subcommand("search", "single-channel retrieval");
  std::string sq, schannel = "hybrid";
  std::size_t sk = 10;
  search->add_option("query", sq)->required();
  search->add_option("--k", sk)->capture_default_str();
  search->add_option("--channel", schannel, "lexical, dense, hybrid or graph")->capture_default_str();
  add_retrieval_opts(search);
  search->callback([&] {
    auto opts = stack_options(common);
    opts.orchestrator.hybrid_k = sk;
    opts.orchestrator.graph_k = sk;
    auto stack = build_stack(open_store(common), opts);
    std::vector<ScoredChunk> hits;
    std::vector<DegradationEvent> events;
    QueryBundle bundle = rewrite_query(sq, opts.rewriter, std::chrono::milliseconds(opts.orchestrator.rewrite_timeout_ms),
                                       &events);
    if (schannel == "graph") {
      hits = graph_retrieve(sq, *stack.graph(), opts.orchestrator.graph_hops, sk);
    } else if (schannel == "lexical") {
      hits = stack.hybrid->retrieve(bundle, HybridMode::lexical, &events);
    } else if (schannel == "dense") {
      hits = stack.hybrid->retrieve(bundle, HybridMode::dense, &events);
    } else if (schannel == "hybrid") {
      hits = stack.hybrid->retrieve(bundle, HybridMode::hybrid, &events);
    } else {
      throw CLI::ValidationError("--channel", "unknown channel " + schannel);
    }
    std::cout << scored_json(hits, stack.store.get()).dump(2) << "\n";
    for (const auto& e : events) std::cerr << "degraded: " << e.stage << ": " << e.reason << "\n";
  });

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "full orchestrated retrieval");
  std::string rq, routing = "auto";
  bool explain = false;
  retrieve->add_option("query", rq)->required();
  retrieve->add_flag("--explain", explain, "show channels, routing, merge and timings");
  retrieve->add_option("--routing", routing, "auto, both, graph_only or hybrid_only")->capture_default_str();
  add_retrieval_opts(retrieve);
  retrieve->callback([&] {
    auto opts = stack_options(common);
    static const std::map<std::string, RoutingMode> modes{{"auto", RoutingMode::automatic},
                                                          {"both", RoutingMode::both},
                                                          {"graph_only", RoutingMode::graph_only},
                                                          {"hybrid_only", RoutingMode::hybrid_only}};
    if (!modes.count(routing)) throw CLI::ValidationError("--routing", routing);
    opts.orchestrator.routing = modes.at(routing);
    auto stack = build_stack(open_store(common), opts);
    auto r = stack.orchestrator->retrieve(rq);
    json evidence = json::array();
    for (const auto& item : r.evidence.items) {
      json prov = json::array();
      for (auto c : item.provenance) prov.push_back(channel_name(c));
      evidence.push_back({{"chunk_id", item.chunk_id}, {"score", item.score}, {"provenance", prov},
                          {"tokens", item.tokens}, {"text", item.text}});
    }
    json out{{"evidence", evidence}, {"token_count", r.evidence.token_count}};
    if (explain) {
      out["bundle"] = r.bundle.all();
      out["plan"] = {{"use_graph", r.plan.use_graph}, {"use_hybrid", r.plan.use_hybrid}};
      json channels = json::array();
      for (const auto& c : r.channels) {
        channels.push_back({{"channel", channel_name(c.channel)}, {"launched", c.launched},
                            {"timed_out", c.timed_out}, {"error", c.error}, {"elapsed_ms", c.elapsed_ms},
                            {"items", scored_json(c.items)}});
      }
      out["channels"] = channels;
      out["merged"] = json::array();
      for (const auto& m : r.merged) out["merged"].push_back({{"chunk_id", m.chunk_id}, {"score", m.score}});
      json ev = json::array();
      for (const auto& e : r.events) ev.push_back({{"stage", e.stage}, {"reason", e.reason}});
      out["degradations"] = ev;
      out["timings"] = {{"rewrite_ms", r.timings.rewrite_ms}, {"retrieval_ms", r.timings.retrieval_ms},
                        {"graph_ms", r.timings.graph_ms},     {"hybrid_ms", r.timings.hybrid_ms},
                        {"merge_ms", r.timings.merge_ms},     {"rerank_ms", r.timings.rerank_ms},
                        {"truncate_ms", r.timings.truncate_ms}};
    }
    std::cout << out.dump(2) << "\n";
  });

  // reward
  auto* reward = app.add_subcommand("reward", "score one answer");
  std::string answer, evidence_path, gt, prefix_path, judge_url, judge_rules_path, rquery;
  bool offline = false;
  std::vector<std::string> statuses;
  reward->add_option("--answer", answer)->required();
  reward->add_option("--evidence", evidence_path, "evidence texts (JSONL chunks or lines)")->required();
  reward->add_option("--gt", gt, "ground-truth answer")->required();
  reward->add_option("--query", rquery);
  reward->add_option("--prefix-pool", prefix_path);
  reward->add_option("--judge-url", judge_url);
  reward->add_option("--judge-rules", judge_rules_path, "JSON rules for the offline judge");
  reward->add_flag("--offline", offline, "no network: rule judge and --status table");
  reward->add_option("--status", statuses, "URL=CODE for offline probes");
  reward->callback([&] {
    RewardClients clients;
    if (!prefix_path.empty()) clients.prefix_pool = PrefixPool::load(prefix_path);
    clients.checker = make_checker(offline, statuses);
    if (!judge_url.empty() && !offline) {
      clients.judge = std::make_shared<HttpJudgeClient>(Endpoint::parse(judge_url, std::chrono::seconds(60)));
    } else {
      ToyEnvironment env;
      if (!judge_rules_path.empty()) {
        env = ToyEnvironment::from_json(json{{"judge_rules", json::parse(slurp(judge_rules_path))}});
      }
      clients.judge = std::make_shared<RuleJudge>(env.judge_rules, env.default_rule);
    }
    auto evidence = read_evidence(evidence_path);
    auto b = compute_reward(answer, evidence, gt, RewardContext{rquery, ""}, RewardWeights{}, clients);
    json verdicts = json::array();
    for (const auto& v : b.verdicts) {
      json j{{"url", v.url}, {"in_evidence", v.in_evidence}, {"prefix_approved", v.prefix_approved},
             {"valid", v.valid}};
      j["http_status"] = v.http_status ? json(*v.http_status) : json(nullptr);
      verdicts.push_back(j);
    }
    std::cout << json{{"reward", b.reward.total},
                      {"r_f", b.reward.r_f},
                      {"r_s", b.reward.r_s},
                      {"r_a", b.reward.r_a},
                      {"r_h", b.reward.r_h},
                      {"grade", std::string(1, grade_letter(b.judge.faithfulness_grade))},
                      {"reason", b.judge.reason},
                      {"urls", verdicts}}
                     .dump(2)
              << "\n";
  });

  // train-toy
  auto* train = app.add_subcommand("train-toy", "GRPO on the toy environment");
  std::string train_config = "data/toy_env.json", curve_path;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "{train: {...}, environment: {...}}")->capture_default_str();
  train->add_option("--seed", train_seed);
  train->add_option("--curve", curve_path, "CSV output (default stdout)");
  train->callback([&] {
    auto j = json::parse(slurp(train_config));
    auto cfg = train_config_from_json(j.value("train", json::object()));
    if (train_seed) cfg.seed = *train_seed;
    auto env = ToyEnvironment::from_json(j.at("environment"));
    auto report = train_toy(cfg, env);
    if (curve_path.empty()) {
      write_training_csv(std::cout, report);
    } else {
      std::ofstream f(curve_path);
      write_training_csv(f, report);
    }
    std::cerr << "final template distribution: " << json(report.final_probabilities).dump() << "\n";
  });

  // guardrail
  auto* guard = app.add_subcommand("guardrail", "filter text (stdin or --input) through the output guardrail");
  std::string g_input = "-", g_events, g_blocklist;
  std::size_t g_chunk = 64;
  guard->add_option("--evidence", evidence_path)->required();
  guard->add_option("--prefix-pool", prefix_path);
  guard->add_option("--input", g_input)->capture_default_str();
  guard->add_option("--events", g_events, "JSONL sidecar for guardrail events");
  guard->add_option("--blocklist", g_blocklist, "comma-separated terms");
  guard->add_option("--chunk-bytes", g_chunk, "simulate streaming in chunks of this size")->capture_default_str();
  guard->add_flag("--offline", offline);
  guard->add_option("--status", statuses);
  guard->callback([&] {
    PrefixPool pool;
    if (!prefix_path.empty()) pool = PrefixPool::load(prefix_path);
    auto evidence = read_evidence(evidence_path);
    auto validator = std::make_shared<UrlValidator>(evidence_urls(evidence), pool, make_checker(offline, statuses));
    GuardrailConfig cfg;
    cfg.blocklist = split_csv(g_blocklist);
    Guardrail g(cfg, validator);
    GuardrailState state;
    const auto text = slurp(g_input);
    if (g_chunk == 0) g_chunk = 1;
    for (std::size_t i = 0; i < text.size(); i += g_chunk) {
      std::cout << g.scan_chunk(state, std::string_view(text).substr(i, g_chunk)) << std::flush;
    }
    std::cout << g.finalize(state) << std::flush;
    if (!g_events.empty()) {
      std::ofstream f(g_events);
      for (const auto& e : state.events) f << event_to_json(e).dump() << "\n";
    }
  });

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP chat endpoint");
  std::string host = "127.0.0.1", generator = "echo";
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--generator", generator, "echo, fabricator, verbose or a URL")->capture_default_str();
  serve->add_option("--prefix-pool", prefix_path);
  serve->add_option("--blocklist", g_blocklist);
  serve->add_flag("--offline", offline);
  add_retrieval_opts(serve);
  serve->callback([&] {
    auto opts = stack_options(common);
    auto stack = build_stack(open_store(common), opts);
    PipelineConfig pc;
    if (!prefix_path.empty()) pc.prefix_pool = PrefixPool::load(prefix_path);
    pc.checker = make_checker(offline, {});
    pc.guardrail.blocklist = split_csv(g_blocklist);
    auto pipeline = std::make_shared<QAPipeline>(stack.orchestrator, make_generator(generator), pc);
    QAServer server(pipeline, opts.orchestrator);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << host << ":" << port << "\n";
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    g_server = nullptr;
  });

  // eval
  auto* eval = app.add_subcommand("eval", "run eval cases through the QA pipeline");
  std::string cases_path, report_path;
  eval->add_option("--corpus", corpus_path)->required();
  eval->add_option("--cases", cases_path)->required();
  eval->add_option("--citations", citations_path);
  eval->add_option("--prefix-pool", prefix_path);
  eval->add_option("--report", report_path, "per-case JSON report");
  eval->add_option("--generator", generator)->capture_default_str();
  eval->add_flag("--offline", offline);
  add_retrieval_opts(eval);
  eval->callback([&] {
    auto store = std::make_shared<CorpusStore>();
    store->ingest_chunks(read_corpus(corpus_path));
    if (!citations_path.empty()) {
      for (const auto& c : read_citations(citations_path)) store->record_citation(c.chunk_id, c.ts);
    }
    auto opts = stack_options(common);
    auto stack = build_stack(store, opts);
    PipelineConfig pc;
    if (!prefix_path.empty()) pc.prefix_pool = PrefixPool::load(prefix_path);
    pc.checker = make_checker(offline, {});
    QAPipeline pipeline(stack.orchestrator, make_generator(generator), pc);
    auto cases = read_cases(cases_path);
    auto report = run_eval(pipeline, cases);
    std::cout << report.summary_json().dump(2) << "\n";
    if (!report_path.empty()) {
      json rows = json::array();
      for (const auto& r : report.results) {
        json ev = json::array();
        for (const auto& e : r.guardrail_events) ev.push_back(event_to_json(e));
        rows.push_back({{"case_id", r.case_id},     {"answer", r.answer},
                        {"raw_answer", r.raw_answer}, {"evidence_ids", r.evidence_ids},
                        {"hallucinated", r.hallucinated}, {"raw_hallucinated", r.raw_hallucinated},
                        {"rouge_l", r.rouge_l},       {"guardrail_events", ev},
                        {"timings", r.timings.to_json()}});
      }
      std::ofstream(report_path) << json{{"summary", report.summary_json()}, {"cases", rows}}.dump(2) << "\n";
    }
  });

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus, cases, citations and prefix pool");
  std::uint64_t synth_seed = 1;
  std::size_t synth_size = 100;
  double hop_fraction = 0.3;
  std::string synth_out = "synth";
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--size", synth_size, "number of eval cases")->capture_default_str();
  synth->add_option("--hop-fraction", hop_fraction)->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->callback([&] {
    auto data = synth_corpus(synth_seed, synth_size, hop_fraction);
    write_synth(data, synth_out);
    std::cout << json{{"chunks", data.corpus.size()}, {"cases", data.cases.size()},
                      {"citations", data.citations.size()}, {"out", synth_out}}.dump()
              << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
