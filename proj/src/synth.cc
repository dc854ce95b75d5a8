// Synthetic customer-support corpus with planted one- and two-hop cases.

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "groundqa/serve_eval.h"
#include "groundqa/text.h"

namespace groundqa {

using nlohmann::json;

namespace {

// Multiple of the 7-day window length, so the citation log fits one window.
constexpr Timestamp kBaseTs = 1'700'092'800;
constexpr const char* kHelpPrefix = "https://help.adsplatform.example/";
constexpr const char* kConsolePrefix = "https://console.adsplatform.example/";

// Portable helpers; std distributions differ between standard libraries.
std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(rng, i)]);
}

std::string fill(std::string tmpl, const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string slot = "{" + key + "}";
    for (auto pos = tmpl.find(slot); pos != std::string::npos; pos = tmpl.find(slot, pos + value.size())) {
      tmpl.replace(pos, slot.size(), value);
    }
  }
  return tmpl;
}

class NameMaker {
 public:
  explicit NameMaker(std::mt19937_64& rng) : rng_(rng) {}

  std::string next() {
    static const char* kSyl[] = {"ka",  "lo",  "vi",  "ren", "tor", "mi",  "sa",  "qu",  "zel", "dra", "po",
                                 "nix", "bel", "cor", "fan", "gri", "hul", "jas", "ket", "lum", "mor", "nev",
                                 "ost", "pri", "rav", "sul", "tav", "ulm", "vex", "wyn", "yar", "zor"};
    constexpr std::size_t n = sizeof(kSyl) / sizeof(kSyl[0]);
    for (;;) {
      std::string name;
      for (int i = 0; i < 3; ++i) name += kSyl[below(rng_, n)];
      name[0] = static_cast<char>(name[0] - 'a' + 'A');
      if (used_.insert(name).second) return name;
    }
  }

 private:
  std::mt19937_64& rng_;
  std::set<std::string> used_;
};

struct TwoHop {
  const char* bridge;
  const char* gold;
  const char* query;
  const char* answer;
};

// Gold sentences share no content term with their query; only the bridging
// entity {B} connects them.
const TwoHop kTwoHop[] = {
    {"Billing for {E} campaigns is handled by {B} operations.",
     "{B} accounts must clear balances within {N} days via {URL}.", "{E} payment deadline?",
     "{E} is billed by {B}; {B} accounts must clear balances within {N} days via {URL}."},
    {"Creative review for {E} listings is delegated to {B} auditors.",
     "{B} reviewers respond within {N} hours; appeals go through {URL}.", "How long does {E} approval take?",
     "{E} creatives are reviewed by {B}, who respond within {N} hours; appeals go through {URL}."},
    {"Refund requests from {E} advertisers are processed by {B} finance.",
     "{B} issues credits after {N} business days, see {URL}.", "When will {E} get money back?",
     "Refunds for {E} go through {B}, which issues credits after {N} business days, see {URL}."},
};

struct OneHop {
  const char* gold;
  const char* query;
  const char* answer;
};

const OneHop kOneHop[] = {
    {"Accounts under {E} can raise daily budget caps up to {N} percent via {URL}.",
     "Can {E} raise daily budget caps?", "Yes, {E} accounts can raise daily budget caps up to {N} percent via {URL}."},
    {"Campaigns run by {E} pause automatically after {N} rejected creatives; details at {URL}.",
     "Why did {E} campaigns pause?", "{E} campaigns pause automatically after {N} rejected creatives; details at {URL}."},
    {"Invoices for {E} are exported monthly as batch {N} from {URL}.", "Where are {E} invoices exported?",
     "{E} invoices are exported monthly as batch {N} from {URL}."},
};

const char* kFiller[] = {
    "Seasonal guidance from {F} covers retail promotions in region {N}.",
    "The dashboard maintained by {F} shows impression trends for week {N}.",
    "Partners working with {F} may request a creative refresh every {N} days.",
    "Audience lists owned by {F} expire after {N} months of inactivity, see {CURL}.",
    "Keyword suggestions from {F} are refreshed nightly for catalog {N}.",
    "Placement reports prepared by {F} list the top {N} publishers.",
};

}  // namespace

SynthData synth_corpus(std::uint64_t seed, std::size_t size, double hop_fraction) {
  if (size == 0) throw Error("synth: size must be positive");
  if (!(hop_fraction >= 0.0 && hop_fraction <= 1.0)) throw Error("synth: hop fraction must be in [0, 1]");

  std::mt19937_64 rng(seed);
  NameMaker names(rng);
  SynthData out;
  out.prefix_pool = {kHelpPrefix, kConsolePrefix};

  const auto two_hop = static_cast<std::size_t>(std::llround(hop_fraction * static_cast<double>(size)));
  std::vector<int> hops(size, 1);
  for (std::size_t i = 0; i < two_hop; ++i) hops[i] = 2;
  shuffle(hops, rng);

  struct Draft {
    std::string text;
    std::string source;
    bool hot;
    int case_index;  // -1 for filler
    bool gold;
  };
  std::vector<Draft> drafts;

  for (std::size_t i = 0; i < size; ++i) {
    EvalCase c;
    c.id = "case-" + std::to_string(i);
    c.hops = hops[i];
    const std::string e = names.next();
    const std::string n = std::to_string(2 + below(rng, 88));
    const int ci = static_cast<int>(i);
    if (c.hops == 2) {
      const auto& t = kTwoHop[below(rng, std::size(kTwoHop))];
      const std::string b = names.next();
      const std::string url = std::string(kHelpPrefix) + "kb/" + to_lower(b) + "-" + n;
      std::map<std::string, std::string> vars{{"E", e}, {"B", b}, {"N", n}, {"URL", url}};
      drafts.push_back({fill(t.bridge, vars), "synth/routing.md", true, ci, false});
      drafts.push_back({fill(t.gold, vars), "synth/policies.md", true, ci, true});
      c.query = fill(t.query, vars);
      c.gold_answer = fill(t.answer, vars);
    } else {
      const auto& t = kOneHop[below(rng, std::size(kOneHop))];
      const std::string url = std::string(kHelpPrefix) + "kb/" + to_lower(e) + "-" + n;
      std::map<std::string, std::string> vars{{"E", e}, {"N", n}, {"URL", url}};
      drafts.push_back({fill(t.gold, vars), "synth/accounts.md", true, ci, true});
      c.query = fill(t.query, vars);
      c.gold_answer = fill(t.answer, vars);
    }
    out.cases.push_back(std::move(c));
  }

  const std::size_t hot = drafts.size();
  for (std::size_t i = 0; i < 9 * hot; ++i) {
    const std::string f = names.next();
    const std::string n = std::to_string(1 + below(rng, 400));
    const std::string curl = std::string(kConsolePrefix) + "audiences/" + n;
    drafts.push_back({fill(kFiller[below(rng, std::size(kFiller))], {{"F", f}, {"N", n}, {"CURL", curl}}),
                      "synth/general.md", false, -1, false});
  }

  // Interleave case and filler chunks before numbering them.
  std::vector<std::size_t> order(drafts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);

  char idbuf[32];
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& d = drafts[order[pos]];
    std::snprintf(idbuf, sizeof idbuf, "kb-%05zu", pos);
    const std::string id = idbuf;
    const Timestamp updated = kBaseTs - static_cast<Timestamp>(below(rng, 1'000'000));
    out.corpus.push_back({id, d.text, d.source, updated});
    if (d.gold) out.cases[static_cast<std::size_t>(d.case_index)].gold_chunk_ids.push_back(id);

    const std::uint64_t cites = d.hot ? 3 + below(rng, 4) : below(rng, 2);
    for (std::uint64_t k = 0; k < cites; ++k) {
      out.citations.push_back({id, kBaseTs + static_cast<Timestamp>(below(rng, 6 * 24 * 3600))});
    }
  }
  std::stable_sort(out.citations.begin(), out.citations.end(),
                   [](const Citation& a, const Citation& b) { return a.ts < b.ts; });
  return out;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("corpus.jsonl");
    for (const auto& r : data.corpus) f << chunk_record_to_json(r).dump() << '\n';
  }
  {
    auto f = open("cases.jsonl");
    for (const auto& c : data.cases) f << eval_case_to_json(c).dump() << '\n';
  }
  {
    auto f = open("prefix_pool.txt");
    for (const auto& p : data.prefix_pool) f << p << '\n';
  }
  {
    auto f = open("citations.jsonl");
    for (const auto& c : data.citations) f << json{{"chunk_id", c.chunk_id}, {"ts", c.ts}}.dump() << '\n';
  }
}

}  // namespace groundqa
