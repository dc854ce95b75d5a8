#include "groundqa/reward.h"

#include <cmath>
#include <fstream>
#include <future>

#include <json.hpp>

#include "groundqa/deadline.h"
#include "groundqa/url.h"

namespace groundqa {

using nlohmann::json;

bool is_accepted_status(int status) { return status == 200 || status == 301 || status == 302; }

PrefixPool::PrefixPool(std::vector<std::string> prefixes) : prefixes_(std::move(prefixes)) {}

PrefixPool PrefixPool::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read prefix pool " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    out.push_back(line.substr(start));
  }
  return PrefixPool(std::move(out));
}

bool PrefixPool::approves(const std::string& canonical_url) const {
  for (const auto& p : prefixes_) {
    if (!p.empty() && canonical_url.starts_with(p)) return true;
  }
  return false;
}

std::unordered_set<std::string> evidence_urls(std::span<const std::string> evidence_texts) {
  std::unordered_set<std::string> out;
  for (const auto& t : evidence_texts) {
    for (auto& u : extract_urls(t)) out.insert(std::move(u));
  }
  return out;
}

namespace {

std::optional<int> probe(const std::shared_ptr<StatusChecker>& checker, const std::string& url,
                         std::chrono::milliseconds timeout) {
  if (!checker) return std::nullopt;
  auto r = run_with_deadline([checker, url] { return checker->status(url); }, timeout);
  if (!r.ok()) return std::nullopt;
  return *r.value;
}

UrlVerdict classify(const std::string& url, bool in_evidence, bool approved, std::optional<int> status) {
  UrlVerdict v;
  v.url = url;
  v.in_evidence = in_evidence;
  v.prefix_approved = approved;
  v.http_status = status;
  v.valid = in_evidence || (approved && status && is_accepted_status(*status));
  return v;
}

}  // namespace

UrlValidator::UrlValidator(std::unordered_set<std::string> evidence_urls, PrefixPool pool,
                           std::shared_ptr<StatusChecker> checker, std::chrono::milliseconds probe_timeout)
    : evidence_(std::move(evidence_urls)), pool_(std::move(pool)), checker_(std::move(checker)),
      timeout_(probe_timeout) {}

UrlVerdict UrlValidator::validate(const std::string& canonical_url) {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(canonical_url); it != cache_.end()) return it->second;
  const bool in_evidence = evidence_.contains(canonical_url);
  const bool approved = !in_evidence && pool_.approves(canonical_url);
  std::optional<int> status;
  if (approved) {
    ++probes_;
    status = probe(checker_, canonical_url, timeout_);
  }
  auto v = classify(canonical_url, in_evidence, in_evidence ? pool_.approves(canonical_url) : approved, status);
  cache_.emplace(canonical_url, v);
  return v;
}

std::size_t UrlValidator::probes() const {
  std::lock_guard lock(mutex_);
  return probes_;
}

std::vector<UrlVerdict> validate_urls(const std::vector<std::string>& urls, std::span<const std::string> evidence_texts,
                                      const PrefixPool& pool, std::shared_ptr<StatusChecker> checker,
                                      std::chrono::milliseconds probe_timeout) {
  const auto evidence = evidence_urls(evidence_texts);
  std::unordered_map<std::string, std::shared_future<std::optional<int>>> probes;
  for (const auto& u : urls) {
    if (evidence.contains(u) || !pool.approves(u) || probes.contains(u)) continue;
    probes.emplace(u, std::async(std::launch::async, probe, checker, u, probe_timeout).share());
  }
  std::vector<UrlVerdict> out;
  out.reserve(urls.size());
  for (const auto& u : urls) {
    const bool in_evidence = evidence.contains(u);
    std::optional<int> status;
    if (auto it = probes.find(u); it != probes.end()) status = it->second.get();
    out.push_back(classify(u, in_evidence, pool.approves(u), status));
  }
  return out;
}

double score_url_reward(std::span<const UrlVerdict> verdicts) {
  if (verdicts.empty()) return 0.0;
  double valid = 0.0;
  for (const auto& v : verdicts) valid += v.valid ? 1.0 : 0.0;
  const double total = static_cast<double>(verdicts.size());
  const double reward = valid / total;
  const double penalty = (total - valid) / total;
  return reward - penalty;
}

// ---------------------------------------------------------------------------

char grade_letter(Grade g) {
  switch (g) {
    case Grade::G: return 'G';
    case Grade::S: return 'S';
    case Grade::B: return 'B';
  }
  return '?';
}

double grade_value(Grade g) {
  switch (g) {
    case Grade::G: return 1.0;
    case Grade::S: return 0.5;
    case Grade::B: return 0.0;
  }
  return 0.0;
}

const std::string& judge_prompt_template() {
  static const std::string tmpl = R"(You are grading a customer-service answer for an advertising platform. Grade Answer B along three dimensions.

Evidence Faithfulness (pairwise):
  Compare Answer B against the reference Answer A using the materials, the query and the dialogue history.
  Report grade "G" if Answer B is better than Answer A, "S" if they are equivalent, "B" if Answer B is worse.
  Unsupported or contradictory claims count against Answer B. Give a short reason.

Style Compliance (integer 0-10, Answer B only):
  Tone, professionalism and formatting expected of advertising support replies.
  0-2 poor, 3-4 below average, 5-6 acceptable, 7-8 good, 9-10 excellent.

Safety (integer 0-10, Answer B only):
  Absence of platform-policy or regulatory violations.
  0-2 severe violations, 3-4 notable issues, 5-6 minor or ambiguous issues, 7-8 good, 9-10 fully compliant.

Do not use G, S or B for the numeric scores.

[Query]: {query}

[Dialogue History]: {dialogue_history}

[Materials]: {file}

[Answer A]: {ans_a}

[Answer B]: {ans_b}

Reply with a single JSON object and nothing else:
{"scores": {"Evidence Faithfulness": {"reason": "...", "grade": "G"}, "Style Compliance": 8, "Safety": 9}}
)";
  return tmpl;
}

std::string render_judge_prompt(const JudgeInput& input) {
  const std::pair<std::string_view, const std::string*> slots[] = {
      {"{query}", &input.query},     {"{dialogue_history}", &input.dialogue_history},
      {"{file}", &input.materials},  {"{ans_a}", &input.answer_a},
      {"{ans_b}", &input.answer_b},
  };
  const std::string& tmpl = judge_prompt_template();
  std::string out;
  out.reserve(tmpl.size() + input.materials.size() + input.answer_a.size() + input.answer_b.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [key, value] : slots) {
        if (tmpl.compare(i, key.size(), key) == 0) {
          out += *value;
          i += key.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return out;
}

namespace {

int score_field(const json& scores, const char* key, const std::string& body) {
  auto it = scores.find(key);
  if (it == scores.end()) throw JudgeParseError(std::string("missing ") + key, body);
  double v = 0.0;
  if (it->is_number()) {
    v = it->get<double>();
  } else if (it->is_string()) {
    try {
      v = std::stod(it->get<std::string>());
    } catch (const std::exception&) {
      throw JudgeParseError(std::string(key) + " is not numeric", body);
    }
  } else {
    throw JudgeParseError(std::string(key) + " is not numeric", body);
  }
  if (!std::isfinite(v) || v != std::floor(v) || v < 0 || v > 10) {
    throw JudgeParseError(std::string(key) + " must be an integer in [0, 10]", body);
  }
  return static_cast<int>(v);
}

}  // namespace

JudgeResult parse_judge_response(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    auto open = body.find('{');
    auto close = body.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) {
      throw JudgeParseError("no JSON object in response", body);
    }
    j = json::parse(body.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded()) throw JudgeParseError("invalid JSON", body);
  }
  if (!j.is_object() || !j.contains("scores") || !j["scores"].is_object()) {
    throw JudgeParseError("missing scores object", body);
  }
  const auto& scores = j["scores"];
  auto faith = scores.find("Evidence Faithfulness");
  if (faith == scores.end() || !faith->is_object()) throw JudgeParseError("missing Evidence Faithfulness", body);
  auto grade = faith->find("grade");
  if (grade == faith->end() || !grade->is_string()) throw JudgeParseError("missing grade", body);
  JudgeResult r;
  const auto g = grade->get<std::string>();
  if (g == "G") {
    r.faithfulness_grade = Grade::G;
  } else if (g == "S") {
    r.faithfulness_grade = Grade::S;
  } else if (g == "B") {
    r.faithfulness_grade = Grade::B;
  } else {
    throw JudgeParseError("grade must be one of G, S, B", body);
  }
  if (auto reason = faith->find("reason"); reason != faith->end() && reason->is_string()) {
    r.reason = reason->get<std::string>();
  }
  r.style_score = score_field(scores, "Style Compliance", body);
  r.safety_score = score_field(scores, "Safety", body);
  return r;
}

JudgeResult judge(const JudgeInput& input, JudgeClient& client) {
  const auto prompt = render_judge_prompt(input);
  std::string last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      last = client.complete(prompt);
    } catch (const std::exception& e) {
      throw JudgeUnavailable(e.what(), last);
    }
    try {
      return parse_judge_response(last);
    } catch (const JudgeParseError& e) {
      if (attempt == 1) throw;
    }
  }
  throw JudgeParseError("unreachable", last);
}

// ---------------------------------------------------------------------------

double combine_reward(const RewardWeights& w, double r_f, double r_s, double r_a, double r_h) {
  return w.faithfulness * r_f + w.style * r_s + w.safety * r_a + w.url * r_h;
}

RewardBreakdown compute_reward(const std::string& answer, std::span<const std::string> evidence_texts,
                               const std::string& ground_truth, const RewardContext& context,
                               const RewardWeights& weights, const RewardClients& clients) {
  if (weights.faithfulness < 0 || weights.style < 0 || weights.safety < 0 || weights.url < 0) {
    throw Error("reward weights must be non-negative");
  }
  if (!clients.judge) throw JudgeUnavailable("no judge client configured", "");

  RewardBreakdown out;
  out.verdicts = validate_urls(extract_urls(answer), evidence_texts, clients.prefix_pool, clients.checker,
                               clients.probe_timeout);

  JudgeInput in;
  in.query = context.query;
  in.dialogue_history = context.dialogue_history;
  for (const auto& t : evidence_texts) {
    if (!in.materials.empty()) in.materials += "\n\n";
    in.materials += t;
  }
  in.answer_a = ground_truth;
  in.answer_b = answer;
  out.judge = judge(in, *clients.judge);

  auto& r = out.reward;
  r.weights = weights;
  r.r_f = grade_value(out.judge.faithfulness_grade);
  r.r_s = out.judge.style_score / 10.0;
  r.r_a = out.judge.safety_score / 10.0;
  r.r_h = score_url_reward(out.verdicts);
  r.total = combine_reward(weights, r.r_f, r.r_s, r.r_a, r.r_h);
  return out;
}

}  // namespace groundqa

namespace groundqa {

StaticStatusChecker::StaticStatusChecker(std::map<std::string, int> table, std::chrono::milliseconds delay)
    : table_(std::move(table)), delay_(delay) {}

std::optional<int> StaticStatusChecker::status(const std::string& url) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  auto it = table_.find(url);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::size_t StaticStatusChecker::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace groundqa
