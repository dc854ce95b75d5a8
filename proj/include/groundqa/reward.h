#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "groundqa/common.h"

namespace groundqa {

// --- URL validity -----------------------------------------------------------

/// valid = in_evidence || (prefix_approved && http_status in {200, 301, 302}).
/// http_status is only present when a probe was made and answered.
struct UrlVerdict {
  std::string url;
  bool in_evidence = false;
  bool prefix_approved = false;
  std::optional<int> http_status;
  bool valid = false;

  bool operator==(const UrlVerdict&) const = default;
};

bool is_accepted_status(int status);

/// Single-request status probe (no redirect following). nullopt or a thrown
/// exception both mean "could not establish", which is treated as invalid.
class StatusChecker {
 public:
  virtual ~StatusChecker() = default;
  virtual std::optional<int> status(const std::string& url) = 0;
};

/// In-memory status table; unknown URLs look like a network failure. An
/// optional delay simulates a slow endpoint. Counts calls.
class StaticStatusChecker final : public StatusChecker {
 public:
  explicit StaticStatusChecker(std::map<std::string, int> table = {},
                               std::chrono::milliseconds delay = std::chrono::milliseconds(0));
  std::optional<int> status(const std::string& url) override;
  std::size_t calls() const;

 private:
  std::map<std::string, int> table_;
  std::chrono::milliseconds delay_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Approved URL prefixes; plain string-prefix match on the canonical URL.
class PrefixPool {
 public:
  PrefixPool() = default;
  explicit PrefixPool(std::vector<std::string> prefixes);

  /// One prefix per line; blank lines and lines starting with '#' skipped.
  static PrefixPool load(const std::filesystem::path& path);

  bool approves(const std::string& canonical_url) const;
  const std::vector<std::string>& prefixes() const { return prefixes_; }

 private:
  std::vector<std::string> prefixes_;
};

/// Union of extract_urls over every evidence text.
std::unordered_set<std::string> evidence_urls(std::span<const std::string> evidence_texts);

inline constexpr std::chrono::milliseconds kDefaultProbeTimeout{3000};

/// URL validation with a per-instance verdict cache; each URL is probed at
/// most once. Thread-safe.
class UrlValidator {
 public:
  UrlValidator(std::unordered_set<std::string> evidence_urls, PrefixPool pool,
               std::shared_ptr<StatusChecker> checker,
               std::chrono::milliseconds probe_timeout = kDefaultProbeTimeout);

  UrlVerdict validate(const std::string& canonical_url);
  std::size_t probes() const;

 private:
  std::unordered_set<std::string> evidence_;
  PrefixPool pool_;
  std::shared_ptr<StatusChecker> checker_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, UrlVerdict> cache_;
  std::size_t probes_ = 0;
};

/// Verdicts in input order. Distinct URLs are probed concurrently.
std::vector<UrlVerdict> validate_urls(const std::vector<std::string>& urls, std::span<const std::string> evidence_texts,
                                      const PrefixPool& pool, std::shared_ptr<StatusChecker> checker,
                                      std::chrono::milliseconds probe_timeout = kDefaultProbeTimeout);

/// (|valid| - |invalid|) / |urls|, or 0 without URLs. Range [-1, 1].
double score_url_reward(std::span<const UrlVerdict> verdicts);

// --- Judge ------------------------------------------------------------------

enum class Grade { G, S, B };

char grade_letter(Grade g);
/// G -> 1.0, S -> 0.5, B -> 0.0
double grade_value(Grade g);

struct JudgeResult {
  Grade faithfulness_grade = Grade::S;
  std::string reason;
  int style_score = 0;
  int safety_score = 0;
};

/// Everything the judge template needs. answer_a is the reference (ground
/// truth), answer_b the answer under evaluation.
struct JudgeInput {
  std::string query;
  std::string dialogue_history;
  std::string materials;
  std::string answer_a;
  std::string answer_b;
};

/// LLM-as-judge transport: prompt in, raw response body out. Throws
/// ClientError when the service cannot be reached.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

class JudgeUnavailable : public Error {
 public:
  JudgeUnavailable(const std::string& what, std::string raw) : Error("judge unavailable: " + what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class JudgeParseError : public Error {
 public:
  JudgeParseError(const std::string& what, std::string raw) : Error("judge parse error: " + what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

/// Prompt template with {query}, {dialogue_history}, {file}, {ans_a}, {ans_b}.
const std::string& judge_prompt_template();
std::string render_judge_prompt(const JudgeInput& input);

/// Parses {"scores": {"Evidence Faithfulness": {"reason", "grade"},
/// "Style Compliance": int, "Safety": int}}. Tolerates surrounding prose or a
/// code fence around the object. Throws JudgeParseError.
JudgeResult parse_judge_response(const std::string& body);

/// One retry on a parse failure, then JudgeParseError. Transport failure
/// raises JudgeUnavailable.
JudgeResult judge(const JudgeInput& input, JudgeClient& client);

// --- Total reward -----------------------------------------------------------

struct RewardWeights {
  double faithfulness = 1.0;  // lambda_1
  double style = 1.0;         // lambda_2
  double safety = 2.0;        // lambda_3
  double url = 2.0;           // lambda_4
};

struct RewardVector {
  double r_f = 0.0;
  double r_s = 0.0;
  double r_a = 0.0;
  double r_h = 0.0;
  RewardWeights weights;
  double total = 0.0;
};

double combine_reward(const RewardWeights& w, double r_f, double r_s, double r_a, double r_h);

struct RewardContext {
  std::string query;
  std::string dialogue_history;
};

struct RewardClients {
  std::shared_ptr<JudgeClient> judge;
  std::shared_ptr<StatusChecker> checker;
  PrefixPool prefix_pool;
  std::chrono::milliseconds probe_timeout = kDefaultProbeTimeout;
};

struct RewardBreakdown {
  RewardVector reward;
  JudgeResult judge;
  std::vector<UrlVerdict> verdicts;
};

/// Full reward: URL extraction and validation, judge call, normalization to
/// r_f = grade value, r_s = style/10, r_a = safety/10, then the weighted sum.
RewardBreakdown compute_reward(const std::string& answer, std::span<const std::string> evidence_texts,
                               const std::string& ground_truth, const RewardContext& context,
                               const RewardWeights& weights, const RewardClients& clients);

}  // namespace groundqa
