#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "groundqa/common.h"
#include "groundqa/reward.h"

namespace groundqa {

class GroupTooSmall : public Error {
 public:
  explicit GroupTooSmall(std::size_t g) : Error("group size " + std::to_string(g) + " < 2") {}
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// a_i = (r_i - mean) / max(std, eps), population std. Throws GroupTooSmall.
std::vector<double> group_advantages(std::span<const double> rewards, double eps = 1e-8);

/// Softmax policy over answer templates, one logit row per prompt class.
struct ToyPolicy {
  std::vector<std::vector<double>> logits;
  double temperature = 1.0;

  static ToyPolicy uniform(std::size_t classes, std::size_t templates, double temperature = 1.0);
  std::vector<double> probabilities(std::size_t cls) const;
};

struct RolloutGroup {
  std::string prompt_id;
  std::size_t prompt_class = 0;
  std::vector<std::string> responses;
  std::vector<double> rewards;
  std::vector<double> advantages;
  /// Sampled template per response and its probability under the sampling
  /// policy (the importance-ratio denominator).
  std::vector<std::size_t> templates;
  std::vector<double> behavior_probs;
  std::vector<RewardVector> components;
};

struct TrainConfig {
  int steps = 120;
  std::size_t batch_prompts = 16;
  std::size_t group_size = 8;
  double clip_ratio = 0.2;
  double learning_rate = 2.0;
  std::uint64_t seed = 7;
  double temperature = 1.0;
  std::size_t max_response_tokens = 2048;
  int update_epochs = 1;
  double advantage_eps = 1e-8;
};

/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);

struct ToyPrompt {
  std::string id;
  std::string query;
  std::vector<std::string> evidence;
  std::string gold;
  std::size_t policy_class = 0;
};

struct JudgeRule {
  std::string contains;
  Grade grade = Grade::S;
  int style = 5;
  int safety = 5;
};

/// Prompts, answer templates, gold answers, prefix pool, judge rules and
/// stubbed HTTP statuses. Templates may use {query} and {evidence_url} (the
/// first URL found in the prompt's evidence).
struct ToyEnvironment {
  std::vector<ToyPrompt> prompts;
  std::vector<std::string> templates;
  PrefixPool prefix_pool;
  std::vector<JudgeRule> judge_rules;
  JudgeRule default_rule;
  std::map<std::string, int> http_status;

  std::size_t classes() const;
  std::string render(std::size_t prompt, std::size_t tmpl) const;

  static ToyEnvironment from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

using RewardFn = std::function<RewardBreakdown(const ToyPrompt& prompt, const std::string& response)>;

/// Reward via compute_reward with a rule judge and a stub status checker
/// built from the environment.
RewardFn environment_reward(const ToyEnvironment& env, RewardWeights weights = {});

/// G samples per prompt (softmax at the policy temperature), rewards from
/// reward_fn, group advantages filled in. Reward errors abort the batch with
/// the prompt id in the message.
std::vector<RolloutGroup> collect_rollouts(const ToyPolicy& policy, const ToyEnvironment& env,
                                           std::span<const std::size_t> prompt_indices, std::size_t group_size,
                                           const RewardFn& reward_fn, std::mt19937_64& rng,
                                           std::size_t max_response_tokens = 2048, double advantage_eps = 1e-8);

/// Clipped surrogate, averaged over every sample in groups:
///   J = mean min(rho * a, clip(rho, 1 - clip, 1 + clip) * a),
///   rho = pi(template | class) / behavior_prob.
/// There is no reference-policy input and no divergence penalty.
double surrogate_objective(const ToyPolicy& policy, std::span<const RolloutGroup> groups, double clip_ratio);

/// Analytic dJ/dlogits, same shape as policy.logits.
std::vector<std::vector<double>> surrogate_gradient(const ToyPolicy& policy, std::span<const RolloutGroup> groups,
                                                    double clip_ratio);

struct UpdateStats {
  double objective = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
};

struct UpdateResult {
  ToyPolicy policy;
  UpdateStats stats;
};

/// update_epochs steps of gradient ascent on the surrogate. Throws
/// NonFiniteGradient.
UpdateResult update_policy(const ToyPolicy& policy, std::span<const RolloutGroup> groups, const TrainConfig& config);

struct StepLog {
  int step = 0;
  double mean_reward = 0.0;
  double r_f = 0.0;
  double r_s = 0.0;
  double r_a = 0.0;
  double r_h = 0.0;
};

struct TrainReport {
  std::vector<StepLog> curve;
  ToyPolicy policy;
  /// Final template distribution per class.
  std::vector<std::vector<double>> final_probabilities;
};

/// Collect / advantage / update loop for config.steps. Prompts are taken in
/// round-robin order, batch_prompts per step.
TrainReport train_toy(const TrainConfig& config, const ToyEnvironment& env, RewardFn reward_fn = nullptr);

/// CSV: step,mean_reward,r_f,r_s,r_a,r_h
void write_training_csv(std::ostream& out, const TrainReport& report);

/// Judge stub: reads the Answer B slot out of a rendered judge prompt and
/// scores it with the first rule whose text it contains.
class RuleJudge final : public JudgeClient {
 public:
  RuleJudge(std::vector<JudgeRule> rules, JudgeRule fallback);
  std::string complete(const std::string& prompt) override;

  static std::string answer_b(const std::string& prompt);

 private:
  std::vector<JudgeRule> rules_;
  JudgeRule fallback_;
};

}  // namespace groundqa
