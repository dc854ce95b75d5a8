#include "groundqa/grpo.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <ostream>

#include "groundqa/text.h"
#include "groundqa/url.h"

namespace groundqa {

using nlohmann::json;

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw GroupTooSmall(rewards.size());
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  const double denom = std::max(sd, eps);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(sd == 0.0 ? 0.0 : (r - mean) / denom);
  return out;
}

ToyPolicy ToyPolicy::uniform(std::size_t classes, std::size_t templates, double temperature) {
  ToyPolicy p;
  p.logits.assign(classes, std::vector<double>(templates, 0.0));
  p.temperature = temperature;
  return p;
}

std::vector<double> ToyPolicy::probabilities(std::size_t cls) const {
  const auto& row = logits.at(cls);
  std::vector<double> p(row.size());
  if (row.empty()) return p;
  double hi = *std::max_element(row.begin(), row.end()) / temperature;
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    p[i] = std::exp(row[i] / temperature - hi);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

// ---------------------------------------------------------------------------

std::size_t ToyEnvironment::classes() const {
  std::size_t n = 1;
  for (const auto& p : prompts) n = std::max(n, p.policy_class + 1);
  return n;
}

std::string ToyEnvironment::render(std::size_t prompt, std::size_t tmpl) const {
  const auto& p = prompts.at(prompt);
  std::string url;
  for (const auto& e : p.evidence) {
    auto urls = extract_urls(e);
    if (!urls.empty()) {
      url = urls.front();
      break;
    }
  }
  std::string out = templates.at(tmpl);
  auto replace_all = [&](const std::string& key, const std::string& value) {
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace_all("{query}", p.query);
  replace_all("{evidence_url}", url);
  return out;
}

namespace {

Grade parse_grade(const std::string& s) {
  if (s == "G") return Grade::G;
  if (s == "S") return Grade::S;
  if (s == "B") return Grade::B;
  throw Error("grade must be G, S or B: " + s);
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw Error("training config must be an object");
  c.steps = j.value("steps", c.steps);
  c.batch_prompts = j.value("batch_prompts", c.batch_prompts);
  c.group_size = j.value("group_size", c.group_size);
  c.clip_ratio = j.value("clip_ratio", c.clip_ratio);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.temperature = j.value("temperature", c.temperature);
  c.max_response_tokens = j.value("max_response_tokens", c.max_response_tokens);
  c.update_epochs = j.value("update_epochs", c.update_epochs);
  c.advantage_eps = j.value("advantage_eps", c.advantage_eps);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"steps", c.steps},
              {"batch_prompts", c.batch_prompts},
              {"group_size", c.group_size},
              {"clip_ratio", c.clip_ratio},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"temperature", c.temperature},
              {"max_response_tokens", c.max_response_tokens},
              {"update_epochs", c.update_epochs},
              {"advantage_eps", c.advantage_eps}};
}

namespace {

JudgeRule rule_from_json(const json& j) {
  JudgeRule r;
  r.contains = j.value("contains", std::string{});
  r.grade = parse_grade(j.value("grade", std::string("S")));
  r.style = j.value("style", 5);
  r.safety = j.value("safety", 5);
  return r;
}

json rule_to_json(const JudgeRule& r) {
  return json{{"contains", r.contains}, {"grade", std::string(1, grade_letter(r.grade))},
              {"style", r.style}, {"safety", r.safety}};
}

}  // namespace

ToyEnvironment ToyEnvironment::from_json(const json& j) {
  ToyEnvironment env;
  const auto& prompts = j.at("prompts");
  std::vector<std::string> gold;
  if (j.contains("gold")) gold = j.at("gold").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& pj = prompts[i];
    ToyPrompt p;
    if (pj.is_string()) {
      p.id = "p" + std::to_string(i);
      p.query = pj.get<std::string>();
    } else {
      p.id = pj.value("id", "p" + std::to_string(i));
      p.query = pj.at("query").get<std::string>();
      p.evidence = pj.value("evidence", std::vector<std::string>{});
      p.policy_class = pj.value("class", std::size_t{0});
    }
    if (i < gold.size()) p.gold = gold[i];
    env.prompts.push_back(std::move(p));
  }
  env.templates = j.at("templates").get<std::vector<std::string>>();
  if (env.templates.empty()) throw Error("environment needs at least one template");
  if (env.prompts.empty()) throw Error("environment needs at least one prompt");
  env.prefix_pool = PrefixPool(j.value("prefix_pool", std::vector<std::string>{}));
  const auto& rules = j.value("judge_rules", json::object());
  if (rules.is_array()) {
    for (const auto& r : rules) env.judge_rules.push_back(rule_from_json(r));
  } else {
    for (const auto& r : rules.value("rules", json::array())) env.judge_rules.push_back(rule_from_json(r));
    if (rules.contains("default")) env.default_rule = rule_from_json(rules["default"]);
  }
  env.http_status = j.value("http_status", std::map<std::string, int>{});
  return env;
}

json ToyEnvironment::to_json() const {
  json prompts_j = json::array();
  json gold = json::array();
  for (const auto& p : prompts) {
    prompts_j.push_back({{"id", p.id}, {"query", p.query}, {"evidence", p.evidence}, {"class", p.policy_class}});
    gold.push_back(p.gold);
  }
  json rules = json::array();
  for (const auto& r : judge_rules) rules.push_back(rule_to_json(r));
  return json{{"prompts", prompts_j},
              {"templates", templates},
              {"gold", gold},
              {"prefix_pool", prefix_pool.prefixes()},
              {"judge_rules", {{"rules", rules}, {"default", rule_to_json(default_rule)}}},
              {"http_status", http_status}};
}

// ---------------------------------------------------------------------------

RuleJudge::RuleJudge(std::vector<JudgeRule> rules, JudgeRule fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

std::string RuleJudge::answer_b(const std::string& prompt) {
  static const std::string key = "[Answer B]: ";
  auto pos = prompt.rfind(key);
  if (pos == std::string::npos) return {};
  pos += key.size();
  auto end = prompt.find("\n\n", pos);
  return prompt.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

std::string RuleJudge::complete(const std::string& prompt) {
  const auto answer = answer_b(prompt);
  const JudgeRule* rule = &fallback_;
  for (const auto& r : rules_) {
    if (!r.contains.empty() && answer.find(r.contains) != std::string::npos) {
      rule = &r;
      break;
    }
  }
  json body = {{"scores",
                {{"Evidence Faithfulness",
                  {{"reason", rule->contains.empty() ? "default rule" : "matched \"" + rule->contains + "\""},
                   {"grade", std::string(1, grade_letter(rule->grade))}}},
                 {"Style Compliance", rule->style},
                 {"Safety", rule->safety}}}};
  return body.dump();
}

RewardFn environment_reward(const ToyEnvironment& env, RewardWeights weights) {
  RewardClients clients;
  clients.judge = std::make_shared<RuleJudge>(env.judge_rules, env.default_rule);
  clients.checker = std::make_shared<StaticStatusChecker>(env.http_status);
  clients.prefix_pool = env.prefix_pool;
  return [clients, weights](const ToyPrompt& prompt, const std::string& response) {
    return compute_reward(response, prompt.evidence, prompt.gold, RewardContext{prompt.query, ""}, weights, clients);
  };
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t sample_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

std::string truncate_tokens(const std::string& text, std::size_t max_tokens) {
  std::size_t count = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    bool ws = std::isspace(static_cast<unsigned char>(text[i])) != 0;
    if (!ws && !in_token) {
      if (count == max_tokens) return text.substr(0, i);
      ++count;
    }
    in_token = !ws;
  }
  return text;
}

}  // namespace

std::vector<RolloutGroup> collect_rollouts(const ToyPolicy& policy, const ToyEnvironment& env,
                                           std::span<const std::size_t> prompt_indices, std::size_t group_size,
                                           const RewardFn& reward_fn, std::mt19937_64& rng,
                                           std::size_t max_response_tokens, double advantage_eps) {
  if (group_size < 2) throw GroupTooSmall(group_size);
  std::vector<RolloutGroup> groups(prompt_indices.size());

  // Sampling is sequential so the RNG stream does not depend on scheduling.
  for (std::size_t g = 0; g < prompt_indices.size(); ++g) {
    const auto& prompt = env.prompts.at(prompt_indices[g]);
    auto& group = groups[g];
    group.prompt_id = prompt.id;
    group.prompt_class = prompt.policy_class;
    const auto probs = policy.probabilities(prompt.policy_class);
    for (std::size_t i = 0; i < group_size; ++i) {
      auto t = sample_index(probs, uniform01(rng));
      group.templates.push_back(t);
      group.behavior_probs.push_back(probs[t]);
      group.responses.push_back(truncate_tokens(env.render(prompt_indices[g], t), max_response_tokens));
    }
  }

  std::vector<std::future<void>> jobs;
  jobs.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    jobs.push_back(std::async(std::launch::async, [&, g] {
      auto& group = groups[g];
      const auto& prompt = env.prompts.at(prompt_indices[g]);
      for (const auto& response : group.responses) {
        try {
          auto r = reward_fn(prompt, response);
          group.rewards.push_back(r.reward.total);
          group.components.push_back(r.reward);
        } catch (const std::exception& e) {
          throw Error("reward failed for prompt " + prompt.id + ": " + e.what());
        }
      }
      group.advantages = group_advantages(group.rewards, advantage_eps);
    }));
  }
  for (auto& j : jobs) j.get();
  return groups;
}

// ---------------------------------------------------------------------------

double surrogate_objective(const ToyPolicy& policy, std::span<const RolloutGroup> groups, double clip_ratio) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    const auto probs = policy.probabilities(g.prompt_class);
    for (std::size_t i = 0; i < g.templates.size(); ++i) {
      const double rho = probs[g.templates[i]] / g.behavior_probs[i];
      const double a = g.advantages[i];
      const double clipped = std::clamp(rho, 1.0 - clip_ratio, 1.0 + clip_ratio);
      total += std::min(rho * a, clipped * a);
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

std::vector<std::vector<double>> surrogate_gradient(const ToyPolicy& policy, std::span<const RolloutGroup> groups,
                                                    double clip_ratio) {
  std::vector<std::vector<double>> grad;
  for (const auto& row : policy.logits) grad.emplace_back(row.size(), 0.0);
  std::size_t n = 0;
  for (const auto& g : groups) n += g.templates.size();
  if (n == 0) return grad;

  for (const auto& g : groups) {
    const auto probs = policy.probabilities(g.prompt_class);
    auto& row = grad.at(g.prompt_class);
    for (std::size_t i = 0; i < g.templates.size(); ++i) {
      const std::size_t t = g.templates[i];
      const double rho = probs[t] / g.behavior_probs[i];
      const double a = g.advantages[i];
      const double clipped = std::clamp(rho, 1.0 - clip_ratio, 1.0 + clip_ratio);
      // The min picks the clipped branch only when it is strictly smaller,
      // and that branch is constant in the logits once rho is outside the band.
      if (clipped * a < rho * a && clipped != rho) continue;
      const double coef = a * rho / policy.temperature / static_cast<double>(n);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += coef * ((k == t ? 1.0 : 0.0) - probs[k]);
    }
  }
  return grad;
}

UpdateResult update_policy(const ToyPolicy& policy, std::span<const RolloutGroup> groups, const TrainConfig& config) {
  UpdateResult out{policy, {}};
  std::size_t samples = 0, clipped = 0;
  for (const auto& g : groups) samples += g.templates.size();

  for (int epoch = 0; epoch < std::max(1, config.update_epochs); ++epoch) {
    auto grad = surrogate_gradient(out.policy, groups, config.clip_ratio);
    double norm2 = 0.0;
    for (std::size_t c = 0; c < grad.size(); ++c) {
      for (std::size_t k = 0; k < grad[c].size(); ++k) {
        if (!std::isfinite(grad[c][k])) {
          throw NonFiniteGradient("non-finite gradient at class " + std::to_string(c) + ", template " +
                                  std::to_string(k));
        }
        norm2 += grad[c][k] * grad[c][k];
      }
    }
    out.stats.grad_norm = std::sqrt(norm2);
    for (std::size_t c = 0; c < grad.size(); ++c) {
      for (std::size_t k = 0; k < grad[c].size(); ++k) out.policy.logits[c][k] += config.learning_rate * grad[c][k];
    }
  }

  for (const auto& g : groups) {
    const auto probs = out.policy.probabilities(g.prompt_class);
    for (std::size_t i = 0; i < g.templates.size(); ++i) {
      const double rho = probs[g.templates[i]] / g.behavior_probs[i];
      if (rho < 1.0 - config.clip_ratio || rho > 1.0 + config.clip_ratio) ++clipped;
    }
  }
  out.stats.objective = surrogate_objective(out.policy, groups, config.clip_ratio);
  out.stats.clip_fraction = samples == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(samples);
  return out;
}

// ---------------------------------------------------------------------------

TrainReport train_toy(const TrainConfig& config, const ToyEnvironment& env, RewardFn reward_fn) {
  if (config.steps < 0 || config.batch_prompts == 0 || config.group_size == 0 || config.temperature <= 0) {
    throw Error("invalid training configuration");
  }
  if (!reward_fn) reward_fn = environment_reward(env);

  TrainReport report;
  report.policy = ToyPolicy::uniform(env.classes(), env.templates.size(), config.temperature);
  std::mt19937_64 rng(config.seed);
  std::size_t cursor = 0;

  for (int step = 1; step <= config.steps; ++step) {
    std::vector<std::size_t> batch;
    for (std::size_t b = 0; b < config.batch_prompts; ++b) batch.push_back(cursor++ % env.prompts.size());

    auto groups = collect_rollouts(report.policy, env, batch, config.group_size, reward_fn, rng,
                                   config.max_response_tokens, config.advantage_eps);
    StepLog log;
    log.step = step;
    std::size_t n = 0;
    for (const auto& g : groups) {
      for (const auto& c : g.components) {
        log.mean_reward += c.total;
        log.r_f += c.r_f;
        log.r_s += c.r_s;
        log.r_a += c.r_a;
        log.r_h += c.r_h;
        ++n;
      }
    }
    if (n > 0) {
      const double d = static_cast<double>(n);
      log.mean_reward /= d;
      log.r_f /= d;
      log.r_s /= d;
      log.r_a /= d;
      log.r_h /= d;
    }
    report.curve.push_back(log);
    report.policy = update_policy(report.policy, groups, config).policy;
  }
  for (std::size_t c = 0; c < report.policy.logits.size(); ++c) {
    report.final_probabilities.push_back(report.policy.probabilities(c));
  }
  return report;
}

void write_training_csv(std::ostream& out, const TrainReport& report) {
  out << "step,mean_reward,r_f,r_s,r_a,r_h\n";
  for (const auto& s : report.curve) {
    out << s.step << ',' << s.mean_reward << ',' << s.r_f << ',' << s.r_s << ',' << s.r_a << ',' << s.r_h << '\n';
  }
}

}  // namespace groundqa
