#include <doctest.h>

#include <atomic>
#include <thread>

#include "groundqa/grpo.h"
#include "groundqa/reward.h"

using namespace groundqa;
using namespace std::chrono_literals;

namespace {

class ScriptedJudge final : public JudgeClient {
 public:
  explicit ScriptedJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const std::string& prompt) override {
    last_prompt = prompt;
    ++calls;
    return replies_.at(std::min(calls - 1, replies_.size() - 1));
  }
  std::size_t calls = 0;
  std::string last_prompt;

 private:
  std::vector<std::string> replies_;
};

class DownJudge final : public JudgeClient {
 public:
  std::string complete(const std::string&) override { throw ClientError("connection refused"); }
};

const char* kGood = R"({"scores": {"Evidence Faithfulness": {"reason": "matches", "grade": "G"}, "Style Compliance": 8, "Safety": 9}})";

}  // namespace

TEST_CASE("accepted statuses") {
  for (int s : {200, 301, 302}) CHECK(is_accepted_status(s));
  for (int s : {0, 201, 204, 303, 304, 307, 308, 400, 404, 500}) CHECK_FALSE(is_accepted_status(s));
}

TEST_CASE("prefix pool is a plain prefix match") {
  PrefixPool pool({"https://help.ads.example/", "https://console.ads.example/x"});
  CHECK(pool.approves("https://help.ads.example/kb/1"));
  CHECK(pool.approves("https://console.ads.example/xyz"));
  CHECK_FALSE(pool.approves("https://help.ads.example.evil.io/"));
  CHECK_FALSE(pool.approves("http://help.ads.example/kb/1"));
  CHECK_FALSE(PrefixPool().approves("https://help.ads.example/"));
}

TEST_CASE("validate_urls covers each branch") {
  auto checker = std::make_shared<StaticStatusChecker>(std::map<std::string, int>{
      {"https://p.io/ok", 200}, {"https://p.io/moved", 301}, {"https://p.io/gone", 404}});
  PrefixPool pool({"https://p.io/"});
  std::vector<std::string> evidence{"See https://e.io/a and https://p.io/gone."};
  auto v = validate_urls({"https://e.io/a", "https://p.io/ok", "https://p.io/moved", "https://p.io/gone",
                          "https://p.io/unknown", "https://x.io/ok"},
                         evidence, pool, checker);
  REQUIRE(v.size() == 6);
  CHECK(v[0].valid);
  CHECK(v[0].in_evidence);
  CHECK_FALSE(v[0].http_status);
  CHECK(v[1].valid);
  CHECK(v[2].valid);
  CHECK(v[3].valid);  // in evidence wins over a 404
  CHECK_FALSE(v[4].valid);
  CHECK_FALSE(v[4].http_status);
  CHECK_FALSE(v[5].valid);
  CHECK_FALSE(v[5].prefix_approved);
  // only approved, non-evidence URLs are probed
  CHECK(checker->calls() == 3);
}

TEST_CASE("slow probes fail closed") {
  auto slow = std::make_shared<StaticStatusChecker>(std::map<std::string, int>{{"https://p.io/ok", 200}}, 300ms);
  const auto t0 = std::chrono::steady_clock::now();
  auto v = validate_urls({"https://p.io/ok"}, {}, PrefixPool({"https://p.io/"}), slow, 30ms);
  CHECK(std::chrono::steady_clock::now() - t0 < 250ms);
  CHECK_FALSE(v[0].valid);
}

TEST_CASE("validator caches verdicts per URL") {
  auto checker = std::make_shared<StaticStatusChecker>(std::map<std::string, int>{{"https://p.io/ok", 200}});
  UrlValidator val({}, PrefixPool({"https://p.io/"}), checker);
  CHECK(val.validate("https://p.io/ok").valid);
  CHECK(val.validate("https://p.io/ok").valid);
  CHECK(val.probes() == 1);
  CHECK(checker->calls() == 1);
}

TEST_CASE("url reward is (valid - invalid) / total") {
  auto mk = [](std::vector<bool> valid) {
    std::vector<UrlVerdict> v;
    for (bool b : valid) v.push_back(UrlVerdict{"u", false, false, std::nullopt, b});
    return v;
  };
  CHECK(score_url_reward(mk({})) == 0.0);
  CHECK(score_url_reward(mk({true, true})) == 1.0);
  CHECK(score_url_reward(mk({false})) == -1.0);
  CHECK(score_url_reward(mk({true, false, false, true, true})) == doctest::Approx(0.2));
}

TEST_CASE("judge prompt fills every slot, reference as answer A") {
  JudgeInput in{"Q?", "user: hi", "MATERIALS", "REFERENCE", "CANDIDATE"};
  auto p = render_judge_prompt(in);
  CHECK(p.find("[Query]: Q?") != std::string::npos);
  CHECK(p.find("[Dialogue History]: user: hi") != std::string::npos);
  CHECK(p.find("[Materials]: MATERIALS") != std::string::npos);
  CHECK(p.find("[Answer A]: REFERENCE") != std::string::npos);
  CHECK(p.find("[Answer B]: CANDIDATE") != std::string::npos);
  CHECK(p.find("{ans_") == std::string::npos);
  CHECK(RuleJudge::answer_b(p) == "CANDIDATE");
  // slot text inside a value is not expanded again
  JudgeInput tricky{"{ans_a}", "", "", "A", "B"};
  CHECK(render_judge_prompt(tricky).find("[Query]: {ans_a}") != std::string::npos);
}

TEST_CASE("judge response parsing") {
  auto r = parse_judge_response(kGood);
  CHECK(r.faithfulness_grade == Grade::G);
  CHECK(r.reason == "matches");
  CHECK(r.style_score == 8);
  CHECK(r.safety_score == 9);

  auto fenced = parse_judge_response(std::string("Here you go:\n```json\n") + kGood + "\n```");
  CHECK(fenced.safety_score == 9);

  CHECK(parse_judge_response(R"({"scores": {"Evidence Faithfulness": {"grade": "B"}, "Style Compliance": "7", "Safety": 0}})")
            .style_score == 7);
  CHECK_THROWS_AS(parse_judge_response("no json"), JudgeParseError);
  CHECK_THROWS_AS(parse_judge_response(R"({"scores": {"Evidence Faithfulness": {"grade": "X"}, "Style Compliance": 1, "Safety": 1}})"),
                  JudgeParseError);
  CHECK_THROWS_AS(parse_judge_response(R"({"scores": {"Evidence Faithfulness": {"grade": "G"}, "Style Compliance": 11, "Safety": 1}})"),
                  JudgeParseError);
  CHECK_THROWS_AS(parse_judge_response(R"({"scores": {"Evidence Faithfulness": {"grade": "G"}, "Style Compliance": 7.5, "Safety": 1}})"),
                  JudgeParseError);
  CHECK_THROWS_AS(parse_judge_response(R"({"scores": {"Evidence Faithfulness": {"grade": "G"}, "Safety": 1}})"),
                  JudgeParseError);
}

TEST_CASE("judge retries once on a parse error") {
  ScriptedJudge once({"garbage", kGood});
  CHECK(judge(JudgeInput{}, once).style_score == 8);
  CHECK(once.calls == 2);

  ScriptedJudge never({"garbage"});
  CHECK_THROWS_AS(judge(JudgeInput{}, never), JudgeParseError);
  CHECK(never.calls == 2);

  DownJudge down;
  CHECK_THROWS_AS(judge(JudgeInput{}, down), JudgeUnavailable);
}

TEST_CASE("combined reward with default weights") {
  RewardWeights w;
  CHECK(combine_reward(w, 1, 1, 1, 1) == 6.0);
  CHECK(combine_reward(w, 0.5, 0.3, 0.8, -1) == doctest::Approx(0.5 + 0.3 + 1.6 - 2.0));
}

TEST_CASE("compute_reward end to end") {
  RewardClients clients;
  auto judge_client = std::make_shared<ScriptedJudge>(std::vector<std::string>{kGood});
  clients.judge = judge_client;
  clients.checker = std::make_shared<StaticStatusChecker>(std::map<std::string, int>{{"https://p.io/live", 200}});
  clients.prefix_pool = PrefixPool({"https://p.io/"});
  std::vector<std::string> evidence{"Policy at https://e.io/policy."};
  auto b = compute_reward("Read https://e.io/policy and https://p.io/live, not https://fake.io/x.", evidence,
                          "the reference", RewardContext{"q", "h"}, RewardWeights{}, clients);
  CHECK(b.reward.r_f == 1.0);
  CHECK(b.reward.r_s == doctest::Approx(0.8));
  CHECK(b.reward.r_a == doctest::Approx(0.9));
  CHECK(b.reward.r_h == doctest::Approx(1.0 / 3.0));
  CHECK(b.reward.total == doctest::Approx(1.0 + 0.8 + 1.8 + 2.0 / 3.0));
  CHECK(judge_client->last_prompt.find("[Answer A]: the reference") != std::string::npos);

  clients.judge = std::make_shared<DownJudge>();
  CHECK_THROWS_AS(compute_reward("x", evidence, "gt", {}, RewardWeights{}, clients), JudgeUnavailable);
  clients.judge = judge_client;
  CHECK_THROWS(compute_reward("x", evidence, "gt", {}, RewardWeights{-1, 1, 1, 1}, clients));
}

TEST_CASE("answer without URLs has r_h = 0") {
  RewardClients clients;
  clients.judge = std::make_shared<ScriptedJudge>(std::vector<std::string>{kGood});
  auto b = compute_reward("plain answer", {}, "gt", {}, RewardWeights{}, clients);
  CHECK(b.reward.r_h == 0.0);
  CHECK(b.verdicts.empty());
}
