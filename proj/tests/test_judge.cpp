#include <atomic>
#include <filesystem>
#include <mutex>
#include <random>

#include <gtest/gtest.h>

#include "pow3r/judge/judge.hpp"
#include "support/fixtures.hpp"

using namespace pow3r;
using namespace pow3r::judge;
using fixtures::criterion;
using fixtures::make_task;

namespace {

std::string completion(const std::string& content) {
  return json{{"choices", json::array({json{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

/// Scripted transport: returns `status` with a verdict body, counting calls.
class MockTransport : public Transport {
 public:
  explicit MockTransport(std::function<HttpResponse(const json&)> reply) : reply_(std::move(reply)) {}

  HttpResponse post(const std::string&, const std::string& body,
                    const std::map<std::string, std::string>& headers) override {
    ++calls;
    {
      std::lock_guard lock(mu);
      last_headers = headers;
    }
    return reply_(json::parse(body));
  }

  std::atomic<int> calls{0};
  std::mutex mu;
  std::map<std::string, std::string> last_headers;

 private:
  std::function<HttpResponse(const json&)> reply_;
};

JudgeBackend remote_backend(int attempts = 3) {
  JudgeBackend b;
  b.kind = JudgeBackend::Kind::kRemote;
  b.remote.endpoint = "http://judge.invalid/v1/chat/completions";
  b.remote.model = "judge-model";
  b.remote.max_attempts = attempts;
  b.remote.max_parallel = 3;
  return b;
}

Task sample_task() {
  return make_task("t", {criterion("a", 5, "k", true), criterion("b", 2, "k"), criterion("c", 1, "m")});
}

auto no_sleep() {
  return [](std::chrono::milliseconds) {};
}

}  // namespace

TEST(Prompts, PerCriterionContainsAnchors) {
  const auto c = criterion("a", 5, "ocr");
  const auto p = render_prompt(c, "THE RESPONSE", PromptVariant::kPerCriterion);
  EXPECT_NE(p.find("OCR/text recognition criteria require exact text"), std::string::npos);
  EXPECT_NE(p.find("Return ONLY valid JSON. \"reasoning\" BEFORE \"criteria_met\"."), std::string::npos);
  EXPECT_NE(p.find("Evaluate ONLY this criterion."), std::string::npos);
  EXPECT_NE(p.find("Weight is context only"), std::string::npos);
  EXPECT_NE(p.find("- Title: text of a"), std::string::npos);
  EXPECT_NE(p.find("- Explicit | Objective | Weight: 5"), std::string::npos);
  EXPECT_NE(p.find("Response:\nTHE RESPONSE\n"), std::string::npos);
  EXPECT_NE(p.find("{\"reasoning\": \"<one sentence>\", \"criteria_met\": true/false}"), std::string::npos);
  // Four worked examples.
  std::size_t n = 0;
  for (auto pos = p.find("- Rubric: "); pos != std::string::npos; pos = p.find("- Rubric: ", pos + 1)) ++n;
  EXPECT_EQ(n, 4u);
}

TEST(Prompts, VerdictOnlyHasNoReasoningField) {
  auto c = criterion("a", 2, "k");
  c.explicitness = Explicitness::kImplicit;
  c.objectivity = Objectivity::kSubjective;
  const auto p = render_prompt(c, "r", PromptVariant::kVerdictOnly);
  EXPECT_EQ(p.find("reasoning"), std::string::npos);
  EXPECT_NE(p.find("OCR/text recognition = exact match required."), std::string::npos);
  EXPECT_NE(p.find("- Implicit | Subjective | Weight: 2"), std::string::npos);
  EXPECT_NE(p.find("Return ONLY valid JSON: {\"criteria_met\": true} or {\"criteria_met\": false}"),
            std::string::npos);
}

TEST(Prompts, PerCategoryHasScoreRule) {
  const auto t = sample_task();
  const auto p = render_category_prompt(t, "resp");
  EXPECT_NE(p.find("score = sum(weight of PASSED rubrics) / 8, between 0.0 and 1.0."), std::string::npos);
  EXPECT_NE(std::string(kPerCategoryTemplate).find("score = sum(weight of PASSED rubrics) / {total_weight}"),
            std::string::npos);
  EXPECT_NE(p.find("Total weight: 8"), std::string::npos);
  EXPECT_NE(p.find("- Title: text of c | Category: m | Explicit | Objective | Weight: 1 | Criteria: text of c"),
            std::string::npos);
}

TEST(Prompts, TitleAndRationaleAreSeparate) {
  auto c = criterion("a", 3, "k");
  c.title = "Mentions the date";
  c.text = "The response states the event date as 12 March.";
  const auto p = render_prompt(c, "r", PromptVariant::kPerCriterion);
  EXPECT_NE(p.find("- Title: Mentions the date\n"), std::string::npos);
  EXPECT_NE(p.find("- Criteria: The response states the event date as 12 March.\n"), std::string::npos);
}

TEST(Prompts, ResponseBracesAreNotPlaceholders) {
  const auto p = render_prompt(criterion("a", 1, "k"), "{rubric_title} {\"x\": 1}", PromptVariant::kPerCriterion);
  EXPECT_NE(p.find("{rubric_title} {\"x\": 1}"), std::string::npos);
}

TEST(Prompts, MissingPlaceholderIsError) {
  EXPECT_THROW(fill_template("hello {name}", {}), ValidationError);
  EXPECT_EQ(fill_template("{a} {B} {}", {{"a", "x"}}), "x {B} {}");
  auto c = criterion("a", 1, "k");
  c.text.clear();
  EXPECT_THROW(render_prompt(c, "r", PromptVariant::kPerCriterion), ValidationError);
  EXPECT_THROW(render_prompt(criterion("a", 1, "k"), "r", PromptVariant::kPerCategory), ValidationError);
}

TEST(VerdictParser, ContractCases) {
  EXPECT_EQ(parse_verdict(R"({"reasoning":"ok","criteria_met":true})").value, VerdictValue::kPass);
  EXPECT_EQ(parse_verdict(R"({"reasoning":"ok","criteria_met":true})").rationale.value(), "ok");
  EXPECT_EQ(parse_verdict(R"({"criteria_met":false})").value, VerdictValue::kFail);
  EXPECT_EQ(parse_verdict("not json at all").value, VerdictValue::kInvalid);
  EXPECT_EQ(parse_verdict(R"({"criteria_met":"yes"})").value, VerdictValue::kInvalid);
  EXPECT_EQ(parse_verdict(R"({"criteria_met":1})").value, VerdictValue::kInvalid);
  EXPECT_EQ(parse_verdict(R"({"criteria_met":null})").value, VerdictValue::kInvalid);
  EXPECT_EQ(parse_verdict(R"({"reasoning":"no verdict"})").value, VerdictValue::kInvalid);
  EXPECT_EQ(parse_verdict("[true]").value, VerdictValue::kInvalid);
  EXPECT_EQ(parse_verdict("").value, VerdictValue::kInvalid);
}

TEST(VerdictParser, ToleratesFencesAndChatter) {
  EXPECT_EQ(parse_verdict("```json\n{\"reasoning\":\"r\",\"criteria_met\":true}\n```").value, VerdictValue::kPass);
  EXPECT_EQ(parse_verdict("  \n```\n{\"criteria_met\":false}\n```  ").value, VerdictValue::kFail);
  EXPECT_EQ(parse_verdict("Sure! {\"criteria_met\": true} Hope that helps.").value, VerdictValue::kPass);
}

TEST(VerdictParser, FuzzIsTotal) {
  std::mt19937_64 rng(101);
  for (int k = 0; k < 10000; ++k) {
    std::string s(static_cast<std::size_t>(fixtures::uniform_int(rng, 0, 64)), '\0');
    for (auto& ch : s) ch = static_cast<char>(fixtures::uniform_int(rng, 0, 255));
    const auto v = parse_verdict(s).value;
    ASSERT_TRUE(v == VerdictValue::kPass || v == VerdictValue::kFail || v == VerdictValue::kInvalid);
  }
}

TEST(CategoryScore, Parses) {
  EXPECT_DOUBLE_EQ(parse_category_score(R"({"reasoning":"x","score":0.6})").value(), 0.6);
  EXPECT_FALSE(parse_category_score(R"({"score":1.2})").has_value());
  EXPECT_FALSE(parse_category_score(R"({"score":"0.5"})").has_value());
  EXPECT_FALSE(parse_category_score("junk").has_value());
}

TEST(VerdictCache, KeySensitivity) {
  const auto c = criterion("a", 1, "k");
  const auto base = VerdictCacheKey::make("t", "resp", c, "b1");
  EXPECT_EQ(base, VerdictCacheKey::make("t", "resp", c, "b1"));
  EXPECT_NE(base, VerdictCacheKey::make("t2", "resp", c, "b1"));
  EXPECT_NE(base, VerdictCacheKey::make("t", "resp!", c, "b1"));
  EXPECT_NE(base, VerdictCacheKey::make("t", "resp", c, "b2"));
  auto edited = c;
  edited.text = "changed";
  EXPECT_NE(base, VerdictCacheKey::make("t", "resp", edited, "b1"));
}

TEST(VerdictCache, PersistsAcrossInstances) {
  const auto dir = fixtures::scratch_dir("cache_persist");
  const auto path = (dir / "cache.jsonl").string();
  const auto key = VerdictCacheKey::make("t", "r", criterion("a", 1, "k"), "b");
  {
    VerdictCache cache(path);
    cache.put(key, Verdict{VerdictValue::kPass, "because"});
  }
  {
    std::ofstream torn(path, std::ios::app);
    torn << "{\"key\": \"trunc";
  }
  VerdictCache again(path);
  ASSERT_TRUE(again.get(key).has_value());
  EXPECT_EQ(*again.get(key), (Verdict{VerdictValue::kPass, "because"}));
  EXPECT_EQ(again.size(), 1u);
}

TEST(SimulatedJudge, DegenerateTableAllPass) {
  JudgeBackend b;
  b.simulated.fallback.pass_probability = 1.0;
  Judge j(b);
  const auto res = j.judge_group(sample_task(), {"r1", "r2", "r3"});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(res.matrix.at(i, k).value, VerdictValue::kPass);
  }
}

TEST(SimulatedJudge, DeterministicForSeed) {
  JudgeBackend b;
  b.simulated.seed = 9;
  b.simulated.fallback = {0.5, 0.1};
  const auto t = sample_task();
  std::vector<std::string> rs(16, "same text");
  const auto m1 = Judge(b).judge_group(t, rs).matrix;
  const auto m2 = Judge(b).judge_group(t, rs).matrix;
  EXPECT_EQ(m1, m2);
  b.simulated.seed = 10;
  EXPECT_NE(Judge(b).judge_group(t, rs).matrix, m1);
}

TEST(SimulatedJudge, FlipAppliedAfterJudging) {
  JudgeBackend b;
  b.simulated.fallback.pass_probability = 1.0;
  auto t = sample_task();
  t.criteria[1].flip_verdict = true;
  const auto res = Judge(b).judge_group(t, {"r"});
  EXPECT_EQ(res.matrix.at(0, 0).value, VerdictValue::kPass);
  EXPECT_EQ(res.matrix.at(0, 1).value, VerdictValue::kFail);
}

TEST(RemoteJudge, BuildsChatCompletionRequest) {
  auto b = remote_backend();
  b.remote.reasoning_effort = "high";
  json seen;
  auto transport = std::make_shared<MockTransport>([&](const json& body) {
    seen = body;
    return HttpResponse{200, completion(R"({"reasoning":"fine","criteria_met":true})")};
  });
  ::setenv("POW3R_TEST_KEY", "secret", 1);
  b.remote.auth_env = "POW3R_TEST_KEY";
  b.remote.max_parallel = 1;
  Judge j(b, transport, nullptr, no_sleep());
  const auto t = make_task("t", {criterion("a", 1, "k")});
  const auto res = j.judge_group(t, {"the answer"});
  EXPECT_EQ(res.matrix.at(0, 0).value, VerdictValue::kPass);
  EXPECT_EQ(seen["model"], "judge-model");
  EXPECT_EQ(seen["temperature"], 1.0);
  EXPECT_EQ(seen["max_completion_tokens"], 2048);
  EXPECT_EQ(seen["reasoning_effort"], "high");
  EXPECT_EQ(seen["messages"][0]["role"], "system");
  EXPECT_NE(seen["messages"][0]["content"].get<std::string>().find("the answer"), std::string::npos);
  EXPECT_EQ(seen["messages"][1]["content"], "the answer");
  EXPECT_EQ(transport->last_headers.at("Authorization"), "Bearer secret");
}

TEST(RemoteJudge, ForwardsImagesWhenEnabled) {
  RemoteConfig cfg;
  cfg.model = "m";
  cfg.forward_images = true;
  const auto body = build_request(cfg, "sys", "resp", std::string("https://img/x.png"));
  EXPECT_EQ(body["messages"][1]["content"][1]["image_url"]["url"], "https://img/x.png");
  cfg.forward_images = false;
  EXPECT_EQ(build_request(cfg, "sys", "resp", std::string("x"))["messages"][1]["content"], "resp");
}

TEST(RemoteJudge, RetriesWithBackoffThenSucceeds) {
  std::atomic<int> n{0};
  auto transport = std::make_shared<MockTransport>([&](const json&) {
    if (n++ < 2) return HttpResponse{503, "busy"};
    return HttpResponse{200, completion(R"({"criteria_met":false})")};
  });
  auto b = remote_backend();
  b.remote.max_parallel = 1;
  std::vector<long> sleeps;
  Judge j(b, transport, nullptr, [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  const auto res = j.judge_group(make_task("t", {criterion("a", 1, "k")}), {"r"});
  EXPECT_EQ(res.matrix.at(0, 0).value, VerdictValue::kFail);
  EXPECT_EQ(transport->calls.load(), 3);
  EXPECT_EQ(sleeps, (std::vector<long>{1000, 2000}));
  EXPECT_TRUE(res.warnings.empty());
}

TEST(RemoteJudge, ClientErrorNotRetried) {
  auto transport = std::make_shared<MockTransport>([](const json&) { return HttpResponse{401, "no"}; });
  Judge j(remote_backend(), transport, nullptr, no_sleep());
  const auto res = j.judge_group(make_task("t", {criterion("a", 1, "k")}), {"r"});
  EXPECT_EQ(transport->calls.load(), 1);
  EXPECT_EQ(res.matrix.at(0, 0).value, VerdictValue::kInvalid);
  EXPECT_EQ(res.transport_failures, 1u);
}

TEST(RemoteJudge, UnreachableGivesInvalidsAndWarning) {
  auto transport = std::make_shared<MockTransport>([](const json&) -> HttpResponse {
    throw TransportError("connection refused");
  });
  const auto dir = fixtures::scratch_dir("unreachable");
  VerdictCache cache((dir / "c.jsonl").string());
  Judge j(remote_backend(), transport, &cache, no_sleep());
  const auto t = sample_task();
  const auto res = j.judge_group(t, {"r1", "r2"});
  EXPECT_EQ(res.matrix.invalid_count(), 6u);
  EXPECT_EQ(transport->calls.load(), 18);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("connection refused"), std::string::npos);
  EXPECT_EQ(cache.size(), 0u);
}

TEST(RemoteJudge, MalformedContentIsInvalidNotRetried) {
  auto transport = std::make_shared<MockTransport>([](const json&) { return HttpResponse{200, completion("meh")}; });
  Judge j(remote_backend(), transport, nullptr, no_sleep());
  const auto res = j.judge_group(make_task("t", {criterion("a", 1, "k")}), {"r"});
  EXPECT_EQ(transport->calls.load(), 1);
  EXPECT_EQ(res.matrix.at(0, 0).value, VerdictValue::kInvalid);
  EXPECT_EQ(res.transport_failures, 0u);
}

TEST(RemoteJudge, CacheWarmRerunMakesNoCalls) {
  auto transport = std::make_shared<MockTransport>([](const json& body) {
    const bool pass = body["messages"][1]["content"].get<std::string>().size() % 2 == 0;
    return HttpResponse{200, completion(pass ? R"({"criteria_met":true})" : R"({"criteria_met":false})")};
  });
  const auto dir = fixtures::scratch_dir("cache_warm");
  const auto path = (dir / "cache.jsonl").string();
  auto t = sample_task();
  t.criteria[2].flip_verdict = true;
  const std::vector<std::string> rollouts{"aa", "bbb", "cccc", "d"};
  VerdictMatrix first;
  {
    VerdictCache cache(path);
    Judge j(remote_backend(), transport, &cache, no_sleep());
    auto res = j.judge_group(t, rollouts);
    EXPECT_EQ(res.remote_calls, 12u);
    first = res.matrix;
  }
  const int before = transport->calls.load();
  VerdictCache cache(path);
  Judge j(remote_backend(), transport, &cache, no_sleep());
  const auto res = j.judge_group(t, rollouts);
  EXPECT_EQ(transport->calls.load(), before);
  EXPECT_EQ(res.remote_calls, 0u);
  EXPECT_EQ(res.cache_hits, 12u);
  EXPECT_EQ(res.matrix, first);
}

TEST(RemoteJudge, ImageOmissionWarns) {
  auto transport = std::make_shared<MockTransport>(
      [](const json&) { return HttpResponse{200, completion(R"({"criteria_met":true})")}; });
  auto t = make_task("t", {criterion("a", 1, "k")});
  t.image_ref = "img.png";
  Judge j(remote_backend(), transport, nullptr, no_sleep());
  const auto res = j.judge_group(t, {"r"});
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("image_ref"), std::string::npos);
}

TEST(Agreement, HandCounts) {
  using V = VerdictValue;
  EXPECT_DOUBLE_EQ(agreement({V::kPass, V::kPass, V::kFail, V::kPass}, {V::kPass, V::kFail, V::kFail, V::kPass}),
                   75.0);
  EXPECT_DOUBLE_EQ(agreement({V::kPass, V::kFail}, {V::kPass, V::kFail}), 100.0);
  EXPECT_DOUBLE_EQ(agreement({V::kPass, V::kInvalid, V::kFail}, {V::kPass, V::kFail, V::kFail}), 100.0);
  EXPECT_THROW(agreement({V::kInvalid}, {V::kPass}), ValidationError);
  EXPECT_THROW(agreement({V::kPass}, {}), ValidationError);
}

TEST(Backend, DigestTracksVerdictFields) {
  auto a = remote_backend();
  auto b = remote_backend();
  b.remote.max_parallel = 17;
  EXPECT_EQ(a.digest(), b.digest());
  b.remote.model = "other";
  EXPECT_NE(a.digest(), b.digest());
}
