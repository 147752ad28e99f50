#include <sys/wait.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "pow3r/dataset_io.hpp"
#include "pow3r/digest.hpp"
#include "pow3r/factor_state.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using pow3r::json;

namespace {

const fs::path kGolden = POW3R_GOLDEN_DIR;
const fs::path kData = POW3R_DATA_DIR;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const auto dir = fs::temp_directory_path() / "pow3r_cli_io";
  fs::create_directories(dir);
  const auto out = dir / ("out" + std::to_string(counter));
  const auto err = dir / ("err" + std::to_string(counter++));
  const std::string cmd = env + " " + std::string(POW3R_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

void expect_dirs_match(const fs::path& got, const fs::path& want) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(want)) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(got / name), slurp(entry.path())) << name;
    ++n;
  }
  EXPECT_GT(n, 0u);
}

/// Every regular file except the manifest must be byte-identical.
void expect_same_outputs(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == "manifest.json") continue;
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++n;
  }
  EXPECT_GT(n, 0u);
}

/// Local chat-completion endpoint that always answers "criteria met".
class MockJudgeServer {
 public:
  MockJudgeServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      ++calls;
      json body{{"choices", json::array({json{{"message", {{"role", "assistant"},
                                                            {"content", R"({"reasoning":"ok","criteria_met":true})"}}}}})}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockJudgeServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  std::atomic<int> calls{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Cli, VersionAndUsage) {
  const auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("0.1.0"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("reward --tasks /nonexistent --verdicts /nonexistent --out /tmp/x").code, 2);
}

TEST(Cli, MalformedInputIsValidationError) {
  const auto dir = fixtures::scratch_dir("cli_malformed");
  write_text(dir / "tasks.jsonl", "{\"schema\": \"pow3r.tasks.v1\"}\n{not json\n");
  const auto r = run("reward --tasks " + q(dir / "tasks.jsonl") + " --verdicts " +
                     q(kGolden / "fixture_verdicts.jsonl") + " --out " + q(dir / "out"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("tasks.jsonl:2:"), std::string::npos) << r.err;
}

TEST(Cli, DiagnoseMatchesGoldens) {
  const auto dir = fixtures::scratch_dir("cli_diagnose");
  const std::string io = " --tasks " + q(kGolden / "fixture_tasks.jsonl") + " --verdicts " +
                         q(kGolden / "fixture_verdicts.jsonl");
  ASSERT_EQ(run("diagnose" + io + " --out " + q(dir / "static")).code, 0);
  expect_dirs_match(dir / "static", kGolden / "static_only");

  ASSERT_EQ(run("update-factors" + io + " --out " + q(dir / "factors")).code, 0);
  ASSERT_EQ(run("diagnose" + io + " --factors " + q(dir / "factors" / "factors.json") + " --out " + q(dir / "dyn")).code,
            0);
  expect_dirs_match(dir / "dyn", kGolden / "with_factors");
}

TEST(Cli, ManifestListsEveryFileWithDigest) {
  const auto dir = fixtures::scratch_dir("cli_manifest");
  const auto tasks = kGolden / "fixture_tasks.jsonl";
  const auto verdicts = kGolden / "fixture_verdicts.jsonl";
  ASSERT_EQ(run("update-factors --tasks " + q(tasks) + " --verdicts " + q(verdicts) + " --out " + q(dir / "f")).code, 0);
  const auto factors = dir / "f" / "factors.json";
  const auto r = run("reward --construction dyn --tasks " + q(tasks) + " --verdicts " + q(verdicts) + " --factors " +
                     q(factors) + " --out " + q(dir / "r"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("manifest.json"), std::string::npos);
  const auto m = json::parse(slurp(dir / "r" / "manifest.json"));
  EXPECT_EQ(m["command"], "reward");
  EXPECT_EQ(m["tool_version"], "0.1.0");
  std::set<std::string> inputs;
  for (const auto& f : m["inputs"]) {
    EXPECT_EQ(f["sha256"], pow3r::file_sha256(f["path"].get<std::string>()));
    inputs.insert(fs::path(f["path"].get<std::string>()).filename().string());
  }
  EXPECT_EQ(inputs, (std::set<std::string>{"fixture_tasks.jsonl", "fixture_verdicts.jsonl", "factors.json"}));
  std::set<std::string> outputs;
  for (const auto& f : m["outputs"]) {
    EXPECT_EQ(f["sha256"], pow3r::file_sha256(f["path"].get<std::string>()));
    outputs.insert(fs::path(f["path"].get<std::string>()).filename().string());
  }
  for (const auto& entry : fs::directory_iterator(dir / "r")) {
    if (entry.path().filename() != "manifest.json") EXPECT_TRUE(outputs.count(entry.path().filename().string()));
  }
}

TEST(Cli, RewardIsDeterministic) {
  const auto dir = fixtures::scratch_dir("cli_reward_det");
  const std::string io = " --tasks " + q(kGolden / "fixture_tasks.jsonl") + " --verdicts " +
                         q(kGolden / "fixture_verdicts.jsonl");
  for (const char* c : {"binary", "scalar", "cat"}) {
    ASSERT_EQ(run(std::string("reward --construction ") + c + io + " --out " + q(dir / (std::string(c) + "a"))).code, 0);
    ASSERT_EQ(run(std::string("reward --construction ") + c + io + " --out " + q(dir / (std::string(c) + "b"))).code, 0);
    expect_same_outputs(dir / (std::string(c) + "a"), dir / (std::string(c) + "b"));
  }
  const auto rewards = dir / "cata" / "rewards.jsonl";
  EXPECT_EQ(line_count(rewards), 3u);
}

TEST(Cli, DynamicRewardNeedsFactors) {
  const auto dir = fixtures::scratch_dir("cli_dyn_nofactors");
  const auto r = run("reward --construction dyn --tasks " + q(kGolden / "fixture_tasks.jsonl") + " --verdicts " +
                     q(kGolden / "fixture_verdicts.jsonl") + " --out " + q(dir));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(run("reward --construction nope --tasks " + q(kGolden / "fixture_tasks.jsonl") + " --verdicts " +
                q(kGolden / "fixture_verdicts.jsonl") + " --out " + q(dir))
                .code,
            2);
}

TEST(Cli, InvalidFactorConfigRejected) {
  const auto dir = fixtures::scratch_dir("cli_bad_config");
  const std::string io = " --tasks " + q(kGolden / "fixture_tasks.jsonl") + " --verdicts " +
                         q(kGolden / "fixture_verdicts.jsonl") + " --out " + q(dir);
  EXPECT_EQ(run("update-factors --alpha-min 1.2" + io).code, 2);
  EXPECT_EQ(run("update-factors --beta-ema 0" + io).code, 2);
  EXPECT_EQ(run("update-factors --min-valid-fraction 1.5" + io).code, 2);
}

TEST(Cli, FactorEpochsAccumulateAcrossInvocations) {
  const auto dir = fixtures::scratch_dir("cli_epochs");
  const std::string io = " --tasks " + q(kGolden / "fixture_tasks.jsonl") + " --verdicts " +
                         q(kGolden / "fixture_verdicts.jsonl");
  ASSERT_EQ(run("update-factors" + io + " --out " + q(dir / "e1")).code, 0);
  ASSERT_EQ(run("update-factors" + io + " --factors " + q(dir / "e1" / "factors.json") + " --out " + q(dir / "e2")).code,
            0);
  const auto st = pow3r::load_factors((dir / "e2" / "factors.json").string());
  EXPECT_EQ(st.find("t1", "c1")->epoch, 2);
  // c1 is saturated beside a mixed c2, so its target clips to 0.67 each epoch: 1 -> 0.934 -> 0.8812.
  EXPECT_NEAR(st.alpha("t1", "c1"), 0.8 * 0.934 + 0.2 * 0.67, 1e-12);
  EXPECT_NEAR(st.alpha("t1", "c2"), 0.8 * 1.1 + 0.2 * 1.5, 1e-12);
  EXPECT_DOUBLE_EQ(st.alpha("t1", "c3"), 1.0);
}

TEST(Cli, ConfigFileBelowFlags) {
  const auto dir = fixtures::scratch_dir("cli_config");
  write_text(dir / "config.json", R"({"simulate": {"steps": 4, "eval-interval": 1, "seed": 3, "thresholds": [0.5]}})");
  const std::string base = "--config " + q(dir / "config.json") + " simulate --tasks " + q(kData / "tasks.jsonl") +
                           " --initial-policy " + q(kData / "initial_policy.json") + " --constructions cat";
  ASSERT_EQ(run(base + " --out " + q(dir / "a")).code, 0);
  EXPECT_EQ(line_count(dir / "a" / "trajectory_cat.csv"), 1u + 5u);
  ASSERT_EQ(run(base + " --steps 2 --out " + q(dir / "b")).code, 0);
  EXPECT_EQ(line_count(dir / "b" / "trajectory_cat.csv"), 1u + 3u);
  const auto m = json::parse(slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["config"]["steps"], 2);
}

TEST(Cli, SimulateOutputs) {
  const auto dir = fixtures::scratch_dir("cli_simulate");
  const std::string base = "simulate --tasks " + q(kData / "tasks.jsonl") + " --initial-policy " +
                           q(kData / "initial_policy.json") + " --steps 20 --eval-interval 5 --thresholds 0.55,0.6";
  ASSERT_EQ(run(base + " --constructions cat --out " + q(dir / "single")).code, 0);
  const auto single = slurp(dir / "single" / "steps_to_threshold.csv");
  EXPECT_EQ(single.substr(0, single.find('\n')), "threshold,cat");
  EXPECT_FALSE(fs::exists(dir / "single" / "factor_dispersion.csv"));

  ASSERT_EQ(run(base + " --constructions binary,scalar,cat,dyn --out " + q(dir / "all_a")).code, 0);
  ASSERT_EQ(run(base + " --constructions binary,scalar,cat,dyn --out " + q(dir / "all_b")).code, 0);
  expect_same_outputs(dir / "all_a", dir / "all_b");
  const auto table = slurp(dir / "all_a" / "steps_to_threshold.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "threshold,binary,scalar,cat,dyn,speedup");
  EXPECT_TRUE(fs::exists(dir / "all_a" / "factor_dispersion.csv"));

  ASSERT_EQ(run("simulate --tasks " + q(kData / "tasks.jsonl") + " --steps 0 --thresholds 0.0,0.99 --out " +
                q(dir / "zero"))
                .code,
            0);
  EXPECT_EQ(line_count(dir / "zero" / "trajectory_cat.csv"), 2u);
  const auto zero = slurp(dir / "zero" / "steps_to_threshold.csv");
  EXPECT_NE(zero.find("0.0000,0,0"), std::string::npos) << zero;
  EXPECT_NE(zero.find("0.9900,--,--"), std::string::npos) << zero;
}

TEST(Cli, SimulatedJudgeIsDeterministic) {
  const auto dir = fixtures::scratch_dir("cli_judge_sim");
  const std::string base = "judge --tasks " + q(kData / "tasks.jsonl") + " --responses " +
                           q(kData / "responses.jsonl") + " --sim-table " + q(kData / "judge_table.json");
  const auto a = run(base + " --out " + q(dir / "a"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run(base + " --out " + q(dir / "b")).code, 0);
  expect_same_outputs(dir / "a", dir / "b");
  const auto ms = pow3r::load_verdicts((dir / "a" / "verdicts.jsonl").string());
  ASSERT_EQ(ms.size(), 3u);
  EXPECT_EQ(ms[0].group_size(), 4u);
  // Different seed, different verdicts.
  ASSERT_EQ(run(base + " --seed 99 --out " + q(dir / "c")).code, 0);
  EXPECT_NE(slurp(dir / "a" / "verdicts.jsonl"), slurp(dir / "c" / "verdicts.jsonl"));
}

TEST(Cli, RemoteJudgeCacheWarmRerunMakesNoCalls) {
  MockJudgeServer server;
  const auto dir = fixtures::scratch_dir("cli_judge_remote");
  const std::string base = "judge --backend remote --endpoint " + server.endpoint() +
                           " --model mock-judge --auth-env POW3R_CLI_TEST_KEY --tasks " + q(kData / "tasks.jsonl") +
                           " --responses " + q(kData / "responses.jsonl") + " --cache " + q(dir / "cache.jsonl");
  const auto first = run(base + " --out " + q(dir / "a"), "POW3R_CLI_TEST_KEY=k");
  ASSERT_EQ(first.code, 0) << first.err;
  const int cold = server.calls.load();
  EXPECT_EQ(cold, 4 * (7 + 4 + 5));
  // The OCR task carries an image that is not forwarded by default.
  EXPECT_NE(first.err.find("image"), std::string::npos) << first.err;

  const auto second = run(base + " --out " + q(dir / "b"), "POW3R_CLI_TEST_KEY=k");
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_EQ(server.calls.load(), cold);
  EXPECT_EQ(slurp(dir / "a" / "verdicts.jsonl"), slurp(dir / "b" / "verdicts.jsonl"));
  for (const auto& m : pow3r::load_verdicts((dir / "a" / "verdicts.jsonl").string())) EXPECT_EQ(m.invalid_count(), 0u);
}

TEST(Cli, UnreachableJudgeYieldsInvalidCells) {
  const auto dir = fixtures::scratch_dir("cli_judge_down");
  const auto r = run("judge --backend remote --endpoint http://127.0.0.1:1/v1/chat/completions --model m"
                     " --backoff-ms 0 --tasks " + q(kData / "tasks.jsonl") + " --responses " +
                     q(kData / "responses.jsonl") + " --out " + q(dir));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto summary = json::parse(slurp(dir / "judge_summary.json"));
  EXPECT_EQ(summary["cells"], 64);
  EXPECT_EQ(summary["invalid_cells"], 64);
  EXPECT_EQ(summary["transport_failures"], 64);
  EXPECT_EQ(slurp(dir / "verdict_cache.jsonl").find("criteria_met"), std::string::npos);
}

TEST(Cli, RemoteJudgeNeedsEndpoint) {
  const auto dir = fixtures::scratch_dir("cli_judge_noendpoint");
  EXPECT_EQ(run("judge --backend remote --tasks " + q(kData / "tasks.jsonl") + " --responses " +
                q(kData / "responses.jsonl") + " --out " + q(dir))
                .code,
            2);
}

TEST(Cli, ConvertSignedTasks) {
  const auto dir = fixtures::scratch_dir("cli_convert");
  const auto r = run("convert --signed-tasks " + q(kData / "signed_tasks.jsonl") + " --out " + q(dir));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tasks = pow3r::load_tasks((dir / "tasks.jsonl").string());
  ASSERT_EQ(tasks.size(), 2u);
  for (const auto& t : tasks) {
    for (const auto& c : t.criteria) EXPECT_GT(c.weight, 0);
  }
  EXPECT_TRUE(tasks[0].criteria[2].flip_verdict);
  EXPECT_EQ(tasks[0].criteria[2].weight, 8);
  EXPECT_FALSE(tasks[0].criteria[0].flip_verdict);
}
