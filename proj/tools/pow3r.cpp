// Command-line front end for the pow3r reward toolkit.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "json_config.hpp"
#include "pow3r/commands.hpp"
#include "pow3r/judge/http_transport.hpp"

namespace {

using namespace pow3r;

void add_factor_flags(CLI::App* sub, Pow3rConfig& cfg) {
  sub->add_option("--alpha-min", cfg.alpha_min, "Lower factor clip")->capture_default_str();
  sub->add_option("--alpha-max", cfg.alpha_max, "Upper factor clip")->capture_default_str();
  sub->add_option("--epsilon", cfg.epsilon, "Variance smoothing constant")->capture_default_str();
  sub->add_option("--lambda", cfg.lambda, "Shrinkage toward 1")->capture_default_str();
  sub->add_option("--beta-ema", cfg.beta_ema, "Factor EMA rate")->capture_default_str();
  sub->add_option("--min-valid-fraction", cfg.min_valid_fraction, "Valid-verdict fraction needed per criterion")
      ->capture_default_str();
}

void report(const cmd::CommandResult& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& o : r.outputs) std::cerr << "wrote " << o << '\n';
  std::cout << r.manifest << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rubric reward toolkit: aggregation, factor updates, diagnostics, simulation, judging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "", "JSON config file; sections are keyed by subcommand, flags win");

  // diagnose
  cmd::DiagnoseOptions diag;
  std::string diag_factors;
  auto* diagnose = app.add_subcommand("diagnose", "Signal-state shares, training pressure, and spread tables");
  diagnose->add_option("--tasks", diag.tasks, "Tasks JSONL")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--verdicts", diag.verdicts, "Verdict matrices JSONL")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--factors", diag_factors, "Factor store for dynamic pressure")->check(CLI::ExistingFile);
  diagnose->add_option("--out", diag.out, "Output directory")->required();
  diagnose->add_option("--min-valid-fraction", diag.min_valid_fraction, "Valid-verdict fraction needed per criterion")
      ->capture_default_str();

  // reward
  cmd::RewardOptions rew;
  std::string rew_construction = "cat";
  std::string rew_factors;
  auto* reward = app.add_subcommand("reward", "Per-rollout rewards and advantages");
  reward->add_option("--tasks", rew.tasks, "Tasks JSONL")->required()->check(CLI::ExistingFile);
  reward->add_option("--verdicts", rew.verdicts, "Verdict matrices JSONL")->required()->check(CLI::ExistingFile);
  reward->add_option("--construction", rew_construction, "binary | scalar | cat | dyn")
      ->check(CLI::IsMember({"binary", "scalar", "cat", "dyn"}))
      ->capture_default_str();
  reward->add_option("--factors", rew_factors, "Factor store (required for dyn)")->check(CLI::ExistingFile);
  reward->add_option("--out", rew.out, "Output directory")->required();

  // update-factors
  cmd::UpdateFactorsOptions upd;
  std::string upd_factors;
  auto* update = app.add_subcommand("update-factors", "Apply one factor epoch per verdict matrix");
  update->add_option("--tasks", upd.tasks, "Tasks JSONL")->required()->check(CLI::ExistingFile);
  update->add_option("--verdicts", upd.verdicts, "Verdict matrices JSONL")->required()->check(CLI::ExistingFile);
  update->add_option("--factors", upd_factors, "Existing factor store")->check(CLI::ExistingFile);
  update->add_option("--out", upd.out, "Output directory")->required();
  add_factor_flags(update, upd.config);

  // simulate
  cmd::SimulateOptions simo;
  std::vector<std::string> sim_constructions{"cat", "dyn"};
  std::string sim_policy;
  auto* simulate = app.add_subcommand("simulate", "Surrogate-policy comparison of reward constructions");
  simulate->add_option("--tasks", simo.tasks, "Tasks JSONL")->required()->check(CLI::ExistingFile);
  simulate->add_option("--initial-policy", sim_policy, "JSON of initial pass probabilities")
      ->check(CLI::ExistingFile);
  simulate->add_option("--constructions", sim_constructions, "Constructions to compare")
      ->check(CLI::IsMember({"binary", "scalar", "cat", "dyn"}))
      ->delimiter(',')
      ->capture_default_str();
  simulate->add_option("--steps", simo.run.steps, "Training steps")->capture_default_str();
  simulate->add_option("--group-size", simo.run.group_size, "Rollouts per group")->capture_default_str();
  simulate->add_option("--eval-interval", simo.run.eval_interval, "Steps between checkpoints")->capture_default_str();
  simulate->add_option("--thresholds", simo.run.thresholds, "Evaluation reward thresholds")->delimiter(',');
  simulate->add_option("--seed", simo.run.seed, "Random seed")->capture_default_str();
  simulate->add_option("--learning-rate", simo.learning_rate, "Surrogate logit learning rate")->capture_default_str();
  simulate->add_option("--logit-clamp", simo.logit_clamp, "Surrogate logit bound")->capture_default_str();
  simulate->add_option("--out", simo.out, "Output directory")->required();
  add_factor_flags(simulate, simo.run.pow3r);

  // judge
  cmd::JudgeOptions jo;
  std::string judge_backend = "sim";
  std::string sim_table;
  std::uint64_t judge_seed = 0;
  std::string cache_path;
  std::string variant = "per_criterion";
  long backoff_ms = 1000;
  long timeout_s = 120;
  auto& rc = jo.backend.remote;
  auto* judge = app.add_subcommand("judge", "Fill verdict matrices with a simulated or remote judge");
  judge->add_option("--tasks", jo.tasks, "Tasks JSONL")->required()->check(CLI::ExistingFile);
  judge->add_option("--responses", jo.responses, "Rollout responses JSONL")->required()->check(CLI::ExistingFile);
  judge->add_option("--backend", judge_backend, "sim | remote")
      ->check(CLI::IsMember({"sim", "remote"}))
      ->capture_default_str();
  judge->add_option("--sim-table", sim_table, "Latent pass/invalid probabilities for the simulated judge")
      ->check(CLI::ExistingFile);
  judge->add_option("--seed", judge_seed, "Simulated judge seed")->capture_default_str();
  judge->add_option("--endpoint", rc.endpoint, "Chat-completion URL");
  judge->add_option("--model", rc.model, "Judge model name");
  judge->add_option("--reasoning-effort", rc.reasoning_effort, "Reasoning effort hint")->capture_default_str();
  judge->add_option("--temperature", rc.temperature, "Sampling temperature")->capture_default_str();
  judge->add_option("--max-tokens", rc.max_tokens, "Completion token limit")->capture_default_str();
  judge->add_option("--auth-env", rc.auth_env, "Environment variable holding the API key")->capture_default_str();
  judge->add_option("--auth-header", rc.auth_header, "Header carrying the API key")->capture_default_str();
  judge->add_option("--attempts", rc.max_attempts, "Attempts per call")->capture_default_str();
  judge->add_option("--backoff-ms", backoff_ms, "Initial retry backoff")->capture_default_str();
  judge->add_option("--timeout-s", timeout_s, "Per-request timeout")->capture_default_str();
  judge->add_option("--jobs", rc.max_parallel, "Concurrent remote calls")->capture_default_str();
  judge->add_flag("--forward-images", rc.forward_images, "Send task image references to the judge");
  judge->add_option("--variant", variant, "per_criterion | verdict_only")
      ->check(CLI::IsMember({"per_criterion", "verdict_only"}))
      ->capture_default_str();
  judge->add_option("--cache", cache_path, "Verdict cache file (default <out>/verdict_cache.jsonl)");
  judge->add_option("--out", jo.out, "Output directory")->required();

  // convert
  cmd::ConvertOptions conv;
  auto* convert = app.add_subcommand("convert", "Convert signed-weight rubrics to positive form");
  convert->add_option("--signed-tasks", conv.signed_tasks, "Signed tasks JSONL")->required()->check(CLI::ExistingFile);
  convert->add_option("--out", conv.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kValidation);
  }

  auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); };
  try {
    if (*diagnose) {
      diag.factors = opt(diag_factors);
      report(cmd::diagnose(diag));
    } else if (*reward) {
      rew.construction = parse_construction(rew_construction);
      rew.factors = opt(rew_factors);
      report(cmd::reward(rew));
    } else if (*update) {
      upd.factors = opt(upd_factors);
      report(cmd::update_factors(upd));
    } else if (*simulate) {
      for (const auto& c : sim_constructions) simo.constructions.push_back(parse_construction(c));
      simo.initial_policy = opt(sim_policy);
      report(cmd::simulate(simo));
    } else if (*judge) {
      jo.cache = opt(cache_path);
      std::shared_ptr<judge::Transport> transport;
      if (judge_backend == "sim") {
        jo.backend.kind = judge::JudgeBackend::Kind::kSimulated;
        if (!sim_table.empty()) jo.backend.simulated = judge::SimulatedJudgeTable::from_json(json::parse(read_file(sim_table)));
        if (judge->count("--seed") > 0 || sim_table.empty()) jo.backend.simulated.seed = judge_seed;
      } else {
        jo.backend.kind = judge::JudgeBackend::Kind::kRemote;
        if (rc.endpoint.empty()) throw ValidationError("remote judge needs --endpoint");
        if (backoff_ms < 0 || timeout_s <= 0) throw ValidationError("backoff must be >= 0 and timeout > 0");
        rc.initial_backoff = std::chrono::milliseconds(backoff_ms);
        rc.timeout = std::chrono::seconds(timeout_s);
        rc.variant = judge::parse_prompt_variant(variant);
        judge::split_url(rc.endpoint);
        transport = std::make_shared<judge::HttpTransport>(rc.timeout);
      }
      const auto result = cmd::run_judge(jo, transport);
      std::cerr << "judge: " << result.counters.at("cells") << " cells, " << result.counters.at("remote_calls")
                << " remote calls, " << result.counters.at("cache_hits") << " cache hits, "
                << result.counters.at("transport_failures") << " transport failures\n";
      report(result);
    } else if (*convert) {
      report(cmd::convert(conv));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kValidation);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kValidation);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kInternal);
  }
  return 0;
}
