#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pow3r/aggregation.hpp"
#include "pow3r/dataset_io.hpp"
#include "pow3r/diagnostic.hpp"
#include "pow3r/engine.hpp"
#include "pow3r/factor_state.hpp"
#include "pow3r/judge/judge.hpp"
#include "pow3r/manifest.hpp"
#include "pow3r/simulate.hpp"

namespace pow3r::cmd {

namespace fs = std::filesystem;

struct CommandResult {
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  std::string manifest;
  std::map<std::string, std::size_t> counters;
};

namespace detail {

inline std::string out_file(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

inline void prepare_out(const std::string& dir) {
  if (dir.empty()) throw ValidationError("an output directory (--out) is required");
  fs::create_directories(dir);
}

inline CommandResult finish(RunManifest& manifest, const std::string& dir, std::vector<std::string> outputs,
                            std::vector<std::string> warnings = {}) {
  for (const auto& o : outputs) manifest.add_output(o);
  CommandResult r{std::move(outputs), std::move(warnings), "", {}};
  r.manifest = manifest.write(dir);
  return r;
}

inline std::optional<FactorState> maybe_factors(const std::optional<std::string>& path, RunManifest& manifest) {
  if (!path) return std::nullopt;
  manifest.add_input(*path);
  return load_factors(*path);
}

}  // namespace detail

struct DiagnoseOptions {
  std::string tasks;
  std::string verdicts;
  std::optional<std::string> factors;
  std::string out;
  double min_valid_fraction = Pow3rConfig{}.min_valid_fraction;
};

inline CommandResult diagnose(const DiagnoseOptions& o) {
  detail::prepare_out(o.out);
  RunManifest manifest("diagnose", json{{"min_valid_fraction", o.min_valid_fraction}}, 0);
  manifest.add_input(o.tasks);
  manifest.add_input(o.verdicts);
  const auto tasks = load_tasks(o.tasks);
  const auto matrices = load_verdicts(o.verdicts);
  if (matrices.empty()) throw ValidationError(o.verdicts + ": no verdict matrices to diagnose");
  const auto factors = detail::maybe_factors(o.factors, manifest);
  const auto report = build_pressure_report(tasks, matrices, factors ? &*factors : nullptr, o.min_valid_fraction);
  return detail::finish(manifest, o.out, emit_report(report, o.out));
}

struct RewardOptions {
  std::string tasks;
  std::string verdicts;
  Construction construction = Construction::kCategoryBalanced;
  std::optional<std::string> factors;
  std::string out;
};

inline CommandResult reward(const RewardOptions& o) {
  detail::prepare_out(o.out);
  RunManifest manifest("reward", json{{"construction", std::string(to_string(o.construction))}}, 0);
  manifest.add_input(o.tasks);
  manifest.add_input(o.verdicts);
  const auto tasks = load_tasks(o.tasks);
  const auto matrices = load_verdicts(o.verdicts);
  if (matrices.empty()) throw ValidationError(o.verdicts + ": no verdict matrices");
  const auto factors = detail::maybe_factors(o.factors, manifest);
  const RewardConstruction rc{o.construction, factors ? &*factors : nullptr};
  rc.validate();
  const TaskIndex index(tasks);
  const auto path = detail::out_file(o.out, "rewards.jsonl");
  {
    auto out = pow3r::detail::open_output(path);
    out << json{{"schema", "pow3r.rewards.v1"}}.dump() << '\n';
    for (const auto& m : matrices) out << report_to_json(compute_group_report(m, index.for_matrix(m), rc)).dump() << '\n';
  }
  return detail::finish(manifest, o.out, {path});
}

struct UpdateFactorsOptions {
  std::string tasks;
  std::string verdicts;
  std::optional<std::string> factors;
  std::string out;
  Pow3rConfig config;
};

/// Applies one factor epoch per verdict matrix, in file order.
inline CommandResult update_factors(const UpdateFactorsOptions& o) {
  o.config.validate();
  detail::prepare_out(o.out);
  RunManifest manifest("update-factors", o.config.to_json(), 0);
  manifest.add_input(o.tasks);
  manifest.add_input(o.verdicts);
  const auto tasks = load_tasks(o.tasks);
  const auto matrices = load_verdicts(o.verdicts);
  FactorState state = detail::maybe_factors(o.factors, manifest).value_or(FactorState{});
  const TaskIndex index(tasks);
  for (const auto& m : matrices) state = epoch_update(std::move(state), m, index.for_matrix(m), o.config);
  const auto path = detail::out_file(o.out, "factors.json");
  save_factors(path, state);
  return detail::finish(manifest, o.out, {path});
}

struct SimulateOptions {
  std::string tasks;
  std::vector<Construction> constructions;
  // JSON {"default": p, "criteria": {id: p}} of initial pass probabilities.
  std::optional<std::string> initial_policy;
  sim::RunConfig run;
  double learning_rate = 0.5;
  double logit_clamp = 6.0;
  std::string out;
};

inline std::pair<std::map<std::string, double>, double> load_initial_probabilities(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  std::map<std::string, double> probs;
  double fallback = 0.5;
  try {
    fallback = doc.value("default", 0.5);
    if (doc.contains("criteria")) {
      for (const auto& [id, p] : doc["criteria"].items()) probs[id] = p.get<double>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return {probs, fallback};
}

inline std::string threshold_label(double t) { return fmt::format("{:.4f}", t); }

inline CommandResult simulate(const SimulateOptions& o) {
  if (o.constructions.empty()) throw ValidationError("simulate needs at least one construction");
  o.run.validate();
  detail::prepare_out(o.out);
  json cfg{{"steps", o.run.steps},
           {"group_size", o.run.group_size},
           {"eval_interval", o.run.eval_interval},
           {"thresholds", o.run.thresholds},
           {"learning_rate", o.learning_rate},
           {"logit_clamp", o.logit_clamp},
           {"pow3r", o.run.pow3r.to_json()}};
  json names = json::array();
  for (auto c : o.constructions) names.push_back(std::string(to_string(c)));
  cfg["constructions"] = names;
  RunManifest manifest("simulate", cfg, o.run.seed);
  manifest.add_input(o.tasks);
  const auto tasks = load_tasks(o.tasks);
  std::map<std::string, double> probs;
  double fallback = 0.5;
  if (o.initial_policy) {
    manifest.add_input(*o.initial_policy);
    std::tie(probs, fallback) = load_initial_probabilities(*o.initial_policy);
  }
  const auto initial = sim::SurrogatePolicy::from_probabilities(tasks, probs, fallback, o.learning_rate, o.logit_clamp);
  const auto runs = sim::run_comparison(tasks, o.constructions, initial, o.run);

  std::vector<std::string> outputs;
  std::vector<std::string> labels;
  for (const auto& t : tasks) {
    for (const auto& c : populated_categories(t)) {
      if (std::find(labels.begin(), labels.end(), c) == labels.end()) labels.push_back(c);
    }
  }
  for (const auto& run : runs) {
    const auto path = detail::out_file(o.out, fmt::format("trajectory_{}.csv", to_string(run.construction)));
    auto out = pow3r::detail::open_output(path);
    out << "step,mean_reward,strict_rate";
    for (const auto& l : labels) out << ',' << pow3r::detail::csv_field(l);
    out << '\n';
    for (const auto& cp : run.checkpoints) {
      out << cp.step << ',' << fmt::format("{:.6f}", cp.mean_reward) << ',' << fmt::format("{:.6f}", cp.strict_rate);
      for (const auto& l : labels) {
        auto it = cp.category_reward.find(l);
        out << ',' << (it == cp.category_reward.end() ? std::string() : fmt::format("{:.6f}", it->second));
      }
      out << '\n';
    }
    outputs.push_back(path);
    if (!run.dispersion.empty()) {
      const auto dpath = detail::out_file(o.out, "factor_dispersion.csv");
      auto dout = pow3r::detail::open_output(dpath);
      dout << "category,mean_variance,alpha_std,criteria\n";
      for (const auto& d : run.dispersion) {
        dout << pow3r::detail::csv_field(d.category) << ',' << fmt::format("{:.6f}", d.mean_variance) << ','
             << fmt::format("{:.6f}", d.alpha_std) << ',' << d.criteria << '\n';
      }
      outputs.push_back(dpath);
    }
  }
  {
    const auto path = detail::out_file(o.out, "steps_to_threshold.csv");
    auto out = pow3r::detail::open_output(path);
    const bool with_speedup = runs.size() > 1;
    const auto ref = sim::reference_run(runs);
    out << "threshold";
    for (const auto& run : runs) out << ',' << to_string(run.construction);
    if (with_speedup) out << ",speedup";
    out << '\n';
    for (std::size_t t = 0; t < o.run.thresholds.size(); ++t) {
      out << threshold_label(o.run.thresholds[t]);
      for (const auto& run : runs) {
        const auto& s = run.steps_to_threshold[t];
        out << ',' << (s ? std::to_string(*s) : std::string("--"));
      }
      if (with_speedup) {
        const auto sp = sim::speedup(runs, t, ref);
        out << ',' << (sp ? fmt::format("{:.2f}x", *sp) : std::string("--"));
      }
      out << '\n';
    }
    outputs.push_back(path);
  }
  return detail::finish(manifest, o.out, outputs);
}

struct JudgeOptions {
  std::string tasks;
  std::string responses;
  judge::JudgeBackend backend;
  std::optional<std::string> cache;
  std::string out;
};

inline CommandResult run_judge(const JudgeOptions& o, std::shared_ptr<judge::Transport> transport,
                               judge::Judge::Sleeper sleeper = nullptr) {
  detail::prepare_out(o.out);
  json cfg{{"backend_digest", o.backend.digest()},
           {"backend", o.backend.kind == judge::JudgeBackend::Kind::kSimulated ? "sim" : "remote"}};
  if (o.backend.kind == judge::JudgeBackend::Kind::kRemote) cfg["remote"] = o.backend.remote.verdict_fields();
  RunManifest manifest("judge", cfg, o.backend.simulated.seed);
  manifest.add_input(o.tasks);
  manifest.add_input(o.responses);
  const auto tasks = load_tasks(o.tasks);
  const auto groups = load_responses(o.responses);
  const TaskIndex index(tasks);
  const std::string cache_path = o.cache.value_or(detail::out_file(o.out, "verdict_cache.jsonl"));
  if (fs::exists(cache_path)) manifest.add_input(cache_path);
  judge::VerdictCache cache(cache_path);
  auto j = sleeper ? judge::Judge(o.backend, std::move(transport), &cache, std::move(sleeper))
                   : judge::Judge(o.backend, std::move(transport), &cache);

  std::vector<VerdictMatrix> matrices;
  std::vector<std::string> warnings;
  std::size_t cells = 0;
  std::size_t invalid = 0;
  std::size_t failures = 0;
  std::size_t remote_calls = 0;
  std::size_t cache_hits = 0;
  json per_task = json::array();
  for (const auto& g : groups) {
    auto res = j.judge_group(index.at(g.task_id), g.responses);
    cells += res.matrix.group_size() * res.matrix.num_criteria();
    invalid += res.matrix.invalid_count();
    failures += res.transport_failures;
    remote_calls += res.remote_calls;
    cache_hits += res.cache_hits;
    per_task.push_back(json{{"task_id", g.task_id}, {"invalid_cells", res.matrix.invalid_count()}});
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    matrices.push_back(std::move(res.matrix));
  }
  const auto verdict_path = detail::out_file(o.out, "verdicts.jsonl");
  save_verdicts(verdict_path, matrices);
  const auto summary_path = detail::out_file(o.out, "judge_summary.json");
  {
    auto out = pow3r::detail::open_output(summary_path);
    json s{{"cells", cells},
           {"invalid_cells", invalid},
           {"invalid_rate", cells == 0 ? 0.0 : static_cast<double>(invalid) / static_cast<double>(cells)},
           {"transport_failures", failures},
           {"tasks", per_task},
           {"warnings", warnings}};
    out << s.dump(2) << '\n';
  }
  auto result = detail::finish(manifest, o.out, {verdict_path, summary_path, cache_path}, warnings);
  result.counters = {{"cells", cells}, {"remote_calls", remote_calls}, {"cache_hits", cache_hits},
                     {"transport_failures", failures}};
  return result;
}

struct ConvertOptions {
  std::string signed_tasks;
  std::string out;
};

inline CommandResult convert(const ConvertOptions& o) {
  detail::prepare_out(o.out);
  RunManifest manifest("convert", json::object(), 0);
  manifest.add_input(o.signed_tasks);
  std::vector<Task> converted;
  for (const auto& st : load_signed_tasks(o.signed_tasks)) converted.push_back(convert_signed(st));
  const auto path = detail::out_file(o.out, "tasks.jsonl");
  save_tasks(path, converted);
  return detail::finish(manifest, o.out, {path});
}

}  // namespace pow3r::cmd
