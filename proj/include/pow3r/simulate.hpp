#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pow3r/aggregation.hpp"
#include "pow3r/engine.hpp"
#include "pow3r/error.hpp"
#include "pow3r/factor_state.hpp"
#include "pow3r/random.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r::sim {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Synthetic policy: one pass-probability logit per (task, criterion).
struct SurrogatePolicy {
  double learning_rate = 0.5;
  double logit_clamp = 6.0;
  std::map<std::string, std::vector<double>> logits;

  /// Initial policy from per-criterion pass probabilities (looked up by criterion id,
  /// `fallback` otherwise), clamped into the logit band.
  static SurrogatePolicy from_probabilities(const std::vector<Task>& tasks,
                                            const std::map<std::string, double>& probabilities, double fallback = 0.5,
                                            double learning_rate = 0.5, double logit_clamp = 6.0) {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(logit_clamp > 0.0)) throw ValidationError("logit clamp must be positive");
    SurrogatePolicy policy;
    policy.learning_rate = learning_rate;
    policy.logit_clamp = logit_clamp;
    for (const auto& t : tasks) {
      auto& row = policy.logits[t.id];
      for (const auto& c : t.criteria) {
        auto it = probabilities.find(c.id);
        const double p = it == probabilities.end() ? fallback : it->second;
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("initial probability for '" + c.id + "' outside [0, 1]");
        row.push_back(std::clamp(logit(p), -logit_clamp, logit_clamp));
      }
    }
    return policy;
  }

  const std::vector<double>& logits_for(const Task& task) const {
    auto it = logits.find(task.id);
    if (it == logits.end() || it->second.size() != task.criteria.size()) {
      throw ValidationError("surrogate policy does not cover task '" + task.id + "'");
    }
    return it->second;
  }

  std::vector<double> probabilities(const Task& task) const {
    std::vector<double> out;
    for (double z : logits_for(task)) out.push_back(logistic(z));
    return out;
  }
};

/// Common-random-number coordinates for one sampled group.
struct DrawCoordinates {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Independent Bernoulli verdicts with the given pass probabilities. The uniform
/// for cell (i, j) depends only on (seed, step, task id, i, criterion id).
inline VerdictMatrix sample_group(std::span<const double> probabilities, const Task& task, std::size_t group_size,
                                  DrawCoordinates at) {
  if (probabilities.size() != task.criteria.size()) throw ValidationError("probabilities do not cover the task");
  if (group_size < 1) throw ValidationError("group size must be >= 1");
  VerdictMatrix m(task.id, group_size, task.criteria.size());
  std::uint64_t base = hash_combine(hash_combine(splitmix64(at.seed), at.step), task.id);
  for (std::size_t i = 0; i < group_size; ++i) {
    const std::uint64_t row = hash_combine(base, static_cast<std::uint64_t>(i));
    for (std::size_t j = 0; j < task.criteria.size(); ++j) {
      const double u = unit_interval(hash_combine(row, task.criteria[j].id));
      m.set(i, j, u < probabilities[j] ? VerdictValue::kPass : VerdictValue::kFail);
    }
  }
  return m;
}

inline VerdictMatrix sample_group(const SurrogatePolicy& policy, const Task& task, std::size_t group_size,
                                  DrawCoordinates at) {
  return sample_group(policy.probabilities(task), task, group_size, at);
}

/// Covariance credit: dlogit_j = lr * mean_i A_i * (s_ij - mean_i s_ij).
inline std::vector<double> logit_updates(const VerdictMatrix& matrix, std::span<const double> advantages,
                                         double learning_rate) {
  if (advantages.size() != matrix.group_size()) throw ValidationError("advantages do not match the group");
  const double g = static_cast<double>(matrix.group_size());
  std::vector<double> out(matrix.num_criteria(), 0.0);
  for (std::size_t j = 0; j < matrix.num_criteria(); ++j) {
    double rate = 0.0;
    for (std::size_t i = 0; i < matrix.group_size(); ++i) rate += matrix.score(i, j);
    rate /= g;
    double acc = 0.0;
    for (std::size_t i = 0; i < matrix.group_size(); ++i) acc += advantages[i] * (matrix.score(i, j) - rate);
    out[j] = learning_rate * acc / g;
  }
  return out;
}

inline SurrogatePolicy policy_step(SurrogatePolicy policy, const Task& task, const VerdictMatrix& matrix,
                                   std::span<const double> advantages) {
  validate_matrix(matrix, task);
  policy.logits_for(task);
  const auto delta = logit_updates(matrix, advantages, policy.learning_rate);
  auto& row = policy.logits[task.id];
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (delta[j] != 0.0) row[j] = std::clamp(row[j] + delta[j], -policy.logit_clamp, policy.logit_clamp);
  }
  return policy;
}

struct RunConfig {
  std::size_t steps = 664;
  std::size_t group_size = 16;
  std::size_t eval_interval = 83;
  std::vector<double> thresholds;
  std::uint64_t seed = 0;
  Pow3rConfig pow3r;

  void validate() const {
    if (group_size < 2) throw ValidationError("group size must be >= 2");
    if (eval_interval < 1) throw ValidationError("eval interval must be >= 1");
    pow3r.validate();
  }
};

struct Checkpoint {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double strict_rate = 0.0;
  // Mean expected category score per label, over tasks that populate it.
  std::map<std::string, double> category_reward;
};

struct CategoryDispersion {
  std::string category;
  double mean_variance = 0.0;
  double alpha_std = 0.0;
  std::size_t criteria = 0;
};

struct Trajectory {
  Construction construction = Construction::kCategoryBalanced;
  std::vector<Checkpoint> checkpoints;
  // Parallel to RunConfig::thresholds; nullopt = not reached.
  std::vector<std::optional<std::size_t>> steps_to_threshold;
  std::vector<CategoryDispersion> dispersion;
};

/// Expected evaluation metrics under the policy's pass probabilities. The
/// evaluation reward is always the category-balanced reward.
inline Checkpoint evaluate(const SurrogatePolicy& policy, const std::vector<Task>& tasks, std::size_t step) {
  Checkpoint cp;
  cp.step = step;
  std::map<std::string, std::pair<double, std::size_t>> cats;
  for (const auto& task : tasks) {
    const auto p = policy.probabilities(task);
    const auto members = category_members(task);
    double reward = 0.0;
    std::size_t populated = 0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k].empty()) continue;
      double num = 0.0;
      double den = 0.0;
      for (auto j : members[k]) {
        num += task.criteria[j].weight * p[j];
        den += task.criteria[j].weight;
      }
      reward += num / den;
      ++populated;
      auto& acc = cats[task.categories[k]];
      acc.first += num / den;
      acc.second += 1;
    }
    cp.mean_reward += reward / static_cast<double>(populated);
    double strict = 1.0;
    for (std::size_t j = 0; j < task.criteria.size(); ++j) {
      if (task.criteria[j].required) strict *= p[j];
    }
    cp.strict_rate += strict;
  }
  if (!tasks.empty()) {
    cp.mean_reward /= static_cast<double>(tasks.size());
    cp.strict_rate /= static_cast<double>(tasks.size());
  }
  for (const auto& [label, acc] : cats) cp.category_reward[label] = acc.first / static_cast<double>(acc.second);
  return cp;
}

/// Per category label: mean last-epoch variance and mean within-(task, category)
/// population std of the factors. Categories without recorded stats are omitted.
inline std::vector<CategoryDispersion> factor_dispersion(const FactorState& state, const std::vector<Task>& tasks) {
  struct Acc {
    double v_sum = 0.0;
    std::size_t v_n = 0;
    double std_sum = 0.0;
    std::size_t groups = 0;
  };
  std::map<std::string, Acc> acc;
  bool any = false;
  for (const auto& task : tasks) {
    const auto members = category_members(task);
    for (std::size_t k = 0; k < members.size(); ++k) {
      std::vector<double> alphas;
      for (auto j : members[k]) {
        const auto* e = state.find(task.id, task.criteria[j].id);
        if (e == nullptr || !e->last_stats) continue;
        alphas.push_back(e->alpha);
        acc[task.categories[k]].v_sum += e->last_stats->v;
        acc[task.categories[k]].v_n += 1;
      }
      if (alphas.empty()) continue;
      any = true;
      const double m = mean(alphas);
      double ss = 0.0;
      for (double a : alphas) ss += (a - m) * (a - m);
      acc[task.categories[k]].std_sum += std::sqrt(ss / static_cast<double>(alphas.size()));
      acc[task.categories[k]].groups += 1;
    }
  }
  if (!any) throw ValidationError("factor dispersion needs at least one completed factor epoch");
  std::vector<CategoryDispersion> out;
  for (const auto& [label, a] : acc) {
    out.push_back(CategoryDispersion{label, a.v_sum / static_cast<double>(a.v_n),
                                     a.std_sum / static_cast<double>(a.groups), a.v_n});
  }
  return out;
}

/// Trains one construction from `initial` and records checkpoints every
/// eval_interval steps. One step draws one group per task.
inline Trajectory run_construction(const std::vector<Task>& tasks, Construction construction,
                                   const SurrogatePolicy& initial, const RunConfig& config) {
  config.validate();
  if (construction == Construction::kBinary) {
    for (const auto& t : tasks) {
      if (std::none_of(t.criteria.begin(), t.criteria.end(), [](const Criterion& c) { return c.required; })) {
        throw ValidationError("task '" + t.id + "' has no required criteria; binary reward is degenerate");
      }
    }
  }
  Trajectory traj;
  traj.construction = construction;
  SurrogatePolicy policy = initial;
  FactorState factors;
  traj.checkpoints.push_back(evaluate(policy, tasks, 0));
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (const auto& task : tasks) {
      const auto matrix = sample_group(policy, task, config.group_size, DrawCoordinates{config.seed, step});
      const RewardConstruction rc{construction, &factors};
      const auto rewards = compute_rewards(matrix, task, rc);
      const auto adv = advantages(rewards);
      policy = policy_step(std::move(policy), task, matrix, adv);
      if (construction == Construction::kPow3rDynamic) factors = epoch_update(std::move(factors), matrix, task, config.pow3r);
    }
    if (step % config.eval_interval == 0) traj.checkpoints.push_back(evaluate(policy, tasks, step));
  }
  for (double threshold : config.thresholds) {
    std::optional<std::size_t> hit;
    for (const auto& cp : traj.checkpoints) {
      if (cp.mean_reward >= threshold) {
        hit = cp.step;
        break;
      }
    }
    traj.steps_to_threshold.push_back(hit);
  }
  if (construction == Construction::kPow3rDynamic && !factors.empty()) traj.dispersion = factor_dispersion(factors, tasks);
  return traj;
}

/// Matched-compute comparison: identical seed, tasks, initial policy, and step
/// budget for every construction.
inline std::vector<Trajectory> run_comparison(const std::vector<Task>& tasks,
                                              const std::vector<Construction>& constructions,
                                              const SurrogatePolicy& initial, const RunConfig& config) {
  if (constructions.empty()) throw ValidationError("simulation needs at least one construction");
  std::vector<Trajectory> out;
  for (auto c : constructions) out.push_back(run_construction(tasks, c, initial, config));
  return out;
}

/// Slowest other construction's crossing step divided by the reference's.
inline std::optional<double> speedup(const std::vector<Trajectory>& runs, std::size_t threshold_index,
                                     std::size_t reference) {
  const auto& ref = runs[reference].steps_to_threshold[threshold_index];
  if (!ref) return std::nullopt;
  std::size_t slowest = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (r == reference) continue;
    const auto& s = runs[r].steps_to_threshold[threshold_index];
    if (!s) return std::nullopt;
    slowest = std::max(slowest, *s);
  }
  if (*ref == 0) return slowest == 0 ? std::optional<double>(1.0) : std::nullopt;
  return static_cast<double>(slowest) / static_cast<double>(*ref);
}

/// Index of the policy-aware run if present, else the last run.
inline std::size_t reference_run(const std::vector<Trajectory>& runs) {
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].construction == Construction::kPow3rDynamic) return r;
  }
  return runs.size() - 1;
}

}  // namespace pow3r::sim
