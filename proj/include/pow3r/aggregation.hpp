#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pow3r/error.hpp"
#include "pow3r/factor_state.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r {

enum class Construction { kBinary, kStaticScalar, kCategoryBalanced, kPow3rDynamic };

inline std::string_view to_string(Construction c) {
  switch (c) {
    case Construction::kBinary: return "binary";
    case Construction::kStaticScalar: return "scalar";
    case Construction::kCategoryBalanced: return "cat";
    case Construction::kPow3rDynamic: return "dyn";
  }
  return "cat";
}

inline Construction parse_construction(std::string_view s) {
  if (s == "binary") return Construction::kBinary;
  if (s == "scalar") return Construction::kStaticScalar;
  if (s == "cat") return Construction::kCategoryBalanced;
  if (s == "dyn") return Construction::kPow3rDynamic;
  throw ValidationError("unknown construction '" + std::string(s) + "' (binary|scalar|cat|dyn)");
}

struct RewardConstruction {
  Construction kind = Construction::kCategoryBalanced;
  const FactorState* factors = nullptr;

  void validate() const {
    if (kind == Construction::kPow3rDynamic && factors == nullptr) {
      throw ValidationError("construction 'dyn' requires a factor store");
    }
  }
};

namespace detail {

inline void check_pair(const VerdictMatrix& matrix, const Task& task) { validate_matrix(matrix, task); }

inline bool required_passed(const VerdictMatrix& matrix, const Task& task, std::size_t i) {
  for (std::size_t j = 0; j < task.criteria.size(); ++j) {
    if (task.criteria[j].required && !matrix.at(i, j).passed()) return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<bool> strict_completion(const VerdictMatrix& matrix, const Task& task) {
  detail::check_pair(matrix, task);
  std::vector<bool> out(matrix.group_size());
  for (std::size_t i = 0; i < matrix.group_size(); ++i) out[i] = detail::required_passed(matrix, task, i);
  return out;
}

/// 1 when every required criterion passes; invalid counts as not passed.
inline std::vector<double> reward_binary(const VerdictMatrix& matrix, const Task& task) {
  detail::check_pair(matrix, task);
  const bool any_required =
      std::any_of(task.criteria.begin(), task.criteria.end(), [](const Criterion& c) { return c.required; });
  if (!any_required) {
    throw ValidationError("task '" + task.id + "' has no required criteria; binary reward is degenerate");
  }
  std::vector<double> out(matrix.group_size());
  for (std::size_t i = 0; i < matrix.group_size(); ++i) {
    out[i] = detail::required_passed(matrix, task, i) ? 1.0 : 0.0;
  }
  return out;
}

inline std::vector<double> reward_scalar(const VerdictMatrix& matrix, const Task& task) {
  detail::check_pair(matrix, task);
  std::vector<double> out(matrix.group_size(), 0.0);
  for (std::size_t i = 0; i < matrix.group_size(); ++i) {
    for (std::size_t j = 0; j < task.criteria.size(); ++j) out[i] += task.criteria[j].weight * matrix.score(i, j);
  }
  return out;
}

inline double total_weight(const Task& task) {
  double w = 0.0;
  for (const auto& c : task.criteria) w += c.weight;
  return w;
}

/// Static weighted sum as a percentage of the total rubric weight.
inline double rubric_reward_percent(double scalar_reward, const Task& task) {
  return 100.0 * scalar_reward / total_weight(task);
}

/// Per-rollout, per-populated-category weight-normalized pass mass, using
/// effective weights w_j * alpha_j. Rows are rollouts.
inline std::vector<std::vector<double>> category_scores(const VerdictMatrix& matrix, const Task& task,
                                                        std::span<const double> alphas) {
  detail::check_pair(matrix, task);
  if (alphas.size() != task.criteria.size()) {
    throw ValidationError("task '" + task.id + "': factor count does not match criteria");
  }
  const auto members = category_members(task);
  std::vector<std::vector<double>> out(matrix.group_size());
  for (const auto& cat : members) {
    if (cat.empty()) continue;
    double denom = 0.0;
    for (auto j : cat) denom += task.criteria[j].weight * alphas[j];
    for (std::size_t i = 0; i < matrix.group_size(); ++i) {
      double num = 0.0;
      for (auto j : cat) num += task.criteria[j].weight * alphas[j] * matrix.score(i, j);
      out[i].push_back(num / denom);
    }
  }
  return out;
}

/// Labels of the populated categories, in the column order of category_scores.
inline std::vector<std::string> populated_categories(const Task& task) {
  std::vector<std::string> out;
  const auto members = category_members(task);
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (!members[k].empty()) out.push_back(task.categories[k]);
  }
  return out;
}

namespace detail {

inline std::vector<double> mean_over_categories(const std::vector<std::vector<double>>& scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& row : scores) {
    double sum = 0.0;
    for (double s : row) sum += s;
    out.push_back(sum / static_cast<double>(row.size()));
  }
  return out;
}

}  // namespace detail

/// Category-normalized baseline: mean over populated categories of the
/// within-category weighted pass fraction.
inline std::vector<double> reward_cat(const VerdictMatrix& matrix, const Task& task) {
  const std::vector<double> ones(task.criteria.size(), 1.0);
  return detail::mean_over_categories(category_scores(matrix, task, ones));
}

/// Policy-aware reward with dynamic weights w_j * alpha_j renormalized per category.
inline std::vector<double> reward_dyn(const VerdictMatrix& matrix, const Task& task,
                                      std::span<const double> alphas) {
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("task '" + task.id + "': factors must be positive");
  }
  return detail::mean_over_categories(category_scores(matrix, task, alphas));
}

inline std::vector<double> reward_dyn(const VerdictMatrix& matrix, const Task& task, const FactorState& factors) {
  return reward_dyn(matrix, task, factors.alphas_for(task));
}

inline std::vector<double> compute_rewards(const VerdictMatrix& matrix, const Task& task,
                                           const RewardConstruction& construction) {
  construction.validate();
  switch (construction.kind) {
    case Construction::kBinary: return reward_binary(matrix, task);
    case Construction::kStaticScalar: return reward_scalar(matrix, task);
    case Construction::kCategoryBalanced: return reward_cat(matrix, task);
    case Construction::kPow3rDynamic: return reward_dyn(matrix, task, *construction.factors);
  }
  throw InvariantError("unhandled construction");
}

inline double mean(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

/// Population standard deviation.
inline double reward_spread(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ValidationError("reward spread needs a group of at least 2 rollouts");
  const double m = mean(rewards);
  double ss = 0.0;
  for (double r : rewards) ss += (r - m) * (r - m);
  return std::sqrt(ss / static_cast<double>(rewards.size()));
}

/// Spreads at or below this are treated as a tied group.
inline constexpr double kTiedSpread = 1e-12;

/// Group-relative advantages (R - mean) / std with population std; all zero for
/// a tied group.
inline std::vector<double> advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ValidationError("advantages need a group of at least 2 rollouts");
  const double sd = reward_spread(rewards);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd <= kTiedSpread) return out;
  const double m = mean(rewards);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - m) / sd;
  return out;
}

/// Schulman k3 KL estimator for the reference-to-policy ratio u.
inline double kl_k3(double u) {
  if (!(u > 0.0)) throw ValidationError("kl_k3 requires u > 0");
  return u - std::log(u) - 1.0;
}

struct GroupRewardReport {
  std::string task_id;
  Construction construction = Construction::kCategoryBalanced;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<bool> strict_completion;
  std::vector<std::string> categories;
  // G x K, under the construction's effective weights (static for non-dynamic kinds).
  std::vector<std::vector<double>> category_scores;
  double spread = 0.0;
  std::vector<double> rubric_reward_percent;
  std::size_t invalid_cells = 0;
};

inline GroupRewardReport compute_group_report(const VerdictMatrix& matrix, const Task& task,
                                              const RewardConstruction& construction) {
  GroupRewardReport r;
  r.task_id = task.id;
  r.construction = construction.kind;
  r.rewards = compute_rewards(matrix, task, construction);
  r.advantages = advantages(r.rewards);
  r.spread = reward_spread(r.rewards);
  r.strict_completion = strict_completion(matrix, task);
  r.categories = populated_categories(task);
  const auto alphas = construction.kind == Construction::kPow3rDynamic
                          ? construction.factors->alphas_for(task)
                          : std::vector<double>(task.criteria.size(), 1.0);
  r.category_scores = category_scores(matrix, task, alphas);
  for (double s : reward_scalar(matrix, task)) r.rubric_reward_percent.push_back(rubric_reward_percent(s, task));
  r.invalid_cells = matrix.invalid_count();
  return r;
}

inline json report_to_json(const GroupRewardReport& r) {
  return json{{"task_id", r.task_id},
              {"construction", std::string(to_string(r.construction))},
              {"rewards", r.rewards},
              {"advantages", r.advantages},
              {"strict_completion", r.strict_completion},
              {"categories", r.categories},
              {"category_scores", r.category_scores},
              {"spread", r.spread},
              {"rubric_reward_percent", r.rubric_reward_percent},
              {"invalid_cells", r.invalid_cells}};
}

}  // namespace pow3r
