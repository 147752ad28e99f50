#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "pow3r/error.hpp"
#include "pow3r/factor_state.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r {

/// ceil(fraction * G): the fewest valid verdicts a criterion needs for its
/// factor to update.
inline std::size_t min_valid_count(std::size_t group_size, double min_valid_fraction) {
  // Guard against 0.75 * 16 landing a hair above 12 in floating point.
  const double raw = min_valid_fraction * static_cast<double>(group_size);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

/// Pass rate p and variance v over each criterion's valid verdicts.
inline std::vector<CriterionStats> criterion_stats(const VerdictMatrix& matrix, double min_valid_fraction) {
  if (matrix.group_size() < 1) throw ValidationError("criterion stats need G >= 1");
  const std::size_t needed = std::max<std::size_t>(1, min_valid_count(matrix.group_size(), min_valid_fraction));
  std::vector<CriterionStats> out(matrix.num_criteria());
  for (std::size_t j = 0; j < matrix.num_criteria(); ++j) {
    std::size_t n = 0;
    std::size_t passes = 0;
    for (std::size_t i = 0; i < matrix.group_size(); ++i) {
      const auto& v = matrix.at(i, j);
      if (!v.valid()) continue;
      ++n;
      if (v.passed()) ++passes;
    }
    CriterionStats s;
    s.n_valid = n;
    if (n > 0) {
      s.p = static_cast<double>(passes) / static_cast<double>(n);
      s.v = s.p * (1.0 - s.p);
    }
    if (n < needed) {
      s.state = SignalState::kInsufficient;
    } else if (passes == 0) {
      s.state = SignalState::kDead;
    } else if (passes == n) {
      s.state = SignalState::kSaturated;
    } else {
      s.state = SignalState::kMixed;
    }
    out[j] = s;
  }
  return out;
}

inline double smoothed_signal(double v, double epsilon) {
  if (v < 0.0) throw ValidationError("variance must be nonnegative");
  return std::sqrt(v + epsilon);
}

/// Weight-weighted mean of signals over the valid members of one category;
/// nullopt marks a signal-void category.
inline std::optional<double> category_signal_mean(std::span<const double> signals, std::span<const double> weights,
                                                  const std::vector<bool>& valid) {
  if (signals.size() != weights.size() || signals.size() != valid.size()) {
    throw InvariantError("category_signal_mean: length mismatch");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < signals.size(); ++j) {
    if (!valid[j]) continue;
    num += weights[j] * signals[j];
    den += weights[j];
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

/// Blend the relative signal toward 1 and clip to the factor band.
inline double target_factor(double signal, double category_mean, const Pow3rConfig& config) {
  if (!(category_mean > 0.0)) throw ValidationError("target_factor requires a positive category mean");
  const double ratio = signal / category_mean;
  return std::clamp((1.0 - config.lambda) + config.lambda * ratio, config.alpha_min, config.alpha_max);
}

inline double ema_factor(double alpha, double target, const Pow3rConfig& config) {
  return std::clamp((1.0 - config.beta_ema) * alpha + config.beta_ema * target, config.alpha_min, config.alpha_max);
}

/// Per-criterion targets for one judged group; insufficient criteria get nullopt
/// (they retain their factor).
inline std::vector<std::optional<double>> target_factors(const Task& task, std::span<const CriterionStats> stats,
                                                         const Pow3rConfig& config) {
  std::vector<std::optional<double>> out(task.criteria.size());
  for (const auto& members : category_members(task)) {
    std::vector<double> g;
    std::vector<double> w;
    std::vector<bool> valid;
    for (auto j : members) {
      g.push_back(smoothed_signal(stats[j].v, config.epsilon));
      w.push_back(task.criteria[j].weight);
      valid.push_back(stats[j].sufficient());
    }
    const auto g_bar = category_signal_mean(g, w, valid);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (!valid[k]) continue;
      out[members[k]] = g_bar ? target_factor(g[k], *g_bar, config) : 1.0;
    }
  }
  return out;
}

/// One factor epoch for a task after its rollout group has been judged.
inline FactorState epoch_update(FactorState state, const VerdictMatrix& matrix, const Task& task,
                                const Pow3rConfig& config) {
  config.validate();
  validate_matrix(matrix, task);
  const auto stats = criterion_stats(matrix, config.min_valid_fraction);
  const auto targets = target_factors(task, stats, config);
  for (std::size_t j = 0; j < task.criteria.size(); ++j) {
    auto& e = state.entry(task.id, task.criteria[j].id);
    if (e.alpha < config.alpha_min - 1e-12 || e.alpha > config.alpha_max + 1e-12) {
      throw ValidationError("factor for (" + task.id + ", " + task.criteria[j].id + ") = " +
                            std::to_string(e.alpha) + " lies outside [alpha_min, alpha_max]");
    }
    if (targets[j]) e.alpha = ema_factor(e.alpha, *targets[j], config);
    e.epoch += 1;
    e.last_stats = stats[j];
  }
  return state;
}

}  // namespace pow3r
