#pragma once

#include <array>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pow3r/aggregation.hpp"
#include "pow3r/dataset_io.hpp"
#include "pow3r/engine.hpp"
#include "pow3r/factor_state.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r {

enum class WeightTier { kLow, kMid, kHigh };

inline std::string_view to_string(WeightTier t) {
  switch (t) {
    case WeightTier::kLow: return "low";
    case WeightTier::kMid: return "mid";
    case WeightTier::kHigh: return "high";
  }
  return "low";
}

/// Low: |w| in {1,2,3}; Mid: |w| = 4; High: |w| >= 5.
inline WeightTier weight_tier(int weight) {
  const int w = std::abs(weight);
  if (w == 0) throw ValidationError("weight tier undefined for zero weight");
  if (w <= 3) return WeightTier::kLow;
  if (w == 4) return WeightTier::kMid;
  return WeightTier::kHigh;
}

/// Within-category reward-weight share of each criterion. Empty `alphas`
/// gives the static share w_j / W_k; otherwise the dynamic share.
inline std::vector<double> training_pressure(const Task& task, std::span<const double> alphas = {}) {
  if (!alphas.empty() && alphas.size() != task.criteria.size()) {
    throw ValidationError("task '" + task.id + "': factor count does not match criteria");
  }
  std::vector<double> out(task.criteria.size(), 0.0);
  for (const auto& members : category_members(task)) {
    double total = 0.0;
    for (auto j : members) total += task.criteria[j].weight * (alphas.empty() ? 1.0 : alphas[j]);
    for (auto j : members) out[j] = task.criteria[j].weight * (alphas.empty() ? 1.0 : alphas[j]) / total;
  }
  return out;
}

inline std::vector<double> training_pressure(const Task& task, const FactorState* factors) {
  if (factors == nullptr) return training_pressure(task);
  return training_pressure(task, factors->alphas_for(task));
}

struct TierStateRow {
  WeightTier tier = WeightTier::kLow;
  std::size_t dead = 0;
  std::size_t saturated = 0;
  std::size_t mixed = 0;
  std::size_t insufficient = 0;

  std::size_t sufficient() const { return dead + saturated + mixed; }
  std::size_t total() const { return sufficient() + insufficient; }
  // Shares over criteria with sufficient validity; they sum to 1.
  double dead_share() const { return share(dead); }
  double saturated_share() const { return share(saturated); }
  double mixed_share() const { return share(mixed); }
  // Fraction of all criteria in the tier that lacked enough valid verdicts.
  double insufficient_share() const {
    return total() == 0 ? 0.0 : static_cast<double>(insufficient) / static_cast<double>(total());
  }

 private:
  double share(std::size_t n) const {
    return sufficient() == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(sufficient());
  }
};

/// Signal-state counts per weight tier over every (prompt run, criterion) pair.
/// Tiers without criteria are omitted.
inline std::vector<TierStateRow> signal_state_shares(const std::vector<Task>& tasks,
                                                     const std::vector<VerdictMatrix>& matrices,
                                                     double min_valid_fraction = Pow3rConfig{}.min_valid_fraction) {
  const TaskIndex index(tasks);
  std::array<TierStateRow, 3> rows{TierStateRow{WeightTier::kLow}, TierStateRow{WeightTier::kMid},
                                   TierStateRow{WeightTier::kHigh}};
  for (const auto& m : matrices) {
    const Task& task = index.for_matrix(m);
    const auto stats = criterion_stats(m, min_valid_fraction);
    for (std::size_t j = 0; j < task.criteria.size(); ++j) {
      auto& row = rows[static_cast<std::size_t>(weight_tier(task.criteria[j].weight))];
      switch (stats[j].state) {
        case SignalState::kDead: ++row.dead; break;
        case SignalState::kSaturated: ++row.saturated; break;
        case SignalState::kMixed: ++row.mixed; break;
        case SignalState::kInsufficient: ++row.insufficient; break;
      }
    }
  }
  std::vector<TierStateRow> out;
  for (const auto& r : rows) {
    if (r.total() > 0) out.push_back(r);
  }
  return out;
}

/// Share of within-category pressure resting on zero-variance criteria, averaged
/// over populated categories within a prompt and then uniformly over prompts.
inline double zero_signal_pressure(const std::vector<Task>& tasks, const std::vector<VerdictMatrix>& matrices,
                                   const FactorState* factors = nullptr,
                                   double min_valid_fraction = Pow3rConfig{}.min_valid_fraction) {
  if (matrices.empty()) throw ValidationError("zero-signal pressure needs at least one verdict matrix");
  const TaskIndex index(tasks);
  double total = 0.0;
  for (const auto& m : matrices) {
    const Task& task = index.for_matrix(m);
    const auto stats = criterion_stats(m, min_valid_fraction);
    const auto pressure = training_pressure(task, factors);
    double prompt_sum = 0.0;
    std::size_t populated = 0;
    for (const auto& members : category_members(task)) {
      if (members.empty()) continue;
      ++populated;
      for (auto j : members) {
        if (stats[j].zero_signal()) prompt_sum += pressure[j];
      }
    }
    total += prompt_sum / static_cast<double>(populated);
  }
  return total / static_cast<double>(matrices.size());
}

struct SpreadPair {
  std::string task_id;
  double static_spread = 0.0;
  double dynamic_spread = 0.0;
};

struct SpreadComparison {
  std::vector<SpreadPair> pairs;
  double mean_static = 0.0;
  double mean_dynamic = 0.0;
  // (mean_dynamic - mean_static) / mean_static; 0 when every static spread is 0.
  double mean_relative_widening = 0.0;
};

/// Reward spread under the category-balanced and the policy-aware reward, per prompt run.
inline SpreadComparison spread_comparison(const std::vector<Task>& tasks, const std::vector<VerdictMatrix>& matrices,
                                          const FactorState& factors) {
  const TaskIndex index(tasks);
  SpreadComparison out;
  for (const auto& m : matrices) {
    const Task& task = index.for_matrix(m);
    SpreadPair p{task.id, reward_spread(reward_cat(m, task)), reward_spread(reward_dyn(m, task, factors))};
    out.mean_static += p.static_spread;
    out.mean_dynamic += p.dynamic_spread;
    out.pairs.push_back(std::move(p));
  }
  if (!out.pairs.empty()) {
    out.mean_static /= static_cast<double>(out.pairs.size());
    out.mean_dynamic /= static_cast<double>(out.pairs.size());
  }
  if (out.mean_static > 0.0) out.mean_relative_widening = (out.mean_dynamic - out.mean_static) / out.mean_static;
  return out;
}

struct PressureRow {
  std::string task_id;
  std::string category;
  std::string criterion_id;
  int weight = 0;
  WeightTier tier = WeightTier::kLow;
  CriterionStats stats;
  double static_pressure = 0.0;
  std::optional<double> dynamic_pressure;
};

struct PressureReport {
  std::vector<TierStateRow> tiers;
  double zero_signal_pressure_static = 0.0;
  std::optional<double> zero_signal_pressure_dynamic;
  std::optional<SpreadComparison> spreads;
  std::vector<PressureRow> pressure_rows;
  std::size_t num_runs = 0;
};

inline PressureReport build_pressure_report(const std::vector<Task>& tasks,
                                            const std::vector<VerdictMatrix>& matrices,
                                            const FactorState* factors,
                                            double min_valid_fraction = Pow3rConfig{}.min_valid_fraction) {
  PressureReport report;
  report.num_runs = matrices.size();
  if (matrices.empty()) return report;
  const TaskIndex index(tasks);
  report.tiers = signal_state_shares(tasks, matrices, min_valid_fraction);
  report.zero_signal_pressure_static = zero_signal_pressure(tasks, matrices, nullptr, min_valid_fraction);
  if (factors) {
    report.zero_signal_pressure_dynamic = zero_signal_pressure(tasks, matrices, factors, min_valid_fraction);
    report.spreads = spread_comparison(tasks, matrices, *factors);
  }
  for (const auto& m : matrices) {
    const Task& task = index.for_matrix(m);
    const auto stats = criterion_stats(m, min_valid_fraction);
    const auto stat_p = training_pressure(task);
    std::vector<double> dyn_p;
    if (factors) dyn_p = training_pressure(task, factors);
    for (std::size_t j = 0; j < task.criteria.size(); ++j) {
      const auto& c = task.criteria[j];
      PressureRow row{task.id, c.category, c.id, c.weight, weight_tier(c.weight), stats[j], stat_p[j], std::nullopt};
      if (factors) row.dynamic_pressure = dyn_p[j];
      report.pressure_rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace detail {

inline std::string num(double x) { return fmt::format("{:.6f}", x); }

// Rounded so the JSON summary is byte-stable across platforms.
inline json rounded(double x) { return std::round(x * 1e9) / 1e9 + 0.0; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Writes the report tables and plot-ready (x, y, label) series into `dir`.
/// Returns the written file paths in a fixed order.
inline std::vector<std::string> emit_report(const PressureReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    const std::string path = (fs::path(dir) / name).string();
    written.push_back(path);
    return detail::open_output(path);
  };
  using detail::num;

  {
    auto out = open("tier_state_shares.csv");
    out << "tier,dead,saturated,mixed,insufficient,dead_share,saturated_share,mixed_share,insufficient_share\n";
    for (const auto& r : report.tiers) {
      out << to_string(r.tier) << ',' << r.dead << ',' << r.saturated << ',' << r.mixed << ',' << r.insufficient
          << ',' << num(r.dead_share()) << ',' << num(r.saturated_share()) << ',' << num(r.mixed_share()) << ','
          << num(r.insufficient_share()) << '\n';
    }
  }
  {
    auto out = open("category_pressure.csv");
    out << "task_id,category,criterion_id,weight,tier,state,p,v,n_valid,static_pressure,dynamic_pressure\n";
    for (const auto& r : report.pressure_rows) {
      out << detail::csv_field(r.task_id) << ',' << detail::csv_field(r.category) << ','
          << detail::csv_field(r.criterion_id) << ',' << r.weight << ',' << to_string(r.tier) << ','
          << to_string(r.stats.state) << ',' << num(r.stats.p) << ',' << num(r.stats.v) << ',' << r.stats.n_valid
          << ',' << num(r.static_pressure) << ',' << (r.dynamic_pressure ? num(*r.dynamic_pressure) : "") << '\n';
    }
  }
  {
    auto out = open("spread_pairs.csv");
    out << "task_id,static_spread,dynamic_spread\n";
    if (report.spreads) {
      for (const auto& p : report.spreads->pairs) {
        out << detail::csv_field(p.task_id) << ',' << num(p.static_spread) << ',' << num(p.dynamic_spread) << '\n';
      }
    }
  }
  {
    auto out = open("plot_tier_bars.csv");
    out << "x,y,label\n";
    for (const auto& r : report.tiers) {
      out << to_string(r.tier) << ',' << num(r.dead_share()) << ",dead\n";
      out << to_string(r.tier) << ',' << num(r.saturated_share()) << ",saturated\n";
      out << to_string(r.tier) << ',' << num(r.mixed_share()) << ",mixed\n";
    }
  }
  {
    auto out = open("plot_pressure_bars.csv");
    out << "x,y,label\n";
    if (report.num_runs > 0) {
      out << "static," << num(report.zero_signal_pressure_static) << ",zero_signal\n";
      out << "static," << num(1.0 - report.zero_signal_pressure_static) << ",other\n";
      if (report.zero_signal_pressure_dynamic) {
        out << "dynamic," << num(*report.zero_signal_pressure_dynamic) << ",zero_signal\n";
        out << "dynamic," << num(1.0 - *report.zero_signal_pressure_dynamic) << ",other\n";
      }
    }
  }
  {
    auto out = open("plot_spread_scatter.csv");
    out << "x,y,label\n";
    if (report.spreads) {
      for (const auto& p : report.spreads->pairs) {
        out << num(p.static_spread) << ',' << num(p.dynamic_spread) << ',' << detail::csv_field(p.task_id) << '\n';
      }
    }
  }
  {
    auto out = open("summary.json");
    json s;
    s["num_runs"] = report.num_runs;
    s["zero_signal_pressure_static"] = report.num_runs > 0 ? detail::rounded(report.zero_signal_pressure_static) : json();
    s["zero_signal_pressure_dynamic"] =
        report.zero_signal_pressure_dynamic ? detail::rounded(*report.zero_signal_pressure_dynamic) : json();
    if (report.spreads) {
      s["mean_static_spread"] = detail::rounded(report.spreads->mean_static);
      s["mean_dynamic_spread"] = detail::rounded(report.spreads->mean_dynamic);
      s["mean_relative_widening"] = detail::rounded(report.spreads->mean_relative_widening);
    } else {
      s["mean_static_spread"] = nullptr;
      s["mean_dynamic_spread"] = nullptr;
      s["mean_relative_widening"] = nullptr;
    }
    out << s.dump(2) << '\n';
  }
  return written;
}

}  // namespace pow3r
