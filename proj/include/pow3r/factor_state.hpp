#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pow3r/dataset_io.hpp"
#include "pow3r/error.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r {

/// Factor-update hyperparameters. Defaults are the published training settings.
struct Pow3rConfig {
  double alpha_min = 0.67;
  double alpha_max = 1.5;
  double epsilon = 1e-4;
  double lambda = 0.5;
  double beta_ema = 0.2;
  double min_valid_fraction = 0.75;

  void validate() const {
    if (!(alpha_min > 0.0 && alpha_min <= 1.0 && alpha_max >= 1.0)) {
      throw ValidationError("config requires 0 < alpha_min <= 1 <= alpha_max");
    }
    if (!(epsilon > 0.0)) throw ValidationError("config requires epsilon > 0");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("config requires lambda in [0, 1]");
    if (!(beta_ema > 0.0 && beta_ema <= 1.0)) throw ValidationError("config requires beta_ema in (0, 1]");
    if (!(min_valid_fraction > 0.0 && min_valid_fraction <= 1.0)) {
      throw ValidationError("config requires min_valid_fraction in (0, 1]");
    }
  }

  json to_json() const {
    return json{{"alpha_min", alpha_min}, {"alpha_max", alpha_max},   {"epsilon", epsilon},
                {"lambda", lambda},       {"beta_ema", beta_ema}, {"min_valid_fraction", min_valid_fraction}};
  }
};

enum class SignalState { kDead, kSaturated, kMixed, kInsufficient };

inline std::string_view to_string(SignalState s) {
  switch (s) {
    case SignalState::kDead: return "dead";
    case SignalState::kSaturated: return "saturated";
    case SignalState::kMixed: return "mixed";
    case SignalState::kInsufficient: return "insufficient";
  }
  return "insufficient";
}

inline std::optional<SignalState> parse_signal_state(std::string_view s) {
  for (auto st : {SignalState::kDead, SignalState::kSaturated, SignalState::kMixed, SignalState::kInsufficient}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

/// Pass rate and verdict variance over the valid verdicts of one criterion.
struct CriterionStats {
  double p = 0.0;
  double v = 0.0;
  std::size_t n_valid = 0;
  SignalState state = SignalState::kInsufficient;

  bool sufficient() const { return state != SignalState::kInsufficient; }
  bool zero_signal() const { return state == SignalState::kDead || state == SignalState::kSaturated; }
  bool operator==(const CriterionStats&) const = default;
};

struct FactorEntry {
  double alpha = 1.0;
  std::int64_t epoch = 0;
  std::optional<CriterionStats> last_stats;

  bool operator==(const FactorEntry&) const = default;
};

inline constexpr std::string_view kFactorsSchema = "pow3r.factors.v1";

/// Per-(task, criterion) dynamic factors. Unseen pairs read as a fresh entry.
class FactorState {
 public:
  using Key = std::pair<std::string, std::string>;

  const FactorEntry* find(const std::string& task_id, const std::string& criterion_id) const {
    auto it = entries_.find(Key{task_id, criterion_id});
    return it == entries_.end() ? nullptr : &it->second;
  }

  double alpha(const std::string& task_id, const std::string& criterion_id) const {
    const auto* e = find(task_id, criterion_id);
    return e ? e->alpha : 1.0;
  }

  FactorEntry& entry(const std::string& task_id, const std::string& criterion_id) {
    return entries_[Key{task_id, criterion_id}];
  }

  void set_alpha(const std::string& task_id, const std::string& criterion_id, double alpha) {
    entry(task_id, criterion_id).alpha = alpha;
  }

  /// Factors aligned with task.criteria.
  std::vector<double> alphas_for(const Task& task) const {
    std::vector<double> out;
    out.reserve(task.criteria.size());
    for (const auto& c : task.criteria) out.push_back(alpha(task.id, c.id));
    return out;
  }

  const std::map<Key, FactorEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  bool operator==(const FactorState&) const = default;

  json to_json() const {
    json rows = json::array();
    for (const auto& [key, e] : entries_) {
      json row{{"task_id", key.first}, {"criterion_id", key.second}, {"alpha", e.alpha}, {"epoch", e.epoch}};
      if (e.last_stats) {
        row["p"] = e.last_stats->p;
        row["v"] = e.last_stats->v;
        row["n_valid"] = e.last_stats->n_valid;
        row["state"] = std::string(to_string(e.last_stats->state));
      }
      rows.push_back(std::move(row));
    }
    return json{{"schema", kFactorsSchema}, {"entries", std::move(rows)}};
  }

  static FactorState from_json(const json& doc) {
    if (!doc.is_object() || doc.value("schema", std::string()) != kFactorsSchema) {
      throw ValidationError("factor store: expected schema '" + std::string(kFactorsSchema) + "'");
    }
    FactorState state;
    const auto rows = doc.find("entries");
    if (rows == doc.end() || !rows->is_array()) throw ValidationError("factor store: entries must be an array");
    for (const auto& row : *rows) {
      const auto task_id = detail::field<std::string>(row, "task_id", "factor store");
      const auto crit_id = detail::field<std::string>(row, "criterion_id", "factor store");
      const std::string where = "factor store entry (" + task_id + ", " + crit_id + ")";
      FactorEntry e;
      e.alpha = detail::field<double>(row, "alpha", where);
      e.epoch = detail::field<std::int64_t>(row, "epoch", where);
      if (!std::isfinite(e.alpha) || e.alpha <= 0.0) throw ValidationError(where + ": alpha must be positive");
      if (row.contains("p")) {
        CriterionStats s;
        s.p = detail::field<double>(row, "p", where);
        s.v = detail::field<double>(row, "v", where);
        s.n_valid = detail::field<std::size_t>(row, "n_valid", where);
        auto st = parse_signal_state(detail::field<std::string>(row, "state", where));
        if (!st) throw ValidationError(where + ": unknown state");
        s.state = *st;
        e.last_stats = s;
      }
      if (!state.entries_.emplace(Key{task_id, crit_id}, e).second) {
        throw ValidationError(where + ": duplicate entry");
      }
    }
    return state;
  }

 private:
  std::map<Key, FactorEntry> entries_;
};

inline FactorState load_factors(const std::string& path) {
  auto in = detail::open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": malformed factor store: " + e.what());
  }
  return FactorState::from_json(doc);
}

inline void save_factors(const std::string& path, const FactorState& state) {
  auto out = detail::open_output(path);
  out << state.to_json().dump(2) << '\n';
}

}  // namespace pow3r
