#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pow3r/error.hpp"

namespace pow3r {

enum class Explicitness { kExplicit, kImplicit };
enum class Objectivity { kObjective, kSubjective };

inline std::string_view to_string(Explicitness e) {
  return e == Explicitness::kExplicit ? "explicit" : "implicit";
}
inline std::string_view to_string(Objectivity o) {
  return o == Objectivity::kObjective ? "objective" : "subjective";
}

/// One rubric item with a positive human weight.
struct Criterion {
  std::string id;
  std::string text;
  // Short label shown to the judge; empty means "use text".
  std::string title;
  int weight = 1;
  std::string category;
  bool required = false;
  Explicitness explicitness = Explicitness::kExplicit;
  Objectivity objectivity = Objectivity::kObjective;
  // Set by convert_signed: the judge scores avoidance, so raw verdicts are inverted.
  bool flip_verdict = false;

  const std::string& display_title() const { return title.empty() ? text : title; }
  bool operator==(const Criterion&) const = default;
};

/// Criterion as authored with a signed point value (negative = penalty).
struct SignedCriterion {
  std::string id;
  std::string text;
  std::string title;
  int weight = 1;
  std::string category;
  std::optional<bool> required;
  Explicitness explicitness = Explicitness::kExplicit;
  Objectivity objectivity = Objectivity::kObjective;

  bool operator==(const SignedCriterion&) const = default;
};

struct Task {
  std::string id;
  std::string prompt;
  std::optional<std::string> image_ref;
  std::vector<Criterion> criteria;
  // Declared category labels in display order. Categories without criteria are
  // allowed and simply do not count as populated.
  std::vector<std::string> categories;

  bool operator==(const Task&) const = default;
};

struct SignedTask {
  std::string id;
  std::string prompt;
  std::optional<std::string> image_ref;
  std::vector<SignedCriterion> criteria;
  std::vector<std::string> categories;
};

enum class VerdictValue { kPass, kFail, kInvalid };

inline std::string_view to_string(VerdictValue v) {
  switch (v) {
    case VerdictValue::kPass: return "pass";
    case VerdictValue::kFail: return "fail";
    case VerdictValue::kInvalid: return "invalid";
  }
  return "invalid";
}

inline std::optional<VerdictValue> parse_verdict_value(std::string_view s) {
  if (s == "pass") return VerdictValue::kPass;
  if (s == "fail") return VerdictValue::kFail;
  if (s == "invalid") return VerdictValue::kInvalid;
  return std::nullopt;
}

struct Verdict {
  VerdictValue value = VerdictValue::kInvalid;
  std::optional<std::string> rationale;

  bool valid() const { return value != VerdictValue::kInvalid; }
  bool passed() const { return value == VerdictValue::kPass; }
  bool operator==(const Verdict&) const = default;
};

inline Verdict flipped(Verdict v) {
  if (v.value == VerdictValue::kPass) {
    v.value = VerdictValue::kFail;
  } else if (v.value == VerdictValue::kFail) {
    v.value = VerdictValue::kPass;
  }
  return v;
}

/// G x N grid of verdicts for one prompt's rollout group, row = rollout.
class VerdictMatrix {
 public:
  VerdictMatrix() = default;
  VerdictMatrix(std::string task_id, std::size_t group_size, std::size_t num_criteria)
      : task_id_(std::move(task_id)),
        group_size_(group_size),
        num_criteria_(num_criteria),
        cells_(group_size * num_criteria) {}

  const std::string& task_id() const { return task_id_; }
  std::size_t group_size() const { return group_size_; }
  std::size_t num_criteria() const { return num_criteria_; }

  const Verdict& at(std::size_t rollout, std::size_t criterion) const {
    return cells_[index(rollout, criterion)];
  }
  Verdict& at(std::size_t rollout, std::size_t criterion) { return cells_[index(rollout, criterion)]; }
  void set(std::size_t rollout, std::size_t criterion, VerdictValue value) {
    at(rollout, criterion) = Verdict{value, std::nullopt};
  }

  /// s_j(o_i) with invalid cells scoring 0.
  double score(std::size_t rollout, std::size_t criterion) const {
    return at(rollout, criterion).passed() ? 1.0 : 0.0;
  }

  std::size_t invalid_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells_.begin(), cells_.end(), [](const Verdict& v) { return !v.valid(); }));
  }

  bool operator==(const VerdictMatrix&) const = default;

 private:
  std::size_t index(std::size_t rollout, std::size_t criterion) const {
    if (rollout >= group_size_ || criterion >= num_criteria_) {
      throw InvariantError("verdict matrix index out of range");
    }
    return rollout * num_criteria_ + criterion;
  }

  std::string task_id_;
  std::size_t group_size_ = 0;
  std::size_t num_criteria_ = 0;
  std::vector<Verdict> cells_;
};

/// Criterion indices per declared category (same order as task.categories).
inline std::vector<std::vector<std::size_t>> category_members(const Task& task) {
  std::vector<std::vector<std::size_t>> members(task.categories.size());
  for (std::size_t j = 0; j < task.criteria.size(); ++j) {
    auto it = std::find(task.categories.begin(), task.categories.end(), task.criteria[j].category);
    if (it == task.categories.end()) {
      throw ValidationError("task '" + task.id + "': criterion '" + task.criteria[j].id +
                            "' has undeclared category '" + task.criteria[j].category + "'");
    }
    members[static_cast<std::size_t>(it - task.categories.begin())].push_back(j);
  }
  return members;
}

/// Category labels in first-appearance order.
template <typename CriterionT>
std::vector<std::string> categories_in_order(const std::vector<CriterionT>& criteria) {
  std::vector<std::string> out;
  for (const auto& c : criteria) {
    if (std::find(out.begin(), out.end(), c.category) == out.end()) out.push_back(c.category);
  }
  return out;
}

inline void validate_task(const Task& task) {
  const std::string where = "task '" + task.id + "': ";
  if (task.id.empty()) throw ValidationError("task id must be nonempty");
  if (task.criteria.empty()) throw ValidationError(where + "must have at least one criterion");
  std::set<std::string> ids;
  std::set<std::string> declared(task.categories.begin(), task.categories.end());
  if (declared.size() != task.categories.size()) {
    throw ValidationError(where + "duplicate category label");
  }
  for (const auto& c : task.criteria) {
    if (c.id.empty()) throw ValidationError(where + "criterion id must be nonempty");
    if (!ids.insert(c.id).second) {
      throw ValidationError(where + "duplicate criterion id '" + c.id + "'");
    }
    if (c.weight < 1) {
      throw ValidationError(where + "criterion '" + c.id + "' weight must be >= 1 (got " +
                            std::to_string(c.weight) + ")");
    }
    if (!declared.contains(c.category)) {
      throw ValidationError(where + "criterion '" + c.id + "' category '" + c.category +
                            "' is not declared");
    }
  }
}

inline void validate_matrix(const VerdictMatrix& matrix, const Task& task) {
  if (matrix.task_id() != task.id) {
    throw ValidationError("verdict matrix for '" + matrix.task_id() + "' paired with task '" +
                          task.id + "'");
  }
  if (matrix.group_size() < 1) throw ValidationError("task '" + task.id + "': group size must be >= 1");
  if (matrix.num_criteria() != task.criteria.size()) {
    throw ValidationError("task '" + task.id + "': verdict rows have " +
                          std::to_string(matrix.num_criteria()) + " cells, rubric has " +
                          std::to_string(task.criteria.size()) + " criteria");
  }
}

inline constexpr std::string_view kAvoidancePrefix = "The response avoids: ";

/// Good-behavior conversion: negative criteria become positive avoidance criteria
/// with weight |w| and an inverted verdict. `required` is resolved from the
/// converted weights when absent (weight >= the rubric's maximum weight).
inline std::vector<Criterion> convert_signed(const std::vector<SignedCriterion>& rubric) {
  int max_weight = 0;
  for (const auto& sc : rubric) {
    if (sc.weight == 0) throw ValidationError("criterion '" + sc.id + "' has zero weight");
    max_weight = std::max(max_weight, std::abs(sc.weight));
  }
  std::vector<Criterion> out;
  out.reserve(rubric.size());
  for (const auto& sc : rubric) {
    Criterion c;
    c.id = sc.id;
    c.category = sc.category;
    c.explicitness = sc.explicitness;
    c.objectivity = sc.objectivity;
    c.weight = std::abs(sc.weight);
    c.required = sc.required.value_or(c.weight >= max_weight);
    if (sc.weight > 0) {
      c.text = sc.text;
      c.title = sc.title;
    } else {
      c.text = std::string(kAvoidancePrefix) + sc.text;
      c.title = sc.title.empty() ? std::string() : std::string(kAvoidancePrefix) + sc.title;
      c.flip_verdict = true;
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline Task convert_signed(const SignedTask& signed_task) {
  Task t;
  t.id = signed_task.id;
  t.prompt = signed_task.prompt;
  t.image_ref = signed_task.image_ref;
  t.criteria = convert_signed(signed_task.criteria);
  t.categories = signed_task.categories.empty() ? categories_in_order(t.criteria) : signed_task.categories;
  validate_task(t);
  return t;
}

/// Converts an already-positive rubric without rewriting anything.
inline SignedCriterion to_signed(const Criterion& c) {
  return SignedCriterion{c.id,       c.text,     c.title,        c.weight,
                         c.category, c.required, c.explicitness, c.objectivity};
}

}  // namespace pow3r
