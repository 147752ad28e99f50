#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pow3r/rubric.hpp"

namespace fixtures {

using pow3r::Criterion;
using pow3r::Task;
using pow3r::VerdictMatrix;
using pow3r::VerdictValue;

struct TaskShape {
  std::size_t min_criteria = 1;
  std::size_t max_criteria = 10;
  std::size_t max_categories = 4;
  int max_weight = 10;
};

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Random well-formed task; some declared categories may stay empty.
inline Task random_task(std::mt19937_64& rng, const std::string& id, const TaskShape& shape = {}) {
  Task t;
  t.id = id;
  t.prompt = "prompt for " + id;
  const int k = uniform_int(rng, 1, static_cast<int>(shape.max_categories));
  for (int c = 0; c < k; ++c) t.categories.push_back("cat" + std::to_string(c));
  const int n = uniform_int(rng, static_cast<int>(shape.min_criteria), static_cast<int>(shape.max_criteria));
  for (int j = 0; j < n; ++j) {
    Criterion c;
    c.id = "c" + std::to_string(j);
    c.text = "criterion " + std::to_string(j) + " of " + id;
    c.weight = uniform_int(rng, 1, shape.max_weight);
    c.category = t.categories[static_cast<std::size_t>(uniform_int(rng, 0, k - 1))];
    c.required = uniform(rng) < 0.3;
    t.criteria.push_back(std::move(c));
  }
  t.criteria.front().required = true;
  return t;
}

/// Random verdicts with per-criterion pass rates drawn uniformly; a fraction of
/// criteria is forced constant.
inline VerdictMatrix random_matrix(std::mt19937_64& rng, const Task& task, std::size_t group_size,
                                   double invalid_probability = 0.0, double constant_fraction = 0.3) {
  VerdictMatrix m(task.id, group_size, task.criteria.size());
  for (std::size_t j = 0; j < task.criteria.size(); ++j) {
    const double roll = uniform(rng);
    double p = uniform(rng);
    if (roll < constant_fraction) p = uniform(rng) < 0.5 ? 0.0 : 1.0;
    for (std::size_t i = 0; i < group_size; ++i) {
      if (uniform(rng) < invalid_probability) {
        m.set(i, j, VerdictValue::kInvalid);
      } else {
        m.set(i, j, uniform(rng) < p ? VerdictValue::kPass : VerdictValue::kFail);
      }
    }
  }
  return m;
}

inline VerdictMatrix matrix_from_rows(const std::string& task_id, const std::vector<std::string>& rows) {
  VerdictMatrix m(task_id, rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const char ch = rows[i][j];
      m.set(i, j, ch == '1' ? VerdictValue::kPass : ch == '0' ? VerdictValue::kFail : VerdictValue::kInvalid);
    }
  }
  return m;
}

inline Criterion criterion(std::string id, int weight, std::string category, bool required = false) {
  Criterion c;
  c.id = id;
  c.text = "text of " + id;
  c.weight = weight;
  c.category = std::move(category);
  c.required = required;
  return c;
}

inline Task make_task(std::string id, std::vector<Criterion> criteria) {
  Task t;
  t.id = std::move(id);
  t.prompt = "p";
  for (const auto& c : criteria) {
    if (std::find(t.categories.begin(), t.categories.end(), c.category) == t.categories.end()) {
      t.categories.push_back(c.category);
    }
  }
  t.criteria = std::move(criteria);
  return t;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pow3r_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
