#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <iterator>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pow3r/error.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r {

using json = nlohmann::json;

inline constexpr std::string_view kTasksSchema = "pow3r.tasks.v1";
inline constexpr std::string_view kSignedTasksSchema = "pow3r.signed-tasks.v1";
inline constexpr std::string_view kVerdictsSchema = "pow3r.verdicts.v1";
inline constexpr std::string_view kResponsesSchema = "pow3r.responses.v1";

/// Rollout texts for one task, input to the judge.
struct ResponseGroup {
  std::string task_id;
  std::vector<std::string> responses;
};

namespace detail {

template <typename T>
T field(const json& doc, const char* key, const std::string& where) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has wrong type");
  }
}

template <typename T>
std::optional<T> optional_field(const json& doc, const char* key, const std::string& where) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has wrong type");
  }
}

inline int integer_weight(const json& doc, const std::string& where) {
  auto it = doc.find("weight");
  if (it == doc.end()) throw ValidationError(where + ": missing field 'weight'");
  if (!it->is_number_integer()) throw ValidationError(where + ": weight must be an integer");
  return it->get<int>();
}

inline Explicitness parse_explicitness(const std::optional<std::string>& s, const std::string& where) {
  if (!s || *s == "explicit") return Explicitness::kExplicit;
  if (*s == "implicit") return Explicitness::kImplicit;
  throw ValidationError(where + ": explicitness must be 'explicit' or 'implicit'");
}

inline Objectivity parse_objectivity(const std::optional<std::string>& s, const std::string& where) {
  if (!s || *s == "objective") return Objectivity::kObjective;
  if (*s == "subjective") return Objectivity::kSubjective;
  throw ValidationError(where + ": objectivity must be 'objective' or 'subjective'");
}

template <typename CriterionT>
CriterionT criterion_common(const json& doc, const std::string& where) {
  if (!doc.is_object()) throw ValidationError(where + ": criterion must be an object");
  CriterionT c;
  c.id = field<std::string>(doc, "id", where);
  const std::string cwhere = where + " criterion '" + c.id + "'";
  c.text = field<std::string>(doc, "text", cwhere);
  c.title = optional_field<std::string>(doc, "title", cwhere).value_or("");
  c.weight = integer_weight(doc, cwhere);
  c.category = field<std::string>(doc, "category", cwhere);
  c.explicitness = parse_explicitness(optional_field<std::string>(doc, "explicitness", cwhere), cwhere);
  c.objectivity = parse_objectivity(optional_field<std::string>(doc, "objectivity", cwhere), cwhere);
  return c;
}

/// Visits each non-blank line after the schema tag; throws ParseError with the
/// 1-based line number on malformed JSON.
inline void for_each_record(std::istream& in, const std::string& name, std::string_view schema,
                            const std::function<void(const json&, std::size_t)>& visit) {
  std::string line;
  std::size_t lineno = 0;
  bool saw_schema = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(name, lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!saw_schema) {
      if (!doc.is_object() || !doc.contains("schema") || doc["schema"] != schema) {
        throw ParseError(name, lineno, "expected schema tag {\"schema\":\"" + std::string(schema) + "\"}");
      }
      saw_schema = true;
      continue;
    }
    if (!doc.is_object()) throw ParseError(name, lineno, "record must be an object");
    try {
      visit(doc, lineno);
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ValidationError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!saw_schema) throw ParseError(name, lineno, "missing schema tag");
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  return out;
}

inline std::vector<std::string> declared_categories(const json& doc, const std::string& where) {
  auto cats = optional_field<std::vector<std::string>>(doc, "categories", where);
  return cats.value_or(std::vector<std::string>{});
}

}  // namespace detail

inline Task task_from_json(const json& doc) {
  Task t;
  t.id = detail::field<std::string>(doc, "id", "task");
  const std::string where = "task '" + t.id + "'";
  t.prompt = detail::field<std::string>(doc, "prompt", where);
  t.image_ref = detail::optional_field<std::string>(doc, "image_ref", where);
  auto crit = doc.find("criteria");
  if (crit == doc.end() || !crit->is_array()) throw ValidationError(where + ": criteria must be an array");
  std::vector<std::optional<bool>> required;
  for (const auto& cdoc : *crit) {
    auto c = detail::criterion_common<Criterion>(cdoc, where);
    const std::string cwhere = where + " criterion '" + c.id + "'";
    c.flip_verdict = detail::optional_field<bool>(cdoc, "flip_verdict", cwhere).value_or(false);
    required.push_back(detail::optional_field<bool>(cdoc, "required", cwhere));
    t.criteria.push_back(std::move(c));
  }
  int max_weight = 0;
  for (const auto& c : t.criteria) max_weight = std::max(max_weight, c.weight);
  for (std::size_t j = 0; j < t.criteria.size(); ++j) {
    t.criteria[j].required = required[j].value_or(t.criteria[j].weight >= max_weight);
  }
  t.categories = detail::declared_categories(doc, where);
  if (t.categories.empty()) t.categories = categories_in_order(t.criteria);
  validate_task(t);
  return t;
}

inline json task_to_json(const Task& t) {
  json doc;
  doc["id"] = t.id;
  doc["prompt"] = t.prompt;
  if (t.image_ref) doc["image_ref"] = *t.image_ref;
  doc["categories"] = t.categories;
  json crit = json::array();
  for (const auto& c : t.criteria) {
    json cd;
    cd["id"] = c.id;
    cd["text"] = c.text;
    if (!c.title.empty()) cd["title"] = c.title;
    cd["weight"] = c.weight;
    cd["category"] = c.category;
    cd["required"] = c.required;
    cd["explicitness"] = std::string(to_string(c.explicitness));
    cd["objectivity"] = std::string(to_string(c.objectivity));
    if (c.flip_verdict) cd["flip_verdict"] = true;
    crit.push_back(std::move(cd));
  }
  doc["criteria"] = std::move(crit);
  return doc;
}

inline SignedTask signed_task_from_json(const json& doc) {
  SignedTask t;
  t.id = detail::field<std::string>(doc, "id", "task");
  const std::string where = "task '" + t.id + "'";
  t.prompt = detail::field<std::string>(doc, "prompt", where);
  t.image_ref = detail::optional_field<std::string>(doc, "image_ref", where);
  auto crit = doc.find("criteria");
  if (crit == doc.end() || !crit->is_array()) throw ValidationError(where + ": criteria must be an array");
  for (const auto& cdoc : *crit) {
    auto c = detail::criterion_common<SignedCriterion>(cdoc, where);
    c.required = detail::optional_field<bool>(cdoc, "required", where + " criterion '" + c.id + "'");
    if (c.weight == 0) throw ValidationError(where + " criterion '" + c.id + "': weight must be nonzero");
    t.criteria.push_back(std::move(c));
  }
  t.categories = detail::declared_categories(doc, where);
  return t;
}

inline std::vector<Task> parse_tasks(std::istream& in, const std::string& name = "<tasks>") {
  std::vector<Task> tasks;
  std::set<std::string> ids;
  detail::for_each_record(in, name, kTasksSchema, [&](const json& doc, std::size_t) {
    Task t = task_from_json(doc);
    if (!ids.insert(t.id).second) throw ValidationError("duplicate task id '" + t.id + "'");
    tasks.push_back(std::move(t));
  });
  return tasks;
}

inline std::vector<Task> load_tasks(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_tasks(in, path);
}

/// Accepts either schema tag; a positive-only rubric is a valid signed rubric.
inline std::vector<SignedTask> parse_signed_tasks(std::istream& in, const std::string& name = "<tasks>") {
  std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const bool is_plain = content.find(std::string(kTasksSchema)) != std::string::npos &&
                        content.find(std::string(kSignedTasksSchema)) == std::string::npos;
  std::istringstream stream(content);
  std::vector<SignedTask> tasks;
  detail::for_each_record(stream, name, is_plain ? kTasksSchema : kSignedTasksSchema,
                          [&](const json& doc, std::size_t) { tasks.push_back(signed_task_from_json(doc)); });
  return tasks;
}

inline std::vector<SignedTask> load_signed_tasks(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_signed_tasks(in, path);
}

inline void write_tasks(std::ostream& out, const std::vector<Task>& tasks) {
  out << json{{"schema", kTasksSchema}}.dump() << '\n';
  for (const auto& t : tasks) out << task_to_json(t).dump() << '\n';
}

inline void save_tasks(const std::string& path, const std::vector<Task>& tasks) {
  auto out = detail::open_output(path);
  write_tasks(out, tasks);
}

inline json matrix_to_json(const VerdictMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.group_size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.num_criteria(); ++j) {
      const auto& v = m.at(i, j);
      json cell{{"value", std::string(to_string(v.value))}};
      if (v.rationale) cell["rationale"] = *v.rationale;
      row.push_back(std::move(cell));
    }
    rows.push_back(std::move(row));
  }
  return json{{"task_id", m.task_id()}, {"group_size", m.group_size()}, {"verdicts", std::move(rows)}};
}

inline VerdictMatrix matrix_from_json(const json& doc) {
  const auto task_id = detail::field<std::string>(doc, "task_id", "verdicts");
  const std::string where = "verdicts for '" + task_id + "'";
  auto gs = doc.find("group_size");
  if (gs == doc.end() || !gs->is_number_integer() || gs->get<long long>() < 1) {
    throw ValidationError(where + ": group_size must be a positive integer");
  }
  const auto group_size = gs->get<std::size_t>();
  auto rows = doc.find("verdicts");
  if (rows == doc.end() || !rows->is_array()) throw ValidationError(where + ": verdicts must be an array");
  if (rows->size() != group_size) {
    throw ValidationError(where + ": expected " + std::to_string(group_size) + " verdict rows, got " +
                          std::to_string(rows->size()));
  }
  const std::size_t n = (*rows)[0].is_array() ? (*rows)[0].size() : 0;
  if (n == 0) throw ValidationError(where + ": verdict rows must be nonempty arrays");
  VerdictMatrix m(task_id, group_size, n);
  for (std::size_t i = 0; i < group_size; ++i) {
    const auto& row = (*rows)[i];
    if (!row.is_array() || row.size() != n) {
      throw ValidationError(where + ": every (rollout, criterion) cell must be present; row " +
                            std::to_string(i) + " has a different length");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const auto& cell = row[j];
      if (!cell.is_object()) throw ValidationError(where + ": verdict cell must be an object");
      auto value = parse_verdict_value(detail::field<std::string>(cell, "value", where));
      if (!value) throw ValidationError(where + ": verdict value must be pass, fail, or invalid");
      m.at(i, j) = Verdict{*value, detail::optional_field<std::string>(cell, "rationale", where)};
    }
  }
  return m;
}

inline std::vector<VerdictMatrix> parse_verdicts(std::istream& in, const std::string& name = "<verdicts>") {
  std::vector<VerdictMatrix> out;
  detail::for_each_record(in, name, kVerdictsSchema,
                          [&](const json& doc, std::size_t) { out.push_back(matrix_from_json(doc)); });
  return out;
}

inline std::vector<VerdictMatrix> load_verdicts(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_verdicts(in, path);
}

inline void write_verdicts(std::ostream& out, const std::vector<VerdictMatrix>& matrices) {
  out << json{{"schema", kVerdictsSchema}}.dump() << '\n';
  for (const auto& m : matrices) out << matrix_to_json(m).dump() << '\n';
}

inline void save_verdicts(const std::string& path, const std::vector<VerdictMatrix>& matrices) {
  auto out = detail::open_output(path);
  write_verdicts(out, matrices);
}

inline std::vector<ResponseGroup> parse_responses(std::istream& in, const std::string& name = "<responses>") {
  std::vector<ResponseGroup> out;
  detail::for_each_record(in, name, kResponsesSchema, [&](const json& doc, std::size_t) {
    ResponseGroup g;
    g.task_id = detail::field<std::string>(doc, "task_id", "responses");
    g.responses = detail::field<std::vector<std::string>>(doc, "responses", "responses for '" + g.task_id + "'");
    if (g.responses.empty()) throw ValidationError("responses for '" + g.task_id + "' must be nonempty");
    out.push_back(std::move(g));
  });
  return out;
}

inline std::vector<ResponseGroup> load_responses(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_responses(in, path);
}

/// Task lookup by id; also checks each matrix against its task.
class TaskIndex {
 public:
  explicit TaskIndex(const std::vector<Task>& tasks) {
    for (const auto& t : tasks) by_id_.emplace(t.id, &t);
  }

  const Task& at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw ValidationError("no task with id '" + id + "'");
    return *it->second;
  }

  const Task& for_matrix(const VerdictMatrix& m) const {
    const Task& t = at(m.task_id());
    validate_matrix(m, t);
    return t;
  }

 private:
  std::map<std::string, const Task*> by_id_;
};

}  // namespace pow3r
