#pragma once

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pow3r/error.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r::judge {

enum class PromptVariant { kPerCriterion, kVerdictOnly, kPerCategory };

inline std::string_view to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::kPerCriterion: return "per_criterion";
    case PromptVariant::kVerdictOnly: return "verdict_only";
    case PromptVariant::kPerCategory: return "per_category";
  }
  return "per_criterion";
}

inline PromptVariant parse_prompt_variant(std::string_view s) {
  if (s == "per_criterion") return PromptVariant::kPerCriterion;
  if (s == "verdict_only") return PromptVariant::kVerdictOnly;
  if (s == "per_category") return PromptVariant::kPerCategory;
  throw ValidationError("unknown prompt variant '" + std::string(s) + "'");
}

// Judge templates. Placeholders are {lower_snake_case}; any other brace text is literal.

inline constexpr std::string_view kPerCriterionTemplate =
    R"(Does the response satisfy this rubric criterion? Evaluate ONLY this criterion.

Rules:
- "Explicit" criteria must be directly addressed. "Implicit" may be inferred.
- "Objective" = factual pass/fail. "Subjective" = quality judgment.
- Weight is context only — does not affect your pass/fail decision.
- Minor phrasing/formatting differences are OK if substance is correct.
- OCR/text recognition criteria require exact text — "EXIST" ≠ "EXIT".

Examples:
- Rubric: "Identify chair material as wood" / Response: "a wooden chair" → {"reasoning": "Explicitly identifies wood.", "criteria_met": true}
- Rubric: "Graph shows decreasing trend after 2020" / Response: "steady growth" → {"reasoning": "Claims growth, not decrease.", "criteria_met": false}
- Rubric: "List ≥3 differences" / Response: "one difference" → {"reasoning": "Only 1 of 3 required.", "criteria_met": false}
- Rubric: "Read sign as 'EMERGENCY EXIT'" / Response: "'EMERGENCY EXIST'" → {"reasoning": "EXIST ≠ EXIT, OCR must be exact.", "criteria_met": false}

Rubric:
- Title: {rubric_title}
- Category: {rubric_category}
- {explicit_implicit} | {objective_subjective} | Weight: {rubric_weight}
- Criteria: {rubric_rationale}

Response:
{response}

Return ONLY valid JSON. "reasoning" BEFORE "criteria_met".
{"reasoning": "<one sentence>", "criteria_met": true/false})";

inline constexpr std::string_view kVerdictOnlyTemplate =
    R"(Does the response satisfy this criterion? Evaluate ONLY this criterion.
"Explicit" = directly addressed. "Implicit" = may be inferred.
OCR/text recognition = exact match required.

Rubric:
- Title: {rubric_title} | Category: {rubric_category}
- {explicit_implicit} | {objective_subjective} | Weight: {rubric_weight}
- Criteria: {rubric_rationale}

Response:
{response}

Return ONLY valid JSON: {"criteria_met": true} or {"criteria_met": false})";

inline constexpr std::string_view kPerCategoryTemplate =
    R"(Score the response against all rubrics below. Evaluate each independently as pass/fail.

Rules:
- "Explicit" = directly addressed. "Implicit" = may be inferred.
- "Objective" = factual. "Subjective" = quality judgment.
- OCR/text recognition criteria require exact text match.
- score = sum(weight of PASSED rubrics) / {total_weight}, between 0.0 and 1.0.

Rubrics:
{rubrics_text}

Total weight: {total_weight}

Response:
{response}

Return ONLY valid JSON. "reasoning" BEFORE "score".
{"reasoning": "<which rubrics passed/failed>", "score": <0.0-1.0>})";

/// Substitutes {name} placeholders. Throws when a placeholder has no value.
inline std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const char ch = tmpl[pos];
    if (ch == '{') {
      std::size_t end = pos + 1;
      while (end < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[end])) || tmpl[end] == '_')) ++end;
      if (end < tmpl.size() && tmpl[end] == '}' && end > pos + 1) {
        const std::string name(tmpl.substr(pos + 1, end - pos - 1));
        auto it = values.find(name);
        if (it == values.end()) throw ValidationError("prompt placeholder {" + name + "} has no value");
        out += it->second;
        pos = end + 1;
        continue;
      }
    }
    out.push_back(ch);
    ++pos;
  }
  return out;
}

namespace detail {

inline std::string explicit_label(Explicitness e) { return e == Explicitness::kExplicit ? "Explicit" : "Implicit"; }
inline std::string objective_label(Objectivity o) { return o == Objectivity::kObjective ? "Objective" : "Subjective"; }

inline std::map<std::string, std::string> criterion_values(const Criterion& c, const std::string& response) {
  if (c.text.empty()) throw ValidationError("criterion '" + c.id + "' has no text to render");
  return {{"rubric_title", c.display_title()},
          {"rubric_category", c.category},
          {"explicit_implicit", explicit_label(c.explicitness)},
          {"objective_subjective", objective_label(c.objectivity)},
          {"rubric_weight", std::to_string(c.weight)},
          {"rubric_rationale", c.text},
          {"response", response}};
}

}  // namespace detail

/// One line per criterion for the batched per-category prompt.
inline std::string rubrics_text(const std::vector<Criterion>& criteria) {
  std::string out;
  for (std::size_t j = 0; j < criteria.size(); ++j) {
    const auto& c = criteria[j];
    if (j > 0) out += '\n';
    out += "- Title: " + c.display_title() + " | Category: " + c.category + " | " +
           detail::explicit_label(c.explicitness) + " | " + detail::objective_label(c.objectivity) +
           " | Weight: " + std::to_string(c.weight) + " | Criteria: " + c.text;
  }
  return out;
}

/// Renders the single-criterion judge prompt.
inline std::string render_prompt(const Criterion& criterion, const std::string& response, PromptVariant variant) {
  switch (variant) {
    case PromptVariant::kPerCriterion:
      return fill_template(kPerCriterionTemplate, detail::criterion_values(criterion, response));
    case PromptVariant::kVerdictOnly:
      return fill_template(kVerdictOnlyTemplate, detail::criterion_values(criterion, response));
    case PromptVariant::kPerCategory:
      throw ValidationError("per_category prompts take the full criterion list");
  }
  throw InvariantError("unhandled prompt variant");
}

/// Renders the batched prompt over all of a task's criteria.
inline std::string render_category_prompt(const Task& task, const std::string& response) {
  if (task.criteria.empty()) throw ValidationError("per_category prompt needs at least one criterion");
  int total = 0;
  for (const auto& c : task.criteria) total += c.weight;
  return fill_template(kPerCategoryTemplate, {{"rubrics_text", rubrics_text(task.criteria)},
                                              {"total_weight", std::to_string(total)},
                                              {"response", response}});
}

inline std::string render_prompt(const Task& task, const std::string& response, std::size_t criterion_index,
                                 PromptVariant variant) {
  if (variant == PromptVariant::kPerCategory) return render_category_prompt(task, response);
  if (criterion_index >= task.criteria.size()) throw ValidationError("criterion index out of range");
  return render_prompt(task.criteria[criterion_index], response, variant);
}

}  // namespace pow3r::judge
