#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "pow3r/rubric.hpp"

namespace pow3r::judge {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Removes a surrounding ``` or ```json fence.
inline std::string_view strip_fence(std::string_view s) {
  s = trim(s);
  if (s.size() < 6 || s.substr(0, 3) != "```" || s.substr(s.size() - 3) != "```") return s;
  s = s.substr(3, s.size() - 6);
  const auto nl = s.find('\n');
  if (nl != std::string_view::npos) {
    const auto tag = trim(s.substr(0, nl));
    if (tag.find_first_of("{}\"") == std::string_view::npos) s = s.substr(nl + 1);
  }
  return trim(s);
}

/// Parses raw judge output into an object, also trying the outermost {...} span.
inline std::optional<nlohmann::json> extract_object(std::string_view raw) {
  const auto body = strip_fence(raw);
  auto doc = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
  if (!doc.is_discarded() && doc.is_object()) return doc;
  const auto open = body.find('{');
  const auto close = body.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  const auto inner = body.substr(open, close - open + 1);
  doc = nlohmann::json::parse(inner.begin(), inner.end(), nullptr, false);
  if (!doc.is_discarded() && doc.is_object()) return doc;
  return std::nullopt;
}

}  // namespace detail

/// Maps judge output to pass/fail/invalid. Never throws.
inline Verdict parse_verdict(std::string_view raw) noexcept {
  try {
    const auto doc = detail::extract_object(raw);
    if (!doc) return Verdict{};
    const auto it = doc->find("criteria_met");
    if (it == doc->end() || !it->is_boolean()) return Verdict{};
    Verdict v{it->get<bool>() ? VerdictValue::kPass : VerdictValue::kFail, std::nullopt};
    const auto reasoning = doc->find("reasoning");
    if (reasoning != doc->end() && reasoning->is_string()) v.rationale = reasoning->get<std::string>();
    return v;
  } catch (...) {
    return Verdict{};
  }
}

/// Score in [0, 1] from the batched per-category prompt; nullopt when unusable.
inline std::optional<double> parse_category_score(std::string_view raw) noexcept {
  try {
    const auto doc = detail::extract_object(raw);
    if (!doc) return std::nullopt;
    const auto it = doc->find("score");
    if (it == doc->end() || !it->is_number()) return std::nullopt;
    const double s = it->get<double>();
    if (!(s >= 0.0 && s <= 1.0)) return std::nullopt;
    return s;
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace pow3r::judge
