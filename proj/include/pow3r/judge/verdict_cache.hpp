#pragma once

#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "pow3r/digest.hpp"
#include "pow3r/error.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r::judge {

/// SHA-256 over (task id, rollout digest, criterion id + text digest, backend digest).
struct VerdictCacheKey {
  std::string digest;

  static VerdictCacheKey make(const std::string& task_id, const std::string& rollout_text, const Criterion& criterion,
                              const std::string& backend_digest) {
    nlohmann::json parts = nlohmann::json::array(
        {task_id, sha256_hex(rollout_text), criterion.id, sha256_hex(criterion.text), backend_digest});
    return VerdictCacheKey{sha256_hex(parts.dump())};
  }

  bool operator==(const VerdictCacheKey&) const = default;
};

/// Verdict memo with an optional append-only backing file (one JSON document per line).
/// Concurrent lookups share a lock; inserts are serialized.
class VerdictCache {
 public:
  VerdictCache() = default;

  explicit VerdictCache(const std::string& path) : path_(path) {
    std::ifstream in(path);
    std::string line;
    while (in && std::getline(in, line)) {
      auto doc = nlohmann::json::parse(line, nullptr, false);
      // A torn trailing line from an interrupted run is skipped.
      if (doc.is_discarded() || !doc.is_object() || !doc.contains("key") || !doc.contains("value")) continue;
      if (!doc["key"].is_string() || !doc["value"].is_string()) continue;
      auto value = parse_verdict_value(doc["value"].get<std::string>());
      if (!value) continue;
      Verdict v{*value, std::nullopt};
      if (doc.contains("rationale") && doc["rationale"].is_string()) v.rationale = doc["rationale"].get<std::string>();
      entries_[doc["key"].get<std::string>()] = std::move(v);
    }
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) throw ValidationError("cannot open verdict cache " + path);
  }

  VerdictCache(const VerdictCache&) = delete;
  VerdictCache& operator=(const VerdictCache&) = delete;

  std::optional<Verdict> get(const VerdictCacheKey& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key.digest);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const VerdictCacheKey& key, const Verdict& verdict) {
    std::unique_lock lock(mu_);
    if (!entries_.emplace(key.digest, verdict).second) return;
    if (out_.is_open()) {
      nlohmann::json doc{{"key", key.digest}, {"value", std::string(to_string(verdict.value))}};
      if (verdict.rationale) doc["rationale"] = *verdict.rationale;
      out_ << doc.dump() << '\n';
      out_.flush();
    }
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  const std::string& path() const { return path_; }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Verdict> entries_;
  std::string path_;
  std::ofstream out_;
};

}  // namespace pow3r::judge
