#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pow3r/digest.hpp"
#include "pow3r/error.hpp"
#include "pow3r/judge/prompts.hpp"
#include "pow3r/judge/verdict_cache.hpp"
#include "pow3r/judge/verdict_parser.hpp"
#include "pow3r/random.hpp"
#include "pow3r/rubric.hpp"

namespace pow3r::judge {

using nlohmann::json;

struct LatentCriterion {
  double pass_probability = 0.5;
  double invalid_probability = 0.0;
};

/// Latent per-criterion pass/invalid probabilities for the deterministic judge.
struct SimulatedJudgeTable {
  std::uint64_t seed = 0;
  LatentCriterion fallback;
  std::map<std::string, LatentCriterion> criteria;

  const LatentCriterion& lookup(const std::string& criterion_id) const {
    auto it = criteria.find(criterion_id);
    return it == criteria.end() ? fallback : it->second;
  }

  void validate() const {
    auto check = [](const LatentCriterion& l, const std::string& who) {
      if (!(l.pass_probability >= 0.0 && l.pass_probability <= 1.0)) {
        throw ValidationError(who + ": pass probability must lie in [0, 1]");
      }
      if (!(l.invalid_probability >= 0.0 && l.invalid_probability < 1.0)) {
        throw ValidationError(who + ": invalid probability must lie in [0, 1)");
      }
    };
    check(fallback, "simulated judge default");
    for (const auto& [id, l] : criteria) check(l, "simulated judge criterion '" + id + "'");
  }

  json to_json() const {
    json crit = json::object();
    for (const auto& [id, l] : criteria) crit[id] = {{"pass", l.pass_probability}, {"invalid", l.invalid_probability}};
    return json{{"seed", seed},
                {"default", {{"pass", fallback.pass_probability}, {"invalid", fallback.invalid_probability}}},
                {"criteria", std::move(crit)}};
  }

  /// Reads {"default": {"pass", "invalid"}, "criteria": {id: {"pass", "invalid"}}}; seed is set separately.
  static SimulatedJudgeTable from_json(const json& doc) {
    SimulatedJudgeTable t;
    auto read = [](const json& d) {
      LatentCriterion l;
      l.pass_probability = d.value("pass", 0.5);
      l.invalid_probability = d.value("invalid", 0.0);
      return l;
    };
    try {
      if (doc.contains("seed")) t.seed = doc["seed"].get<std::uint64_t>();
      if (doc.contains("default")) t.fallback = read(doc["default"]);
      if (doc.contains("criteria")) {
        for (const auto& [id, d] : doc["criteria"].items()) t.criteria[id] = read(d);
      }
    } catch (const json::exception& e) {
      throw ValidationError(std::string("simulated judge table: ") + e.what());
    }
    t.validate();
    return t;
  }
};

/// Chat-completion judge settings. Defaults: T = 1.0, 2048 completion tokens,
/// 3 attempts with exponential backoff from 1 s.
struct RemoteConfig {
  std::string endpoint;
  std::string model;
  std::string reasoning_effort = "medium";
  double temperature = 1.0;
  int max_tokens = 2048;
  std::string auth_env = "JUDGE_API_KEY";
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds timeout{120};
  std::size_t max_parallel = 4;
  bool forward_images = false;
  PromptVariant variant = PromptVariant::kPerCriterion;

  /// Fields that change verdicts; transport tuning is excluded.
  json verdict_fields() const {
    return json{{"endpoint", endpoint},
                {"model", model},
                {"reasoning_effort", reasoning_effort},
                {"temperature", temperature},
                {"max_tokens", max_tokens},
                {"forward_images", forward_images},
                {"variant", std::string(to_string(variant))}};
  }
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// POST transport for remote judging. Implementations throw TransportError when
/// no HTTP response was obtained.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::map<std::string, std::string>& headers) = 0;
};

struct JudgeBackend {
  enum class Kind { kSimulated, kRemote };
  Kind kind = Kind::kSimulated;
  SimulatedJudgeTable simulated;
  RemoteConfig remote;

  std::string digest() const {
    json doc = kind == Kind::kSimulated ? json{{"kind", "simulated"}, {"table", simulated.to_json()}}
                                        : json{{"kind", "remote"}, {"remote", remote.verdict_fields()}};
    return sha256_hex(doc.dump());
  }
};

/// Deterministic simulated verdict for one cell, before any avoidance flip.
inline Verdict simulated_verdict(const SimulatedJudgeTable& table, const std::string& task_id, std::size_t rollout,
                                 const std::string& criterion_id) {
  const auto& latent = table.lookup(criterion_id);
  std::uint64_t h = hash_combine(splitmix64(table.seed), task_id);
  h = hash_combine(h, static_cast<std::uint64_t>(rollout));
  h = hash_combine(h, criterion_id);
  const double u_invalid = unit_interval(hash_combine(h, std::uint64_t{1}));
  const double u_pass = unit_interval(hash_combine(h, std::uint64_t{2}));
  if (u_invalid < latent.invalid_probability) return Verdict{VerdictValue::kInvalid, std::nullopt};
  return Verdict{u_pass < latent.pass_probability ? VerdictValue::kPass : VerdictValue::kFail, std::nullopt};
}

struct JudgeResult {
  VerdictMatrix matrix;
  std::vector<std::string> warnings;
  std::size_t remote_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t transport_failures = 0;
};

/// Builds the chat-completion request body for one judge call.
inline json build_request(const RemoteConfig& config, const std::string& system_prompt, const std::string& response,
                          const std::optional<std::string>& image_ref) {
  json user_content;
  if (config.forward_images && image_ref) {
    user_content = json::array({json{{"type", "text"}, {"text", response}},
                                json{{"type", "image_url"}, {"image_url", {{"url", *image_ref}}}}});
  } else {
    user_content = response;
  }
  json body{{"model", config.model},
            {"messages", json::array({json{{"role", "system"}, {"content", system_prompt}},
                                      json{{"role", "user"}, {"content", user_content}}})},
            {"temperature", config.temperature},
            {"max_completion_tokens", config.max_tokens}};
  if (!config.reasoning_effort.empty()) body["reasoning_effort"] = config.reasoning_effort;
  return body;
}

/// Pulls choices[0].message.content out of a chat-completion response.
inline std::optional<std::string> completion_text(const std::string& body) {
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) return std::nullopt;
  const auto& message = first["message"];
  if (!message.contains("content") || !message["content"].is_string()) return std::nullopt;
  return message["content"].get<std::string>();
}

/// Produces verdict matrices for rollout groups with caching, retries, and
/// bounded parallelism for remote calls.
class Judge {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Judge(JudgeBackend backend, std::shared_ptr<Transport> transport = nullptr, VerdictCache* cache = nullptr,
                 Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : backend_(std::move(backend)),
        transport_(std::move(transport)),
        cache_(cache),
        sleeper_(std::move(sleeper)),
        backend_digest_(backend_.digest()) {
    if (backend_.kind == JudgeBackend::Kind::kSimulated) backend_.simulated.validate();
    if (backend_.kind == JudgeBackend::Kind::kRemote) {
      if (!transport_) throw ValidationError("remote judge needs a transport");
      if (backend_.remote.model.empty()) throw ValidationError("remote judge needs a model name");
      if (backend_.remote.max_attempts < 1) throw ValidationError("remote judge needs at least one attempt");
      if (backend_.remote.variant == PromptVariant::kPerCategory) {
        throw ValidationError("per_category prompts are calibration-only and cannot fill a verdict matrix");
      }
    }
  }

  const JudgeBackend& backend() const { return backend_; }

  JudgeResult judge_group(const Task& task, const std::vector<std::string>& rollouts) {
    if (rollouts.empty()) throw ValidationError("task '" + task.id + "': no rollouts to judge");
    JudgeResult result;
    result.matrix = VerdictMatrix(task.id, rollouts.size(), task.criteria.size());
    const std::size_t cells = rollouts.size() * task.criteria.size();

    std::atomic<std::size_t> remote_calls{0};
    std::atomic<std::size_t> cache_hits{0};
    std::atomic<std::size_t> failures{0};
    std::mutex warn_mu;
    std::optional<std::string> last_transport_error;

    if (backend_.kind == JudgeBackend::Kind::kRemote && task.image_ref && !backend_.remote.forward_images) {
      result.warnings.push_back("task '" + task.id + "': image_ref omitted (backend does not forward images)");
    }

    auto judge_cell = [&](std::size_t cell) {
      const std::size_t i = cell / task.criteria.size();
      const std::size_t j = cell % task.criteria.size();
      const Criterion& criterion = task.criteria[j];
      const auto key = VerdictCacheKey::make(task.id, rollouts[i], criterion, backend_digest_);
      // The cache holds the judge's raw verdict; the avoidance flip is applied on read.
      std::optional<Verdict> raw = cache_ ? cache_->get(key) : std::nullopt;
      if (raw) {
        ++cache_hits;
      } else if (backend_.kind == JudgeBackend::Kind::kSimulated) {
        raw = simulated_verdict(backend_.simulated, task.id, i, criterion.id);
        if (cache_) cache_->put(key, *raw);
      } else {
        std::string error;
        raw = call_remote(task, rollouts[i], criterion, remote_calls, error);
        if (raw) {
          if (cache_) cache_->put(key, *raw);
        } else {
          ++failures;
          raw = Verdict{VerdictValue::kInvalid, "transport failure: " + error};
          std::lock_guard lock(warn_mu);
          last_transport_error = error;
        }
      }
      result.matrix.at(i, j) = criterion.flip_verdict ? flipped(*raw) : *raw;
    };

    const std::size_t workers = backend_.kind == JudgeBackend::Kind::kRemote
                                    ? std::clamp<std::size_t>(backend_.remote.max_parallel, 1, cells)
                                    : 1;
    if (workers == 1) {
      for (std::size_t c = 0; c < cells; ++c) judge_cell(c);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      std::exception_ptr first_error;
      std::mutex err_mu;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t c = next++; c < cells; c = next++) {
            try {
              judge_cell(c);
            } catch (...) {
              std::lock_guard lock(err_mu);
              if (!first_error) first_error = std::current_exception();
            }
          }
        });
      }
      for (auto& t : pool) t.join();
      if (first_error) std::rethrow_exception(first_error);
    }

    result.remote_calls = remote_calls.load();
    result.cache_hits = cache_hits.load();
    result.transport_failures = failures.load();
    if (result.transport_failures > 0) {
      result.warnings.push_back("task '" + task.id + "': " + std::to_string(result.transport_failures) +
                                " judge call(s) failed after retries and were marked invalid (last error: " +
                                last_transport_error.value_or("unknown") + ")");
    }
    return result;
  }

 private:
  std::optional<Verdict> call_remote(const Task& task, const std::string& response, const Criterion& criterion,
                                     std::atomic<std::size_t>& calls, std::string& error) {
    const auto& cfg = backend_.remote;
    const std::string prompt = render_prompt(criterion, response, cfg.variant);
    const std::string body = build_request(cfg, prompt, response, task.image_ref).dump();
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!cfg.auth_env.empty()) {
      if (const char* key = std::getenv(cfg.auth_env.c_str()); key != nullptr && *key != '\0') {
        headers[cfg.auth_header] = cfg.auth_prefix + key;
      }
    }
    auto backoff = cfg.initial_backoff;
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
      try {
        ++calls;
        const HttpResponse resp = transport_->post(cfg.endpoint, body, headers);
        if (resp.status >= 200 && resp.status < 300) {
          const auto text = completion_text(resp.body);
          // A well-formed HTTP exchange with unusable content is a judged-invalid cell, not a transport fault.
          return text ? parse_verdict(*text) : Verdict{};
        }
        error = "HTTP " + std::to_string(resp.status);
        // Client errors other than rate limiting will not improve on retry.
        if (resp.status >= 400 && resp.status < 500 && resp.status != 408 && resp.status != 429) break;
      } catch (const TransportError& e) {
        error = e.what();
      }
      if (attempt < cfg.max_attempts) {
        sleeper_(backoff);
        backoff *= 2;
      }
    }
    return std::nullopt;
  }

  JudgeBackend backend_;
  std::shared_ptr<Transport> transport_;
  VerdictCache* cache_;
  Sleeper sleeper_;
  std::string backend_digest_;
};

/// Percentage of valid pairs on which two verdict vectors agree; pairs with an
/// invalid side are skipped.
inline double agreement(const std::vector<VerdictValue>& a, const std::vector<VerdictValue>& b) {
  if (a.size() != b.size()) throw ValidationError("agreement needs equal-length verdict vectors");
  std::size_t valid = 0;
  std::size_t match = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] == VerdictValue::kInvalid || b[k] == VerdictValue::kInvalid) continue;
    ++valid;
    if (a[k] == b[k]) ++match;
  }
  if (valid == 0) throw ValidationError("agreement undefined: no valid verdict pairs");
  return 100.0 * static_cast<double>(match) / static_cast<double>(valid);
}

}  // namespace pow3r::judge
