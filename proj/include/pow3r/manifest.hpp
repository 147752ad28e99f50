#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pow3r/dataset_io.hpp"
#include "pow3r/digest.hpp"

namespace pow3r {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kManifestName = "manifest.json";

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Provenance record written once per output directory.
class RunManifest {
 public:
  RunManifest(std::string command, json config, std::uint64_t seed)
      : command_(std::move(command)), config_(std::move(config)), seed_(seed), started_(utc_timestamp()) {}

  void add_input(const std::string& path) { inputs_.push_back({path, file_sha256(path)}); }
  void add_output(const std::string& path) { outputs_.push_back({path, file_sha256(path)}); }

  json to_json() const {
    auto files = [](const std::vector<std::pair<std::string, std::string>>& v) {
      json arr = json::array();
      for (const auto& [p, d] : v) arr.push_back(json{{"path", p}, {"sha256", d}});
      return arr;
    };
    return json{{"command", command_},
                {"config", config_},
                {"config_digest", sha256_hex(config_.dump())},
                {"seed", seed_},
                {"tool_version", kToolVersion},
                {"inputs", files(inputs_)},
                {"outputs", files(outputs_)},
                {"started_at", started_},
                {"finished_at", utc_timestamp()}};
  }

  /// Writes `<dir>/manifest.json`, replacing any previous one.
  std::string write(const std::string& dir) const {
    const auto path = (std::filesystem::path(dir) / kManifestName).string();
    auto out = detail::open_output(path);
    out << to_json().dump(2) << '\n';
    return path;
  }

 private:
  std::string command_;
  json config_;
  std::uint64_t seed_;
  std::string started_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

}  // namespace pow3r
