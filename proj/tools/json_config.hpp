#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace pow3r::cli {

/// CLI11 config reader for JSON files. Objects map to subcommand sections:
/// {"simulate": {"steps": 200, "constructions": ["cat", "dyn"]}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->count() > 0) {
        const auto& res = opt->results();
        j[name] = res.size() == 1 ? nlohmann::json(res[0]) : nlohmann::json(res);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      auto inner = nlohmann::json::parse(to_config(sub, default_also, false, ""));
      if (!inner.empty()) j[sub->get_name()] = inner;
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    return flatten(j, "", {});
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be strings, numbers, booleans, or arrays of those");
  }

  static std::vector<CLI::ConfigItem> flatten(const nlohmann::json& j, const std::string& name,
                                              std::vector<std::string> prefix) {
    std::vector<CLI::ConfigItem> out;
    if (j.is_object()) {
      if (!name.empty()) prefix.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) {
        auto sub = flatten(*it, it.key(), prefix);
        out.insert(out.end(), sub.begin(), sub.end());
      }
      return out;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = prefix;
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs.push_back(scalar(j));
    }
    out.push_back(std::move(item));
    return out;
  }
};

}  // namespace pow3r::cli
