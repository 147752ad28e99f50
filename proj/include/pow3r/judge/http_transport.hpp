#pragma once

#include <chrono>
#include <map>
#include <string>

#include <httplib.h>

#include "pow3r/error.hpp"
#include "pow3r/judge/judge.hpp"

namespace pow3r::judge {

/// Splits "https://host:port/path" into ("https://host:port", "/path").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ValidationError("endpoint must include a scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}

  HttpResponse post(const std::string& url, const std::string& body,
                    const std::map<std::string, std::string>& headers) override {
    const auto [base, path] = split_url(url);
    httplib::Client client(base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        h.emplace(k, v);
      }
    }
    auto res = client.Post(path, h, body, content_type);
    if (!res) throw TransportError("POST " + url + " failed: " + httplib::to_string(res.error()));
    return HttpResponse{res->status, res->body};
  }

 private:
  std::chrono::seconds timeout_;
};

}  // namespace pow3r::judge
