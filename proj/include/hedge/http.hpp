#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

namespace hedge {

struct EndpointConfig {
  /// e.g. http://localhost:8000/v1; a URL without a path gets /v1.
  std::string base_url;
  std::string api_key;
  std::string model;
  int max_inflight = 4;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{300};
};

/// Reads HEDGE_API_KEY when `api_key` is empty.
EndpointConfig with_env_credentials(EndpointConfig config);

class JsonTransport {
 public:
  virtual ~JsonTransport() = default;
  /// POSTs `body` to base_url + route and returns the decoded response.
  virtual nlohmann::json post(const std::string& route, const nlohmann::json& body) = 0;
};

/// OpenAI-style HTTP transport. Transport failures, 429 and 5xx responses are
/// retried with exponential backoff up to max_attempts; other statuses fail at
/// once with EndpointError. At most max_inflight requests run concurrently.
class HttpTransport final : public JsonTransport {
 public:
  explicit HttpTransport(EndpointConfig config);
  nlohmann::json post(const std::string& route, const nlohmann::json& body) override;

  const EndpointConfig& config() const noexcept { return config_; }
  /// Number of HTTP requests actually sent (retries included).
  long long requests_sent() const noexcept { return sent_.load(); }

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::counting_semaphore<1024> inflight_;
  std::atomic<long long> sent_{0};
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};
ParsedUrl parse_base_url(const std::string& url);

}  // namespace hedge
