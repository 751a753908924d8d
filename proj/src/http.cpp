#include "hedge/http.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "hedge/error.hpp"

namespace hedge {

using nlohmann::json;

EndpointConfig with_env_credentials(EndpointConfig config) {
  if (config.api_key.empty()) {
    if (const char* key = std::getenv("HEDGE_API_KEY")) config.api_key = key;
  }
  return config;
}

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.empty()) {
    throw Error(ErrorCode::InvalidValue, "endpoint URL must start with http:// or https://: '" + url + "'");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::InvalidValue, "unsupported endpoint scheme '" + scheme + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
    out.path = "/v1";
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path = url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  }
  return out;
}

HttpTransport::HttpTransport(EndpointConfig config)
    : config_(std::move(config)), inflight_(std::max(1, std::min(config_.max_inflight, 1024))) {
  const auto parsed = parse_base_url(config_.base_url);
  scheme_host_port_ = parsed.scheme_host_port;
  path_prefix_ = parsed.path;
}

namespace {

struct SemaphoreGuard {
  std::counting_semaphore<1024>& sem;
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
};

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

json HttpTransport::post(const std::string& route, const json& body) {
  const std::string path = path_prefix_ + route;
  const std::string payload = body.dump();
  std::string last_error;
  auto backoff = config_.initial_backoff;
  const int attempts = std::max(1, config_.max_attempts);

  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Result result;
    {
      SemaphoreGuard guard(inflight_);
      httplib::Client client(scheme_host_port_);
      client.set_connection_timeout(std::chrono::seconds(10));
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      httplib::Headers headers;
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
      ++sent_;
      result = client.Post(path, headers, payload, "application/json");
    }
    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
    } else if (result->status >= 200 && result->status < 300) {
      try {
        return json::parse(result->body);
      } catch (const json::parse_error&) {
        throw Error(ErrorCode::EndpointError, "non-JSON response from " + path);
      }
    } else if (retryable_status(result->status)) {
      last_error = "HTTP " + std::to_string(result->status);
    } else {
      throw Error(ErrorCode::EndpointError,
                  "HTTP " + std::to_string(result->status) + " from " + path + ": " + result->body.substr(0, 300));
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::EndpointError, path + " failed after " + std::to_string(attempts) + " attempts (" +
                                            last_error + ")");
}

}  // namespace hedge
