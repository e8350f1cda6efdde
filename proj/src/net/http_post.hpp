#pragma once

#include <chrono>
#include <cstddef>
#include <string>

#include <json.hpp>

namespace lens::net {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

// Splits an absolute http(s) URL. Throws ConfigError when malformed.
Endpoint parse_endpoint(const std::string& url);

struct PostOptions {
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff_base{200};
};

// POSTs a JSON body and returns the parsed JSON response. Connection
// failures, 429 and 5xx are retried with exponential backoff plus jitter;
// other 4xx fail immediately. Throws TransportError carrying the last status
// and the number of attempts.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const PostOptions& opts);

}  // namespace lens::net
