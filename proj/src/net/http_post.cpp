#include "net/http_post.hpp"

#include <random>
#include <thread>

#include <httplib.h>

#include "lens/error.hpp"

namespace lens::net {

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (ep.origin.size() <= scheme_end + 3) throw ConfigError("endpoint URL lacks a host: " + url);
  return ep;
}

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const PostOptions& opts) {
  const auto ep = parse_endpoint(url);
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!opts.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts.api_key);
  const auto payload = body.dump();

  std::mt19937_64 jitter_rng{std::random_device{}()};
  int last_status = -1;
  std::string last_error;
  const std::size_t attempts_allowed = opts.max_retries + 1;
  for (std::size_t attempt = 1; attempt <= attempts_allowed; ++attempt) {
    auto res = client.Post(ep.path, headers, payload, "application/json");
    if (res) {
      last_status = res->status;
      if (res->status >= 200 && res->status < 300) {
        auto parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
          throw TransportError("response from " + url + " is not valid JSON", res->status, attempt);
        }
        return parsed;
      }
      last_error = "HTTP " + std::to_string(res->status);
      const bool retryable = res->status == 429 || res->status >= 500;
      if (!retryable) {
        throw TransportError("request to " + url + " failed: " + last_error, last_status, attempt);
      }
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt == attempts_allowed) break;
    const auto base = opts.backoff_base * (1LL << std::min<std::size_t>(attempt - 1, 10));
    std::uniform_int_distribution<long long> jitter(0, base.count() / 2);
    std::this_thread::sleep_for(base + std::chrono::milliseconds(jitter(jitter_rng)));
  }
  throw TransportError("request to " + url + " failed after " + std::to_string(attempts_allowed) +
                           " attempts: " + last_error,
                       last_status, attempts_allowed);
}

}  // namespace lens::net
