#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <mutex>

#include <httplib.h>

#include "lens/app.hpp"
#include "lens/error.hpp"
#include "lens/util.hpp"

namespace lens::app {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::optional<nlohmann::json> load_json_if(const Pipeline& p, Stage stage, const char* name) {
  if (!p.is_complete(stage)) return std::nullopt;
  auto j = nlohmann::json::parse(util::read_file(p.artifact_path(name)), nullptr, false);
  if (j.is_discarded()) throw FormatError(name, "not valid JSON");
  return j;
}

}  // namespace

QueryService::QueryService(const Pipeline& pipeline)
    : index_(1), max_k_(pipeline.config().max_k), default_k_(pipeline.config().default_k) {
  pipeline.require_complete_through(Stage::embed);
  index_ = index::VectorIndex::load(pipeline.artifact_path(artifact::kIndex));
  provider_ = embed::make_provider(pipeline.config().retrieval_stage);
  if (provider_->dim() != index_.dim()) {
    throw ConfigError("retrieval_stage.dim does not match the stored index; rerun embed");
  }
  if (auto t = load_json_if(pipeline, Stage::topics, artifact::kTopics)) topics_ = topics::topic_set_from_json(*t);
  if (auto l = load_json_if(pipeline, Stage::label, artifact::kLabels)) labels_ = label::labels_from_json(*l);
  report_ = load_json_if(pipeline, Stage::eval, artifact::kReport);
}

QueryService::QueryService(index::VectorIndex index, std::unique_ptr<embed::EmbeddingProvider> provider,
                           std::optional<topics::TopicSet> topics, std::vector<label::TopicLabel> labels,
                           std::optional<nlohmann::json> report, std::size_t max_k, std::size_t default_k)
    : index_(std::move(index)),
      provider_(std::move(provider)),
      topics_(std::move(topics)),
      labels_(std::move(labels)),
      report_(std::move(report)),
      max_k_(max_k),
      default_k_(default_k) {
  if (!provider_) throw ConfigError("query service needs an embedding provider");
  if (max_k_ < 1) throw ConfigError("max_k must be >= 1");
  if (default_k_ < 1 || default_k_ > max_k_) throw ConfigError("default_k must be in [1, max_k]");
}

index::RetrievalResult QueryService::query(const std::string& text, std::size_t k) const {
  if (k == 0) throw UsageError("k must be >= 1");
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw UsageError("query text is empty");
  }
  if (index_.empty()) throw EmptyIndexError();
  const std::string texts[] = {text};
  const auto vectors = embed::embed_texts(*provider_, texts);
  return index_.search(vectors.front(), std::min(k, max_k_));
}

ojson QueryService::topics_json() const {
  auto out = ojson::array();
  if (!topics_) return out;
  // TopicSet is already frequency desc, topic_id asc.
  for (const auto& t : topics_->topics) {
    ojson item;
    item["topic_id"] = t.topic_id;
    const auto it = std::find_if(labels_.begin(), labels_.end(), [&](const auto& l) { return l.topic_id == t.topic_id; });
    item["label"] = it == labels_.end() ? ojson(nullptr) : ojson(it->label);
    item["frequency"] = t.frequency;
    auto kw = ojson::array();
    for (const auto& k : t.keywords) kw.push_back(k.term);
    item["keywords"] = std::move(kw);
    out.push_back(std::move(item));
  }
  return out;
}

ojson hits_json(const index::RetrievalResult& result) {
  auto hits = ojson::array();
  for (const auto& h : result.hits) {
    hits.push_back(ojson{{"chunk_id", h.chunk_id}, {"doc_id", h.doc_id}, {"score", h.score}, {"text", h.text}});
  }
  return ojson{{"hits", std::move(hits)}};
}

std::string format_hits(const index::RetrievalResult& result) {
  std::string out;
  for (std::size_t i = 0; i < result.hits.size(); ++i) {
    const auto& h = result.hits[i];
    char score[32];
    std::snprintf(score, sizeof(score), "%.4f", h.score);
    out += std::to_string(i + 1) + "\t" + score + "\t" + h.chunk_id + "\t" + h.doc_id + "\t" + h.text + "\n";
  }
  return out;
}

BindAddress parse_bind(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw UsageError("bind address must be host:port, got '" + text + "'");
  BindAddress addr;
  addr.host = text.substr(0, colon);
  if (addr.host.size() >= 2 && addr.host.front() == '[' && addr.host.back() == ']') {
    addr.host = addr.host.substr(1, addr.host.size() - 2);
  }
  if (addr.host.empty()) addr.host = "0.0.0.0";
  const auto port = std::string_view(text).substr(colon + 1);
  int value = -1;
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc() || ptr != port.data() + port.size() || value < 0 || value > 65535) {
    throw UsageError("bad port in bind address '" + text + "'");
  }
  addr.port = value;
  return addr;
}

// ------------------------------------------------------------------ server

struct ApiServer::Impl {
  const QueryService& service;
  std::optional<fs::path> web_root;
  httplib::Server server;
  std::mutex log_mutex;
  std::atomic<bool> stop_requested{false};

  Impl(const QueryService& s, std::optional<fs::path> root) : service(s), web_root(std::move(root)) {
    // httplib's default also sets SO_REUSEPORT, which would let a second server share the port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
  }

  static void send_json(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& error, const std::string& detail) {
    send_json(res, status, ojson{{"error", error}, {"detail", detail}});
  }

  void handle_query(const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      return send_error(res, 400, "bad_request", "body must be a JSON object");
    }
    if (!body.contains("query") || !body["query"].is_string()) {
      return send_error(res, 400, "bad_request", "'query' must be a string");
    }
    std::size_t k = service.default_k();
    if (body.contains("k") && !body["k"].is_null()) {
      if (!body["k"].is_number_integer()) return send_error(res, 400, "bad_request", "'k' must be an integer");
      const auto raw = body["k"].get<long long>();
      if (raw < 1) return send_error(res, 400, "bad_request", "k must be >= 1");
      k = static_cast<std::size_t>(raw);
    }
    try {
      send_json(res, 200, hits_json(service.query(body["query"].get<std::string>(), k)));
    } catch (const UsageError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const EmptyIndexError& e) {
      send_error(res, 409, "empty_index", e.what());
    } catch (const TransportError& e) {
      send_error(res, 502, "provider_unavailable", e.what());
    }
  }

  void install_routes() {
    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, ojson{{"status", "ok"}, {"index_size", service.index_size()}});
    });
    server.Get("/api/topics", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, service.topics_json());
    });
    server.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      if (!service.report()) return send_error(res, 404, "not_found", "no evaluation report; run `lens eval` first");
      res.status = 200;
      res.set_content(service.report()->dump(), "application/json");
    });
    server.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) { handle_query(req, res); });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      } catch (...) {
        send_error(res, 500, "internal", "unknown error");
      }
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "error", req.method + " " + req.path);
      }
    });
    server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      ojson line{{"method", req.method}, {"path", req.path}, {"status", res.status},
                 {"remote", req.remote_addr}, {"bytes", res.body.size()}};
      std::lock_guard lock(log_mutex);
      std::cerr << line.dump() << '\n';
    });

    if (web_root) {
      if (!server.set_mount_point("/", web_root->string())) {
        throw ConfigError("web_root " + web_root->string() + " is not a directory");
      }
    }
  }
};

ApiServer::ApiServer(const QueryService& service, std::optional<fs::path> web_root)
    : impl_(std::make_unique<Impl>(service, std::move(web_root))) {
  impl_->install_routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const BindAddress& addr) {
  if (addr.port == 0) {
    const int port = impl_->server.bind_to_any_port(addr.host);
    if (port <= 0) throw Error("cannot bind " + addr.host + ":0");
    return port;
  }
  if (!impl_->server.bind_to_port(addr.host, addr.port)) {
    throw Error("cannot bind " + addr.host + ":" + std::to_string(addr.port) + " (address in use?)");
  }
  return addr.port;
}

void ApiServer::listen() {
  if (impl_->stop_requested) return;
  impl_->server.listen_after_bind();
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->stop_requested = true;
  impl_->server.stop();
}

void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace lens::app
