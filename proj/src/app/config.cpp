#include <algorithm>
#include <initializer_list>

#include "lens/app.hpp"
#include "lens/error.hpp"
#include "lens/util.hpp"

namespace lens::app {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

void read_size(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return;
  if (!j[key].is_number_unsigned()) throw ConfigError(where + "." + key + " must be a non-negative integer");
  out = j[key].get<std::size_t>();
}

void read_ms(const json& j, const char* key, std::chrono::milliseconds& out, const std::string& where) {
  std::size_t ms = static_cast<std::size_t>(out.count());
  read_size(j, key, ms, where);
  out = std::chrono::milliseconds(static_cast<long long>(ms));
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

embed::ProviderConfig parse_provider(const json& j, const std::string& where) {
  embed::ProviderConfig cfg;
  if (j.is_null()) return cfg;
  check_keys(j, {"kind", "endpoint_url", "model_name", "dim", "batch_size", "timeout_ms", "max_retries",
                 "max_concurrency", "backoff_ms"},
             where);
  std::string kind = "local-deterministic";
  read(j, "kind", kind, where);
  if (kind == "remote") {
    cfg.kind = embed::ProviderKind::remote;
    cfg.model_name.clear();
  } else if (kind == "local-deterministic") {
    cfg.kind = embed::ProviderKind::local_deterministic;
  } else {
    throw ConfigError(where + ".kind must be 'remote' or 'local-deterministic'");
  }
  read(j, "endpoint_url", cfg.endpoint_url, where);
  read(j, "model_name", cfg.model_name, where);
  read_size(j, "dim", cfg.dim, where);
  read_size(j, "batch_size", cfg.batch_size, where);
  read_ms(j, "timeout_ms", cfg.timeout, where);
  read_size(j, "max_retries", cfg.max_retries, where);
  read_size(j, "max_concurrency", cfg.max_concurrency, where);
  read_ms(j, "backoff_ms", cfg.backoff_base, where);
  embed::apply_env(cfg);
  return cfg;
}

}  // namespace

void PipelineConfig::validate() const {
  if (corpus_dir.empty()) throw ConfigError("corpus_dir is required");
  if (work_dir.empty()) throw ConfigError("work_dir is required");
  chunking.validate();
  embed_stage.validate();
  retrieval_stage.validate();
  hdbscan.validate();
  labeler.validate();
  prompt.validate();
  if (reducer.method == cluster::ReducerMethod::pca && reducer.target_dim < 1) {
    throw ConfigError("reducer.target_dim must be >= 1");
  }
  if (reducer.method == cluster::ReducerMethod::pca && reducer.target_dim >= embed_stage.dim) {
    throw ConfigError("reducer.target_dim must be below embed_stage.dim");
  }
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
  if (coverage_m < 1) throw ConfigError("coverage_m must be >= 1");
  if (max_k < 1) throw ConfigError("max_k must be >= 1");
  if (default_k < 1 || default_k > max_k) throw ConfigError("default_k must be in [1, max_k]");
}

PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"corpus_dir", "work_dir", "chunking", "embed_stage", "retrieval_stage", "reducer", "hdbscan",
                 "labeler", "top_n", "n_repr", "coverage_m", "default_k", "max_k", "eval", "web_root"},
             "config");
  PipelineConfig cfg;
  std::string corpus, work;
  read(j, "corpus_dir", corpus, "config");
  read(j, "work_dir", work, "config");
  if (!corpus.empty()) cfg.corpus_dir = resolve(base_dir, corpus);
  if (!work.empty()) cfg.work_dir = resolve(base_dir, work);

  if (j.contains("chunking")) {
    check_keys(j["chunking"], {"word_limit"}, "chunking");
    read_size(j["chunking"], "word_limit", cfg.chunking.word_limit, "chunking");
  }
  cfg.embed_stage = parse_provider(j.value("embed_stage", json()), "embed_stage");
  cfg.retrieval_stage = parse_provider(j.value("retrieval_stage", json()), "retrieval_stage");

  if (j.contains("reducer")) {
    const auto& r = j["reducer"];
    check_keys(r, {"method", "target_dim", "random_seed"}, "reducer");
    std::string method = "pca";
    read(r, "method", method, "reducer");
    if (method == "pca") {
      cfg.reducer.method = cluster::ReducerMethod::pca;
    } else if (method == "none") {
      cfg.reducer.method = cluster::ReducerMethod::none;
    } else {
      throw ConfigError("reducer.method must be 'pca' or 'none'");
    }
    read_size(r, "target_dim", cfg.reducer.target_dim, "reducer");
    read(r, "random_seed", cfg.reducer.random_seed, "reducer");
  }
  if (j.contains("hdbscan")) {
    const auto& h = j["hdbscan"];
    check_keys(h, {"min_cluster_size", "min_samples"}, "hdbscan");
    read_size(h, "min_cluster_size", cfg.hdbscan.min_cluster_size, "hdbscan");
    read_size(h, "min_samples", cfg.hdbscan.min_samples, "hdbscan");
  }
  if (j.contains("labeler")) {
    const auto& l = j["labeler"];
    check_keys(l, {"provider", "template"}, "labeler");
    if (l.contains("provider")) {
      const auto& p = l["provider"];
      const std::string where = "labeler.provider";
      check_keys(p, {"kind", "endpoint_url", "model_name", "temperature", "timeout_ms", "max_retries",
                     "max_concurrency", "backoff_ms"},
                 where);
      std::string kind = "stub";
      read(p, "kind", kind, where);
      if (kind == "stub") {
        cfg.labeler.kind = label::GenProviderKind::stub;
      } else if (kind == "remote-chat") {
        cfg.labeler.kind = label::GenProviderKind::remote_chat;
      } else {
        throw ConfigError(where + ".kind must be 'stub' or 'remote-chat'");
      }
      read(p, "endpoint_url", cfg.labeler.endpoint_url, where);
      read(p, "model_name", cfg.labeler.model_name, where);
      read(p, "temperature", cfg.labeler.temperature, where);
      read_ms(p, "timeout_ms", cfg.labeler.timeout, where);
      read_size(p, "max_retries", cfg.labeler.max_retries, where);
      read_size(p, "max_concurrency", cfg.labeler.max_concurrency, where);
      read_ms(p, "backoff_ms", cfg.labeler.backoff_base, where);
    }
    if (l.contains("template")) {
      const auto& t = l["template"];
      const std::string where = "labeler.template";
      check_keys(t, {"instruction", "keyword_marker", "snippet_marker", "max_label_words", "snippet_word_limit"},
                 where);
      read(t, "instruction", cfg.prompt.instruction, where);
      read(t, "keyword_marker", cfg.prompt.keyword_marker, where);
      read(t, "snippet_marker", cfg.prompt.snippet_marker, where);
      read_size(t, "max_label_words", cfg.prompt.max_label_words, where);
      read_size(t, "snippet_word_limit", cfg.prompt.snippet_word_limit, where);
    }
  }
  label::apply_env(cfg.labeler);

  read_size(j, "top_n", cfg.top_n, "config");
  read_size(j, "n_repr", cfg.n_repr, "config");
  read_size(j, "coverage_m", cfg.coverage_m, "config");
  read_size(j, "default_k", cfg.default_k, "config");
  read_size(j, "max_k", cfg.max_k, "config");

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, {"bert_scores", "human_scores"}, "eval");
    std::string path;
    read(e, "bert_scores", path, "eval");
    if (!path.empty()) cfg.bert_scores = resolve(base_dir, path);
    path.clear();
    read(e, "human_scores", path, "eval");
    if (!path.empty()) cfg.human_scores = resolve(base_dir, path);
  }
  std::string web_root;
  read(j, "web_root", web_root, "config");
  if (!web_root.empty()) cfg.web_root = resolve(base_dir, web_root);

  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto text = util::read_file(path);
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json to_json(const embed::ProviderConfig& cfg) {
  nlohmann::ordered_json j;
  j["kind"] = cfg.kind == embed::ProviderKind::remote ? "remote" : "local-deterministic";
  j["endpoint_url"] = cfg.endpoint_url;
  j["model_name"] = cfg.model_name;
  j["dim"] = cfg.dim;
  return j;
}

nlohmann::ordered_json to_json(const label::GenProviderConfig& cfg) {
  nlohmann::ordered_json j;
  j["kind"] = cfg.kind == label::GenProviderKind::remote_chat ? "remote-chat" : "stub";
  j["endpoint_url"] = cfg.endpoint_url;
  j["model_name"] = cfg.model_name;
  j["temperature"] = cfg.temperature;
  return j;
}

nlohmann::ordered_json to_json(const label::PromptTemplate& tmpl) {
  nlohmann::ordered_json j;
  j["instruction"] = tmpl.instruction;
  j["keyword_marker"] = tmpl.keyword_marker;
  j["snippet_marker"] = tmpl.snippet_marker;
  j["max_label_words"] = tmpl.max_label_words;
  j["snippet_word_limit"] = tmpl.snippet_word_limit;
  return j;
}

}  // namespace lens::app
