#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lens/cluster.hpp"
#include "lens/embed.hpp"
#include "lens/evalkit.hpp"
#include "lens/index.hpp"
#include "lens/ingest.hpp"
#include "lens/label.hpp"
#include "lens/topics.hpp"

namespace lens::app {

struct PipelineConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path work_dir;
  ingest::ChunkingConfig chunking;
  embed::ProviderConfig embed_stage;
  embed::ProviderConfig retrieval_stage;
  cluster::ReducerConfig reducer;
  cluster::HdbscanConfig hdbscan;
  label::GenProviderConfig labeler;
  label::PromptTemplate prompt;
  std::size_t top_n = 10;
  std::size_t n_repr = 3;
  std::size_t coverage_m = 10;
  std::size_t default_k = 5;
  std::size_t max_k = 100;
  std::optional<std::filesystem::path> bert_scores;
  std::optional<std::filesystem::path> human_scores;
  std::optional<std::filesystem::path> web_root;

  void validate() const;
};

// Parses a config document. Relative paths resolve against `base_dir`.
// Unknown keys are rejected. API keys come only from the environment.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical form of each stage's settings (no secrets), used for digests.
nlohmann::ordered_json to_json(const embed::ProviderConfig& cfg);
nlohmann::ordered_json to_json(const label::GenProviderConfig& cfg);
nlohmann::ordered_json to_json(const label::PromptTemplate& tmpl);

enum class Stage { ingest, embed, topics, label, eval };

const char* stage_name(Stage s);
inline constexpr Stage kStages[] = {Stage::ingest, Stage::embed, Stage::topics, Stage::label, Stage::eval};

// Artifact file names inside work_dir.
namespace artifact {
inline constexpr const char* kChunks = "chunks.jsonl";
inline constexpr const char* kTopicVectors = "topic_vectors.lensidx";
inline constexpr const char* kIndex = "index.lensidx";
inline constexpr const char* kClusters = "clusters.json";
inline constexpr const char* kTopics = "topics.json";
inline constexpr const char* kLabels = "labels.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kLock = "lens.lock";
}  // namespace artifact

struct StageRecord {
  std::string input_digest;
  std::map<std::string, std::string> artifacts;  // file name -> content digest
};

// Versioned record of completed stages. A stage counts as complete only when
// its artifacts exist with the recorded digests and its recorded input
// digest matches the current inputs.
struct Manifest {
  static constexpr int kVersion = 1;
  std::map<std::string, StageRecord> stages;

  nlohmann::ordered_json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

std::string digest_bytes(std::string_view bytes);
std::string digest_file(const std::filesystem::path& path);

// Exclusive claim on a work_dir, released on destruction.
class WorkDirLock {
 public:
  explicit WorkDirLock(const std::filesystem::path& work_dir);
  ~WorkDirLock();
  WorkDirLock(const WorkDirLock&) = delete;
  WorkDirLock& operator=(const WorkDirLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct StageSummary {
  Stage stage = Stage::ingest;
  bool skipped = false;  // inputs unchanged, nothing to do
  std::vector<std::pair<std::string, std::string>> fields;
  long long elapsed_ms = 0;

  // "stage=<name> status=ran|up-to-date k=v ... elapsed_ms=<n>"
  std::string line() const;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const noexcept { return cfg_; }

  StageSummary run(Stage stage, bool force = false);
  StageSummary run_ingest(bool force = false) { return run(Stage::ingest, force); }
  StageSummary run_embed(bool force = false) { return run(Stage::embed, force); }
  StageSummary run_topics(bool force = false) { return run(Stage::topics, force); }
  StageSummary run_label(bool force = false) { return run(Stage::label, force); }
  StageSummary run_eval(bool force = false) { return run(Stage::eval, force); }

  // Complete per the manifest rule above.
  bool is_complete(Stage stage) const;
  // Throws PrerequisiteError naming the first incomplete upstream stage.
  void require_complete_through(Stage stage) const;

  Manifest manifest() const;
  std::filesystem::path artifact_path(const char* name) const { return cfg_.work_dir / name; }

 private:
  std::string input_digest(Stage stage, const Manifest& m) const;
  std::string corpus_digest() const;
  void write_manifest(const Manifest& m) const;

  StageSummary do_ingest();
  StageSummary do_embed();
  StageSummary do_topics();
  StageSummary do_label();
  StageSummary do_eval();

  PipelineConfig cfg_;
};

// Read-only view over a finished project: the retrieval index plus whatever
// topic, label and report artifacts exist. Safe for concurrent queries.
class QueryService {
 public:
  explicit QueryService(const Pipeline& pipeline);
  QueryService(index::VectorIndex index, std::unique_ptr<embed::EmbeddingProvider> provider,
               std::optional<topics::TopicSet> topics, std::vector<label::TopicLabel> labels,
               std::optional<nlohmann::json> report, std::size_t max_k, std::size_t default_k = 5);

  // Throws UsageError for blank text or k == 0, EmptyIndexError for an empty
  // index. k above max_k is capped.
  index::RetrievalResult query(const std::string& text, std::size_t k) const;

  std::size_t index_size() const { return index_.size(); }
  std::size_t max_k() const noexcept { return max_k_; }
  std::size_t default_k() const noexcept { return default_k_; }

  // [{topic_id, label, frequency, keywords}] by frequency desc.
  nlohmann::ordered_json topics_json() const;
  const std::optional<nlohmann::json>& report() const noexcept { return report_; }

 private:
  index::VectorIndex index_;
  std::unique_ptr<embed::EmbeddingProvider> provider_;
  std::optional<topics::TopicSet> topics_;
  std::vector<label::TopicLabel> labels_;
  std::optional<nlohmann::json> report_;
  std::size_t max_k_;
  std::size_t default_k_;
};

nlohmann::ordered_json hits_json(const index::RetrievalResult& result);

// Tab-separated: rank, score (4 decimals), chunk_id, doc_id, text.
std::string format_hits(const index::RetrievalResult& result);

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

BindAddress parse_bind(const std::string& text);

// HTTP front end: GET /api/health, GET /api/topics, GET /api/report,
// POST /api/query, and static files from web_root at /.
class ApiServer {
 public:
  ApiServer(const QueryService& service, std::optional<std::filesystem::path> web_root);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds the socket; port 0 picks a free port. Returns the bound port.
  // Throws Error when the address is unavailable.
  int bind(const BindAddress& addr);
  // Serves until stop(); in-flight requests finish before it returns.
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lens::app
