#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <unordered_set>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include "lens/app.hpp"
#include "lens/error.hpp"
#include "lens/util.hpp"

namespace lens::app {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::embed: return "embed";
    case Stage::topics: return "topics";
    case Stage::label: return "label";
    case Stage::eval: return "eval";
  }
  return "?";
}

namespace {

std::size_t stage_pos(Stage s) { return static_cast<std::size_t>(s); }

// Artifacts each stage writes.
std::vector<const char*> outputs_of(Stage s) {
  switch (s) {
    case Stage::ingest: return {artifact::kChunks};
    case Stage::embed: return {artifact::kTopicVectors, artifact::kIndex};
    case Stage::topics: return {artifact::kClusters, artifact::kTopics};
    case Stage::label: return {artifact::kLabels};
    case Stage::eval: return {artifact::kReport, artifact::kReportText};
  }
  return {};
}

// Upstream artifacts whose digests feed a stage's input digest.
std::vector<std::pair<Stage, const char*>> inputs_of(Stage s) {
  switch (s) {
    case Stage::ingest: return {};
    case Stage::embed: return {{Stage::ingest, artifact::kChunks}};
    case Stage::topics: return {{Stage::ingest, artifact::kChunks}, {Stage::embed, artifact::kTopicVectors}};
    case Stage::label: return {{Stage::ingest, artifact::kChunks}, {Stage::topics, artifact::kTopics}};
    case Stage::eval:
      return {{Stage::ingest, artifact::kChunks}, {Stage::topics, artifact::kTopics}, {Stage::label, artifact::kLabels}};
  }
  return {};
}

std::string pretty(const ojson& j) { return j.dump(2) + "\n"; }

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

label::ChunkLookup lookup_of(const std::vector<ingest::Chunk>& chunks) {
  label::ChunkLookup out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.emplace(c.chunk_id, c.text);
  return out;
}

nlohmann::json parse_json_file(const fs::path& path) {
  auto j = nlohmann::json::parse(util::read_file(path), nullptr, false);
  if (j.is_discarded()) throw FormatError(path.filename().string(), "not valid JSON");
  return j;
}

bool process_alive(long pid) { return pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM); }

}  // namespace

// ---------------------------------------------------------------- manifest

ojson Manifest::to_json() const {
  ojson stages_j = ojson::object();
  for (Stage s : kStages) {
    const auto it = stages.find(stage_name(s));
    if (it == stages.end()) continue;
    ojson arts = ojson::object();
    for (const auto& [name, digest] : it->second.artifacts) arts[name] = digest;
    stages_j[it->first] = ojson{{"input_digest", it->second.input_digest}, {"artifacts", arts}};
  }
  return ojson{{"version", kVersion}, {"stages", stages_j}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer()) {
    throw FormatError("manifest", "missing version");
  }
  if (j["version"].get<int>() != kVersion) {
    throw VersionError("manifest version " + std::to_string(j["version"].get<int>()) + " is not supported");
  }
  Manifest m;
  if (!j.contains("stages") || !j["stages"].is_object()) throw FormatError("manifest", "missing stages");
  for (const auto& [name, rec] : j["stages"].items()) {
    if (!rec.is_object() || !rec.contains("input_digest") || !rec["input_digest"].is_string() ||
        !rec.contains("artifacts") || !rec["artifacts"].is_object()) {
      throw FormatError("manifest", "bad record for stage " + name);
    }
    StageRecord r;
    r.input_digest = rec["input_digest"].get<std::string>();
    for (const auto& [art, digest] : rec["artifacts"].items()) {
      if (!digest.is_string()) throw FormatError("manifest", "bad digest for " + art);
      r.artifacts[art] = digest.get<std::string>();
    }
    m.stages[name] = std::move(r);
  }
  return m;
}

std::string digest_bytes(std::string_view bytes) { return util::hex64(util::fnv1a64(bytes)); }

std::string digest_file(const fs::path& path) { return digest_bytes(util::read_file(path)); }

// -------------------------------------------------------------------- lock

WorkDirLock::WorkDirLock(const fs::path& work_dir) : path_(work_dir / artifact::kLock) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid()) + "\n";
      const auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (written != static_cast<ssize_t>(pid.size())) {
        fs::remove(path_);
        throw IoError("cannot write lock file " + path_.string());
      }
      return;
    }
    if (errno != EEXIST) throw IoError("cannot create lock file " + path_.string());
    long holder = 0;
    try {
      holder = std::stol(util::read_file(path_));
    } catch (const std::exception&) {
      holder = 0;
    }
    if (process_alive(holder)) {
      throw Error("work_dir " + path_.parent_path().string() + " is in use by process " + std::to_string(holder));
    }
    // Left behind by a process that no longer exists.
    std::error_code ec;
    fs::remove(path_, ec);
  }
  throw Error("could not acquire lock " + path_.string());
}

WorkDirLock::~WorkDirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string StageSummary::line() const {
  std::string out = "stage=";
  out += stage_name(stage);
  out += skipped ? " status=up-to-date" : " status=ran";
  for (const auto& [k, v] : fields) out += " " + k + "=" + v;
  out += " elapsed_ms=" + std::to_string(elapsed_ms);
  return out;
}

// ---------------------------------------------------------------- pipeline

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Manifest Pipeline::manifest() const {
  const auto path = artifact_path(artifact::kManifest);
  if (!fs::exists(path)) return {};
  return Manifest::from_json(parse_json_file(path));
}

void Pipeline::write_manifest(const Manifest& m) const {
  util::atomic_write(artifact_path(artifact::kManifest), pretty(m.to_json()));
}

std::string Pipeline::corpus_digest() const {
  if (!fs::is_directory(cfg_.corpus_dir)) throw IoError("corpus_dir " + cfg_.corpus_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cfg_.corpus_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += f.filename().string();
    acc += '\0';
    acc += digest_file(f);
    acc += '\n';
  }
  return digest_bytes(acc);
}

std::string Pipeline::input_digest(Stage stage, const Manifest& m) const {
  ojson j;
  j["stage"] = stage_name(stage);
  for (const auto& [up, name] : inputs_of(stage)) {
    const auto it = m.stages.find(stage_name(up));
    if (it == m.stages.end() || !it->second.artifacts.contains(name)) return {};
    j["inputs"][name] = it->second.artifacts.at(name);
  }
  switch (stage) {
    case Stage::ingest:
      j["corpus"] = corpus_digest();
      j["word_limit"] = cfg_.chunking.word_limit;
      break;
    case Stage::embed:
      j["embed_stage"] = to_json(cfg_.embed_stage);
      j["retrieval_stage"] = to_json(cfg_.retrieval_stage);
      break;
    case Stage::topics:
      j["reducer"] = {{"method", cfg_.reducer.method == cluster::ReducerMethod::pca ? "pca" : "none"},
                      {"target_dim", cfg_.reducer.target_dim},
                      {"random_seed", cfg_.reducer.random_seed}};
      j["hdbscan"] = {{"min_cluster_size", cfg_.hdbscan.min_cluster_size},
                      {"min_samples", cfg_.hdbscan.effective_min_samples()}};
      j["top_n"] = cfg_.top_n;
      j["n_repr"] = cfg_.n_repr;
      break;
    case Stage::label:
      j["labeler"] = to_json(cfg_.labeler);
      j["template"] = to_json(cfg_.prompt);
      break;
    case Stage::eval:
      j["embed_stage"] = to_json(cfg_.embed_stage);
      j["coverage_m"] = cfg_.coverage_m;
      j["bert_scores"] = cfg_.bert_scores ? digest_file(*cfg_.bert_scores) : "";
      j["human_scores"] = cfg_.human_scores ? digest_file(*cfg_.human_scores) : "";
      break;
  }
  return digest_bytes(j.dump());
}

bool Pipeline::is_complete(Stage stage) const {
  const auto m = manifest();
  for (Stage s : kStages) {
    if (stage_pos(s) > stage_pos(stage)) break;
    const auto it = m.stages.find(stage_name(s));
    if (it == m.stages.end()) return false;
    for (const auto& [name, digest] : it->second.artifacts) {
      const auto path = artifact_path(name.c_str());
      if (!fs::exists(path) || digest_file(path) != digest) return false;
    }
    if (input_digest(s, m) != it->second.input_digest) return false;
  }
  return true;
}

void Pipeline::require_complete_through(Stage stage) const {
  for (Stage s : kStages) {
    if (stage_pos(s) > stage_pos(stage)) break;
    if (!is_complete(s)) {
      throw PrerequisiteError(std::string("stage '") + stage_name(s) +
                              "' has not run or is out of date; run `lens " + stage_name(s) +
                              " --config <path>` first");
    }
  }
}

StageSummary Pipeline::run(Stage stage, bool force) {
  fs::create_directories(cfg_.work_dir);
  WorkDirLock lock(cfg_.work_dir);
  if (stage != Stage::ingest) require_complete_through(static_cast<Stage>(stage_pos(stage) - 1));

  const auto start = std::chrono::steady_clock::now();
  if (!force && is_complete(stage)) {
    StageSummary s;
    s.stage = stage;
    s.skipped = true;
    s.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    return s;
  }

  // Drop this stage and everything downstream before touching artifacts, so an
  // interrupted run never leaves a record pointing at half-written output.
  auto m = manifest();
  for (Stage s : kStages) {
    if (stage_pos(s) >= stage_pos(stage)) m.stages.erase(stage_name(s));
  }
  write_manifest(m);
  const auto digest = input_digest(stage, m);

  StageSummary summary;
  switch (stage) {
    case Stage::ingest: summary = do_ingest(); break;
    case Stage::embed: summary = do_embed(); break;
    case Stage::topics: summary = do_topics(); break;
    case Stage::label: summary = do_label(); break;
    case Stage::eval: summary = do_eval(); break;
  }

  StageRecord rec;
  rec.input_digest = digest;
  for (const char* name : outputs_of(stage)) rec.artifacts[name] = digest_file(artifact_path(name));
  m.stages[stage_name(stage)] = std::move(rec);
  write_manifest(m);

  summary.stage = stage;
  summary.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

StageSummary Pipeline::do_ingest() {
  const auto load = ingest::load_corpus(cfg_.corpus_dir);
  const auto chunks = ingest::chunk_corpus(load.documents, cfg_.chunking);
  util::atomic_write(artifact_path(artifact::kChunks), ingest::chunks_to_jsonl(chunks));
  StageSummary s;
  s.fields = {{"documents", std::to_string(load.documents.size())},
              {"chunks", std::to_string(chunks.size())},
              {"skipped_missing_text", std::to_string(load.skipped.missing_text)},
              {"skipped_empty_text", std::to_string(load.skipped.empty_text)},
              {"skipped_malformed", std::to_string(load.skipped.malformed)}};
  return s;
}

StageSummary Pipeline::do_embed() {
  const auto chunks = ingest::chunks_from_jsonl(util::read_file(artifact_path(artifact::kChunks)));
  if (chunks.empty()) throw ContractError("no chunks to embed; check the corpus");

  const auto topic_provider = embed::make_provider(cfg_.embed_stage);
  const auto topic_vectors = embed::embed_chunks(*topic_provider, chunks);
  index::VectorIndex topic_index(topic_provider->dim());
  topic_index.upsert(topic_vectors);
  topic_index.save(artifact_path(artifact::kTopicVectors));

  // One pass is enough when both stages share the same settings.
  if (to_json(cfg_.retrieval_stage) == to_json(cfg_.embed_stage)) {
    topic_index.save(artifact_path(artifact::kIndex));
  } else {
    const auto retrieval_provider = embed::make_provider(cfg_.retrieval_stage);
    index::VectorIndex retrieval_index(retrieval_provider->dim());
    retrieval_index.upsert(embed::embed_chunks(*retrieval_provider, chunks));
    retrieval_index.save(artifact_path(artifact::kIndex));
  }
  StageSummary s;
  s.fields = {{"chunks", std::to_string(chunks.size())},
              {"embed_provider", topic_provider->name()},
              {"embed_dim", std::to_string(cfg_.embed_stage.dim)},
              {"retrieval_dim", std::to_string(cfg_.retrieval_stage.dim)}};
  return s;
}

StageSummary Pipeline::do_topics() {
  const auto chunks = ingest::chunks_from_jsonl(util::read_file(artifact_path(artifact::kChunks)));
  const auto stored = index::VectorIndex::load(artifact_path(artifact::kTopicVectors));
  if (stored.size() != chunks.size()) throw ContractError("topic vectors do not match the chunk dump; rerun embed");
  std::vector<embed::EmbeddingVector> vectors;
  vectors.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (stored.entry(i).chunk_id != chunks[i].chunk_id) {
      throw ContractError("topic vectors are out of order with the chunk dump; rerun embed");
    }
    vectors.push_back(stored.vector(i));
  }

  const auto reduced = cluster::reduce(cluster::PointSet::from_embeddings(vectors), cfg_.reducer);
  const auto result = cluster::hdbscan_detailed(reduced, cfg_.hdbscan);
  const auto set = topics::build_topics(chunks, result.assignment, vectors, {cfg_.top_n, cfg_.n_repr});

  ojson clusters;
  clusters["num_clusters"] = result.assignment.num_clusters;
  auto assignments = ojson::array();
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    assignments.push_back(ojson{{"chunk_id", chunks[i].chunk_id},
                                {"cluster", result.assignment.labels[i]},
                                {"probability", result.assignment.probabilities[i]}});
  }
  clusters["assignments"] = std::move(assignments);
  clusters["condensed_tree"] = result.condensed_tree_json();
  util::atomic_write(artifact_path(artifact::kClusters), pretty(clusters));
  util::atomic_write(artifact_path(artifact::kTopics), pretty(topics::to_json(set)));

  StageSummary s;
  s.fields = {{"chunks", std::to_string(chunks.size())},
              {"reduced_dim", std::to_string(reduced.cols)},
              {"topics", std::to_string(set.topics.size())},
              {"noise", std::to_string(set.noise_count)}};
  return s;
}

StageSummary Pipeline::do_label() {
  const auto chunks = ingest::chunks_from_jsonl(util::read_file(artifact_path(artifact::kChunks)));
  const auto set = topics::topic_set_from_json(parse_json_file(artifact_path(artifact::kTopics)));
  const auto generator = label::make_generator(cfg_.labeler, cfg_.prompt);
  const auto labels =
      label::label_topic_set(set, lookup_of(chunks), *generator, cfg_.prompt, cfg_.labeler.max_concurrency);
  util::atomic_write(artifact_path(artifact::kLabels), pretty(label::to_json(labels)));
  const auto flagged = std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.flagged; });
  StageSummary s;
  s.fields = {{"topics", std::to_string(labels.size())},
              {"flagged", std::to_string(flagged)},
              {"provider", generator->name()}};
  return s;
}

StageSummary Pipeline::do_eval() {
  const auto chunks = ingest::chunks_from_jsonl(util::read_file(artifact_path(artifact::kChunks)));
  const auto set = topics::topic_set_from_json(parse_json_file(artifact_path(artifact::kTopics)));
  const auto labels = label::labels_from_json(parse_json_file(artifact_path(artifact::kLabels)));
  const auto lookup = lookup_of(chunks);
  const auto provider = embed::make_provider(cfg_.embed_stage);

  eval::ReportInputs in;
  in.topics = &set;
  in.labels = &labels;
  in.chunks = &lookup;
  in.provider = provider.get();
  in.coverage_m = cfg_.coverage_m;
  if (cfg_.bert_scores) in.bert_scores = eval::bert_scores_from_json(parse_json_file(*cfg_.bert_scores));
  if (cfg_.human_scores) in.human_ratings = eval::human_ratings_from_json(parse_json_file(*cfg_.human_scores));
  const auto report = eval::build_report(in);

  util::atomic_write(artifact_path(artifact::kReport), pretty(eval::to_json(report)));
  util::atomic_write(artifact_path(artifact::kReportText), eval::to_text_table(report));

  StageSummary s;
  s.fields = {{"topics", std::to_string(report.per_topic.size())},
              {"hallucinations", std::to_string(report.hallucination_count)},
              {"metric_failures", std::to_string(report.metric_failures)}};
  if (report.mean_alignment) s.fields.emplace_back("mean_alignment", fixed(*report.mean_alignment, 4));
  if (report.mean_factuality) s.fields.emplace_back("mean_factuality", fixed(*report.mean_factuality, 4));
  if (report.mean_coverage) s.fields.emplace_back("mean_coverage", fixed(*report.mean_coverage, 4));
  return s;
}

}  // namespace lens::app
