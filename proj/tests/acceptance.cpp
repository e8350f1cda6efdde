// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Every oracle here is written independently of the
// library code it checks.

#include <dlfcn.h>
#include <sys/socket.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lens/app.hpp"
#include "lens/cluster.hpp"
#include "lens/error.hpp"
#include "lens/evalkit.hpp"
#include "lens/index.hpp"
#include "lens/ingest.hpp"
#include "lens/tokenize.hpp"
#include "lens/topics.hpp"
#include "lens/util.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace lens;

// Every outbound connect() made by this process lands here first.
static std::atomic<int> g_connects{0};

extern "C" int connect(int fd, const struct sockaddr* addr, socklen_t len) {
  ++g_connects;
  using Fn = int (*)(int, const struct sockaddr*, socklen_t);
  static const auto real = reinterpret_cast<Fn>(::dlsym(RTLD_NEXT, "connect"));
  return real(fd, addr, len);
}

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int g_failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (out.ok && secs >= limit_s) {
    out.ok = false;
    out.detail = "over time limit";
  }
  if (!out.ok) ++g_failures;
  std::printf("%s  %-28s %8.3fs (limit %gs)%s%s\n", out.ok ? "PASS" : "FAIL", name.c_str(), secs, limit_s,
              out.detail.empty() ? "" : "  ", out.detail.c_str());
  std::fflush(stdout);
}

ingest::Chunk chunk(const std::string& doc, const std::string& text) {
  ingest::Chunk c;
  c.doc_id = doc;
  c.chunk_index = 1;
  c.chunk_id = doc + "_chunk1";
  c.text = text;
  return c;
}

cluster::ClusterAssignment assignment(const std::vector<int>& labels) {
  cluster::ClusterAssignment a;
  a.labels = labels;
  a.probabilities.assign(labels.size(), 1.0);
  a.num_clusters = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);
  return a;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string strip_lower(std::string w) {
  std::size_t b = 0, e = w.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
  w = w.substr(b, e - b);
  for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return w;
}

Outcome ctfidf() {
  Outcome o;
  const std::vector<ingest::Chunk> two{chunk("a", "wheat wheat corn"), chunk("b", "corn corn rice")};
  const auto model = topics::fit_ctfidf(two, assignment({0, 1}));
  o.require(std::abs(model.score("wheat", 0) - (2.0 / 3.0) * std::log(2.0)) < 1e-12, "wheat score");

  // Random fixtures against a direct evaluation of tf(t,c)/|c| * ln(K / classes containing t).
  std::mt19937 rng(7);
  const std::vector<std::string> vocab = {"wheat", "corn",  "rice", "tractor", "engine", "rain",
                                          "price", "yield", "soil", "drought", "barley", "market"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 10);
  std::uniform_int_distribution<int> lab(-1, 3);
  for (int trial = 0; trial < 20 && o.ok; ++trial) {
    std::vector<ingest::Chunk> chunks;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
      std::string text;
      for (std::size_t j = 0, n = len(rng); j < n; ++j) text += vocab[pick(rng)] + " ";
      chunks.push_back(chunk("d" + std::to_string(i), text));
      labels.push_back(i < 4 ? i : lab(rng));
    }
    const auto m = topics::fit_ctfidf(chunks, assignment(labels));
    std::vector<std::map<std::string, double>> tf(4);
    std::vector<double> size(4, 0.0);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (labels[i] < 0) continue;
      for (const auto& w : split_ws(chunks[i].text)) {
        tf[labels[i]][w] += 1;
        size[labels[i]] += 1;
      }
    }
    for (const auto& t : vocab) {
      double present = 0;
      for (const auto& c : tf) present += c.contains(t);
      for (std::size_t c = 0; c < 4; ++c) {
        const double expect = tf[c].contains(t) ? tf[c].at(t) / size[c] * std::log(4.0 / present) : 0.0;
        o.require(std::abs(m.score(t, c) - expect) < 1e-12, "brute-force mismatch for '" + t + "'");
      }
    }
  }
  return o;
}

double factuality_oracle(const std::string& label, const std::vector<std::string>& docs) {
  std::set<std::string> words, label_set;
  for (const auto& d : docs)
    for (const auto& w : split_ws(d)) words.insert(strip_lower(w));
  for (const auto& w : split_ws(label)) {
    const auto t = strip_lower(w);
    if (t.size() >= 2 && !text::is_stop_word(t)) label_set.insert(t);
  }
  if (label_set.empty()) return 0.0;
  double hit = 0;
  for (const auto& w : label_set) hit += words.contains(w);
  return hit / static_cast<double>(label_set.size());
}

Outcome factuality() {
  Outcome o;
  o.require(eval::factuality_score("Wheat Harvest", {"wheat fields", "more wheat"}).value == 0.5, "Wheat Harvest");
  std::mt19937 rng(99);
  const std::vector<std::string> vocab = {"Wheat", "harvest", "price", "the", "and", "rain,", "soil.", "drought",
                                          "maize", "Market", "of", "yield", "seed", "farm", "tractor"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 6), ndocs(1, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::string label;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) label += vocab[pick(rng)] + " ";
    std::vector<std::string> docs;
    for (std::size_t d = 0, n = ndocs(rng); d < n; ++d) {
      std::string doc;
      for (std::size_t i = 0, m = len(rng) * 3; i < m; ++i) doc += vocab[pick(rng)] + " ";
      docs.push_back(doc);
    }
    o.require(eval::factuality_score(label, docs).value == factuality_oracle(label, docs), "fixture " + label);
  }
  return o;
}

Outcome hallucination() {
  Outcome o;
  o.require(eval::is_hallucination(0.8, 0.2), "(0.8, 0.2) not flagged");
  for (const auto& [a, f] : std::vector<std::pair<double, double>>{{0.8, 0.5}, {0.6, 0.2}, {0.7, 0.2}, {0.8, 0.3}}) {
    o.require(!eval::is_hallucination(a, f), "(" + std::to_string(a) + ", " + std::to_string(f) + ") flagged");
  }
  return o;
}

embed::EmbeddingVector random_unit(std::mt19937& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> raw(dim);
  for (auto& x : raw) x = g(rng);
  return embed::EmbeddingVector(raw);
}

std::vector<embed::EmbeddedChunk> random_entries(std::mt19937& rng, std::size_t n, std::size_t dim) {
  std::vector<embed::EmbeddedChunk> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].chunk = chunk("doc" + std::to_string(i), "text " + std::to_string(i));
    out[i].vector = random_unit(rng, dim);
  }
  return out;
}

Outcome retrieval() {
  Outcome o;
  std::mt19937 rng(2025);
  const auto entries = random_entries(rng, 1000, 384);
  index::VectorIndex idx(384);
  idx.upsert(entries);
  for (int q = 0; q < 50; ++q) {
    const auto query = random_unit(rng, 384);
    std::vector<std::pair<double, std::string>> all;
    for (const auto& e : entries) {
      double s = 0;
      for (std::size_t d = 0; d < 384; ++d) s += double(query[d]) * double(e.vector[d]);
      all.emplace_back(s, e.chunk.chunk_id);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t k : {1u, 5u, 100u}) {
      const auto hits = idx.search(query, k).hits;
      o.require(hits.size() == k, "wrong hit count");
      for (std::size_t i = 0; i < hits.size() && o.ok; ++i) {
        o.require(hits[i].chunk_id == all[i].second && hits[i].score == all[i].first,
                  "query " + std::to_string(q) + " k=" + std::to_string(k) + " rank " + std::to_string(i));
      }
    }
  }
  return o;
}

double dist(const cluster::PointSet& p, std::size_t i, std::size_t j) {
  double s = 0;
  for (std::size_t c = 0; c < p.cols; ++c) s += (p.at(i, c) - p.at(j, c)) * (p.at(i, c) - p.at(j, c));
  return std::sqrt(s);
}

// Core distances by sorting full rows (the point itself counts), then the
// MST weight of the mutual reachability graph by Kruskal over all pairs.
void check_graph(Outcome& o, const cluster::PointSet& p, std::size_t k) {
  std::vector<double> core(p.rows);
  for (std::size_t i = 0; i < p.rows; ++i) {
    std::vector<double> row(p.rows);
    for (std::size_t j = 0; j < p.rows; ++j) row[j] = dist(p, i, j);
    std::sort(row.begin(), row.end());
    core[i] = row[k - 1];
  }
  const auto got = cluster::core_distances(p, k);
  for (std::size_t i = 0; i < p.rows; ++i) o.require(std::abs(got[i] - core[i]) < 1e-9, "core distance");

  struct E {
    double w;
    std::size_t a, b;
  };
  std::vector<E> edges;
  for (std::size_t i = 0; i < p.rows; ++i)
    for (std::size_t j = i + 1; j < p.rows; ++j) edges.push_back({std::max({dist(p, i, j), core[i], core[j]}), i, j});
  std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) { return x.w < y.w; });
  std::vector<std::size_t> parent(p.rows);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  double expect = 0;
  for (const auto& e : edges) {
    const auto ra = find(e.a), rb = find(e.b);
    if (ra != rb) {
      parent[ra] = rb;
      expect += e.w;
    }
  }
  double total = 0;
  for (const auto& e : cluster::mutual_reachability_mst(p, got)) total += e.weight;
  o.require(std::abs(total - expect) < 1e-9, "MST weight");
}

Outcome hdbscan_fixture() {
  Outcome o;
  std::ifstream in(testing::fixture_dir() / "two_blobs.json");
  const auto j = nlohmann::json::parse(in);
  const auto& pts = j["points"];
  cluster::PointSet p(pts.size(), pts[0].size());
  for (std::size_t i = 0; i < p.rows; ++i)
    for (std::size_t d = 0; d < p.cols; ++d) p.at(i, d) = pts[i][d].get<double>();
  cluster::HdbscanConfig cfg;
  cfg.min_cluster_size = j["min_cluster_size"].get<std::size_t>();
  if (!j["min_samples"].is_null()) cfg.min_samples = j["min_samples"].get<std::size_t>();
  const auto reference = j["labels"].get<std::vector<int>>();

  const auto result = cluster::hdbscan(p, cfg);
  o.require(result.num_clusters == 2, "K=" + std::to_string(result.num_clusters));
  o.require(result.labels.back() == -1, "outlier not labeled -1");
  o.require(result.labels == reference, "labels differ from the reference");
  check_graph(o, p, cfg.effective_min_samples());

  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  cluster::PointSet big(500, 5);
  for (auto& v : big.data) v = g(rng);
  check_graph(o, big, 10);
  return o;
}

Outcome chunker() {
  Outcome o;
  std::mt19937 rng(11);
  const std::vector<std::string> vocab = {"wheat", "Prices", "rose", "u.s.", "e.g.", "2.5", "dr.", "smith",
                                          "(rain)", "\"good\"", "40%", "corn;", "drought", "x", "mr."};
  const std::vector<std::string> ends = {".", "!", "?", "...", ""};
  std::uniform_int_distribution<int> pick(0, 1000), n_sent(1, 15), n_word(1, 40);
  for (int d = 0; d < 100; ++d) {
    std::string raw;
    for (int s = 0, ns = n_sent(rng); s < ns; ++s) {
      for (int w = 0, nw = n_word(rng); w < nw; ++w) raw += vocab[pick(rng) % vocab.size()] + " ";
      raw += ends[pick(rng) % ends.size()] + "  ";
    }
    ingest::Document doc{"doc" + std::to_string(d), raw, ingest::clean_text(raw)};
    std::string joined;
    for (const auto& s : ingest::split_sentences(doc.clean_text)) joined += (joined.empty() ? "" : " ") + s;
    o.require(joined == doc.clean_text, "sentences of " + doc.doc_id);
    const auto chunks = ingest::chunk_document(doc, {20});
    joined.clear();
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      joined += (joined.empty() ? "" : " ") + chunks[i].text;
      o.require(chunks[i].chunk_id == doc.doc_id + "_chunk" + std::to_string(i + 1), "chunk id");
    }
    o.require(joined == doc.clean_text, "chunks of " + doc.doc_id);
  }
  return o;
}

bool uses_network(const app::PipelineConfig& cfg) {
  return cfg.embed_stage.kind != embed::ProviderKind::local_deterministic ||
         cfg.retrieval_stage.kind != embed::ProviderKind::local_deterministic ||
         cfg.labeler.kind != label::GenProviderKind::stub;
}

Outcome end_to_end(bool& offline_config) {
  Outcome o;
  const auto fixture = testing::fixture_dir() / "fixture_config.json";
  testing::TempDir a, b;
  std::vector<app::PipelineConfig> cfgs;
  for (const auto* dir : {&a, &b}) {
    auto cfg = app::load_config(fixture);
    cfg.work_dir = dir->path() / "work";
    cfgs.push_back(cfg);
  }
  offline_config = !uses_network(cfgs[0]);
  for (const auto& cfg : cfgs) {
    app::Pipeline p(cfg);
    for (auto s : app::kStages) p.run(s);
  }
  for (const char* name : {app::artifact::kTopics, app::artifact::kLabels, app::artifact::kIndex,
                           app::artifact::kReport}) {
    o.require(util::read_file(cfgs[0].work_dir / name) == util::read_file(cfgs[1].work_dir / name),
              std::string(name) + " differs");
  }
  const auto set = topics::topic_set_from_json(
      nlohmann::json::parse(util::read_file(cfgs[0].work_dir / app::artifact::kTopics)));
  o.require(set.topics.size() >= 2, "K=" + std::to_string(set.topics.size()));
  const auto chunks = ingest::chunks_from_jsonl(util::read_file(cfgs[0].work_dir / app::artifact::kChunks));
  o.require(chunks.size() == 60, "fixture has " + std::to_string(chunks.size()) + " chunks");
  if (o.ok) o.detail = "K=" + std::to_string(set.topics.size());
  return o;
}

Outcome index_roundtrip() {
  Outcome o;
  std::mt19937 rng(77);
  index::VectorIndex idx(384);
  idx.upsert(random_entries(rng, 1000, 384));
  testing::TempDir dir;
  const auto path = dir / "round.lensidx";
  idx.save(path);
  const auto back = index::VectorIndex::load(path);
  o.require(back.size() == 1000, "size");
  for (int q = 0; q < 20; ++q) {
    const auto query = random_unit(rng, 384);
    o.require(back.search(query, 50).hits == idx.search(query, 50).hits, "search results differ");
  }
  const auto bytes = util::read_file(path);
  util::atomic_write(dir / "cut.lensidx", bytes.substr(0, bytes.size() / 2));
  bool format_error = false;
  try {
    index::VectorIndex::load(dir / "cut.lensidx");
  } catch (const FormatError&) {
    format_error = true;
  }
  o.require(format_error, "truncated file loaded without a format error");
  return o;
}

}  // namespace

int main() {
  // Remote providers would read these; make sure none are configured.
  for (const char* var : {"EMBED_API_KEY", "EMBED_ENDPOINT", "GEN_API_KEY", "GEN_ENDPOINT"}) ::unsetenv(var);

  bool offline_config = false;
  criterion("ctfidf-oracle", 1, ctfidf);
  criterion("factuality-exact", 1, factuality);
  criterion("hallucination-rule", 1, hallucination);
  criterion("retrieval-exact", 5, retrieval);
  criterion("hdbscan-fixture", 10, hdbscan_fixture);
  criterion("chunker-conservation", 1, chunker);
  criterion("end-to-end-determinism", 30, [&] { return end_to_end(offline_config); });
  criterion("index-roundtrip", 2, index_roundtrip);
  criterion("offline", 1, [&] {
    Outcome o;
    o.require(offline_config, "fixture config names a remote provider");
    o.require(g_connects == 0, std::to_string(g_connects.load()) + " outbound connect() calls");
    return o;
  });
  return g_failures == 0 ? 0 : 1;
}
