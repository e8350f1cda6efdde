#include "lens/topics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lens/error.hpp"
#include "lens/tokenize.hpp"

namespace lens::topics {

CtfidfModel::CtfidfModel(std::vector<std::string> vocabulary,
                         std::vector<std::map<std::size_t, std::uint64_t>> class_counts)
    : vocabulary_(std::move(vocabulary)), class_counts_(std::move(class_counts)) {
  if (class_counts_.empty()) throw EmptyModelError();
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) index_.emplace(vocabulary_[i], i);
  presence_.assign(vocabulary_.size(), 0);
  totals_.assign(class_counts_.size(), 0);
  for (std::size_t c = 0; c < class_counts_.size(); ++c) {
    for (const auto& [term, count] : class_counts_[c]) {
      if (term >= vocabulary_.size()) throw ContractError("class count refers to an unknown term");
      if (count > 0) ++presence_[term];
      totals_[c] += count;
    }
  }
}

std::ptrdiff_t CtfidfModel::term_index(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::uint64_t CtfidfModel::term_count(std::string_view term, std::size_t c) const {
  const auto t = term_index(term);
  if (t < 0 || c >= class_counts_.size()) return 0;
  const auto it = class_counts_[c].find(static_cast<std::size_t>(t));
  return it == class_counts_[c].end() ? 0 : it->second;
}

std::size_t CtfidfModel::class_presence(std::string_view term) const {
  const auto t = term_index(term);
  return t < 0 ? 0 : presence_[static_cast<std::size_t>(t)];
}

std::uint64_t CtfidfModel::class_total(std::size_t c) const { return c < totals_.size() ? totals_[c] : 0; }

double CtfidfModel::score_at(std::size_t term_idx, std::size_t class_id) const {
  const auto& counts = class_counts_[class_id];
  const auto it = counts.find(term_idx);
  if (it == counts.end() || it->second == 0 || totals_[class_id] == 0) return 0.0;
  const double tf = static_cast<double>(it->second) / static_cast<double>(totals_[class_id]);
  const double idf = std::log(static_cast<double>(num_classes()) / static_cast<double>(presence_[term_idx]));
  return tf * idf;
}

double CtfidfModel::score(std::string_view term, std::size_t class_id) const {
  if (class_id >= num_classes()) {
    throw DomainError("class id " + std::to_string(class_id) + " out of range [0, " +
                      std::to_string(num_classes()) + ")");
  }
  const auto t = term_index(term);
  return t < 0 ? 0.0 : score_at(static_cast<std::size_t>(t), class_id);
}

std::vector<std::pair<std::string, double>> CtfidfModel::top_terms(std::size_t class_id, std::size_t limit) const {
  if (class_id >= num_classes()) throw DomainError("class id out of range");
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(class_counts_[class_id].size());
  for (const auto& [term, count] : class_counts_[class_id]) {
    if (count > 0) scored.emplace_back(vocabulary_[term], score_at(term, class_id));
  }
  const auto keep = std::min(limit, scored.size());
  auto by_score = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), by_score);
  scored.resize(keep);
  return scored;
}

CtfidfModel fit_ctfidf(const std::vector<ingest::Chunk>& chunks, const cluster::ClusterAssignment& assignment) {
  if (chunks.size() != assignment.labels.size()) throw ContractError("chunks and cluster labels are misaligned");
  if (assignment.num_clusters == 0) throw EmptyModelError();

  std::map<std::string, std::vector<std::uint64_t>> counts;  // term -> per-class counts
  bool any_member = false;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const int label = assignment.labels[i];
    if (label < 0) continue;
    if (static_cast<std::size_t>(label) >= assignment.num_clusters) throw ContractError("cluster label out of range");
    any_member = true;
    for (auto& tok : text::content_tokens(chunks[i].text)) {
      auto& row = counts[std::move(tok)];
      if (row.empty()) row.assign(assignment.num_clusters, 0);
      ++row[static_cast<std::size_t>(label)];
    }
  }
  if (!any_member) throw EmptyModelError();

  std::vector<std::string> vocabulary;
  vocabulary.reserve(counts.size());
  std::vector<std::map<std::size_t, std::uint64_t>> class_counts(assignment.num_clusters);
  for (auto& [term, row] : counts) {
    const auto idx = vocabulary.size();
    vocabulary.push_back(term);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] > 0) class_counts[c].emplace(idx, row[c]);
    }
  }
  return CtfidfModel(std::move(vocabulary), std::move(class_counts));
}

void order_topics(std::vector<Topic>& topics) {
  std::sort(topics.begin(), topics.end(), [](const Topic& a, const Topic& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.topic_id < b.topic_id;
  });
}

TopicSet build_topics(const std::vector<ingest::Chunk>& chunks, const cluster::ClusterAssignment& assignment,
                      const std::vector<embed::EmbeddingVector>& vectors, const TopicOptions& opts) {
  if (vectors.size() != chunks.size()) throw ContractError("chunks and vectors are misaligned");
  const auto model = fit_ctfidf(chunks, assignment);
  const auto k = assignment.num_clusters;

  std::vector<std::vector<std::size_t>> members(k);
  TopicSet set;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const int label = assignment.labels[i];
    if (label < 0) {
      ++set.noise_count;
    } else {
      members[static_cast<std::size_t>(label)].push_back(i);
    }
  }

  for (std::size_t c = 0; c < k; ++c) {
    Topic topic;
    topic.topic_id = static_cast<int>(c);
    topic.frequency = members[c].size();
    for (auto& [term, score] : model.top_terms(c, opts.top_n)) topic.keywords.push_back({std::move(term), score});

    const auto dim = vectors[members[c].front()].dim();
    std::vector<double> centroid(dim, 0.0);
    for (auto i : members[c]) {
      if (vectors[i].dim() != dim) throw ContractError("embeddings have mixed dimensions");
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += vectors[i][j];
    }
    double norm = 0.0;
    for (double v : centroid) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : centroid) v /= norm;
    }

    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(members[c].size());
    for (auto i : members[c]) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += centroid[j] * static_cast<double>(vectors[i][j]);
      ranked.emplace_back(s, i);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return chunks[a.second].chunk_id < chunks[b.second].chunk_id;
    });
    for (const auto& [score, i] : ranked) topic.member_chunk_ids.push_back(chunks[i].chunk_id);
    const auto n_repr = std::min(opts.n_repr, topic.member_chunk_ids.size());
    topic.representative_chunk_ids.assign(topic.member_chunk_ids.begin(),
                                          topic.member_chunk_ids.begin() + static_cast<std::ptrdiff_t>(n_repr));
    set.topics.push_back(std::move(topic));
  }
  order_topics(set.topics);
  return set;
}

TopicSet build_topics(const std::vector<ingest::Chunk>& chunks, const cluster::ClusterAssignment& assignment,
                      const std::vector<embed::EmbeddedChunk>& embedded, const TopicOptions& opts) {
  if (embedded.size() != chunks.size()) throw ContractError("chunks and embeddings are misaligned");
  std::vector<embed::EmbeddingVector> vectors;
  vectors.reserve(embedded.size());
  for (std::size_t i = 0; i < embedded.size(); ++i) {
    if (embedded[i].chunk.chunk_id != chunks[i].chunk_id) throw ContractError("embedding order differs from chunk order");
    vectors.push_back(embedded[i].vector);
  }
  return build_topics(chunks, assignment, vectors, opts);
}

nlohmann::ordered_json to_json(const TopicSet& set) {
  nlohmann::ordered_json j;
  j["noise_count"] = set.noise_count;
  auto topics = nlohmann::ordered_json::array();
  for (const auto& t : set.topics) {
    nlohmann::ordered_json tj;
    tj["topic_id"] = t.topic_id;
    tj["frequency"] = t.frequency;
    auto kw = nlohmann::ordered_json::array();
    for (const auto& k : t.keywords) kw.push_back(nlohmann::ordered_json::array({k.term, k.score}));
    tj["keywords"] = std::move(kw);
    tj["representative_chunk_ids"] = t.representative_chunk_ids;
    tj["member_chunk_ids"] = t.member_chunk_ids;
    topics.push_back(std::move(tj));
  }
  j["topics"] = std::move(topics);
  return j;
}

TopicSet topic_set_from_json(const nlohmann::json& j) {
  try {
    TopicSet set;
    set.noise_count = j.at("noise_count").get<std::size_t>();
    for (const auto& tj : j.at("topics")) {
      Topic t;
      t.topic_id = tj.at("topic_id").get<int>();
      t.frequency = tj.at("frequency").get<std::size_t>();
      for (const auto& kw : tj.at("keywords")) t.keywords.push_back({kw.at(0).get<std::string>(), kw.at(1).get<double>()});
      t.representative_chunk_ids = tj.at("representative_chunk_ids").get<std::vector<std::string>>();
      t.member_chunk_ids = tj.at("member_chunk_ids").get<std::vector<std::string>>();
      set.topics.push_back(std::move(t));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("topics", e.what());
  }
}

}  // namespace lens::topics
