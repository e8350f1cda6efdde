#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lens/cluster.hpp"
#include "lens/embed.hpp"
#include "lens/ingest.hpp"

namespace lens::topics {

// Class-based TF-IDF over the concatenated chunks of each cluster:
//   score(t, c) = f[t,c] / sum_t' f[t',c] * ln(N / n[t])
// where N is the number of classes and n[t] the number of classes that
// contain t. No smoothing.
class CtfidfModel {
 public:
  CtfidfModel(std::vector<std::string> vocabulary,
              std::vector<std::map<std::size_t, std::uint64_t>> class_counts);

  std::size_t num_classes() const noexcept { return class_counts_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

  // Frequency of `term` in class `c`; 0 for unknown terms.
  std::uint64_t term_count(std::string_view term, std::size_t c) const;
  std::size_t class_presence(std::string_view term) const;
  std::uint64_t class_total(std::size_t c) const;

  // Throws DomainError when class_id >= num_classes(). Unknown terms score 0.
  double score(std::string_view term, std::size_t class_id) const;

  // Terms with f[t,c] > 0 ordered by score desc, then term asc.
  std::vector<std::pair<std::string, double>> top_terms(std::size_t class_id, std::size_t limit) const;

 private:
  std::ptrdiff_t term_index(std::string_view term) const;
  double score_at(std::size_t term_idx, std::size_t class_id) const;

  std::vector<std::string> vocabulary_;  // sorted
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::map<std::size_t, std::uint64_t>> class_counts_;
  std::vector<std::size_t> presence_;
  std::vector<std::uint64_t> totals_;
};

// Counts content tokens per cluster; noise chunks are ignored. Throws
// EmptyModelError when every chunk is noise and ContractError when the
// inputs are misaligned.
CtfidfModel fit_ctfidf(const std::vector<ingest::Chunk>& chunks, const cluster::ClusterAssignment& assignment);

struct Keyword {
  std::string term;
  double score = 0.0;

  bool operator==(const Keyword&) const = default;
};

struct Topic {
  int topic_id = 0;
  std::vector<Keyword> keywords;
  std::vector<std::string> representative_chunk_ids;
  std::size_t frequency = 0;
  // Members ordered by cosine to the topic centroid, highest first (ties by
  // chunk_id); representatives are a prefix of this list.
  std::vector<std::string> member_chunk_ids;

  bool operator==(const Topic&) const = default;
};

struct TopicSet {
  std::vector<Topic> topics;  // frequency desc, then topic_id asc
  std::size_t noise_count = 0;

  bool operator==(const TopicSet&) const = default;
};

void order_topics(std::vector<Topic>& topics);

struct TopicOptions {
  std::size_t top_n = 10;
  std::size_t n_repr = 3;
};

TopicSet build_topics(const std::vector<ingest::Chunk>& chunks, const cluster::ClusterAssignment& assignment,
                      const std::vector<embed::EmbeddingVector>& vectors, const TopicOptions& opts);

TopicSet build_topics(const std::vector<ingest::Chunk>& chunks, const cluster::ClusterAssignment& assignment,
                      const std::vector<embed::EmbeddedChunk>& embedded, const TopicOptions& opts);

nlohmann::ordered_json to_json(const TopicSet& set);
TopicSet topic_set_from_json(const nlohmann::json& j);

}  // namespace lens::topics
