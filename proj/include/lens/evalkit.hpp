#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lens/embed.hpp"
#include "lens/label.hpp"
#include "lens/topics.hpp"

namespace lens::eval {

inline constexpr double kAlignmentThreshold = 0.7;
inline constexpr double kFactualityThreshold = 0.3;

// A metric value plus a flag set when the inputs were degenerate (no
// content words in the label, or no documents).
struct Metric {
  double value = 0.0;
  bool degenerate = false;
};

// Unique content words of a label, in first-seen order.
std::vector<std::string> label_words(std::string_view label);

// Fraction of the label's content words that occur as a token in the
// concatenated documents.
Metric factuality_score(std::string_view label, const std::vector<std::string>& topic_docs);

// Fraction of documents containing at least one label content word.
Metric coverage_score(std::string_view label, const std::vector<std::string>& top_docs);

// Cosine between the embeddings of the label and of the comma-joined
// keyword terms, both from `provider`.
double alignment_score(std::string_view label, const topics::Topic& topic, const embed::EmbeddingProvider& provider);

struct TopicEval {
  int topic_id = 0;
  std::string label;
  std::optional<double> alignment;
  std::optional<double> factuality;
  std::optional<double> coverage;
  bool hallucination = false;
  std::optional<double> bert_score_f1;
  std::vector<std::string> notes;  // degenerate inputs, metric failures

  bool operator==(const TopicEval&) const = default;
};

// True when alignment > 0.7 and factuality < 0.3 (both strict).
bool is_hallucination(double alignment, double factuality);

// Topic ids of flagged evaluations, in input order.
std::vector<int> flag_hallucinations(const std::vector<TopicEval>& evals);

struct EvalReport {
  std::vector<TopicEval> per_topic;
  std::optional<double> mean_alignment;
  std::optional<double> mean_factuality;
  std::optional<double> mean_coverage;
  std::optional<double> mean_bert_score_f1;
  std::size_t hallucination_count = 0;
  std::size_t metric_failures = 0;
  // Criterion name -> mean over imported per-topic human ratings.
  std::optional<std::map<std::string, double>> human_scores;

  bool operator==(const EvalReport&) const = default;
};

struct ReportInputs {
  const topics::TopicSet* topics = nullptr;
  const std::vector<label::TopicLabel>* labels = nullptr;
  const label::ChunkLookup* chunks = nullptr;
  const embed::EmbeddingProvider* provider = nullptr;
  std::size_t coverage_m = 10;
  std::map<int, double> bert_scores;                          // topic_id -> F1
  std::map<int, std::map<std::string, double>> human_ratings; // topic_id -> criterion -> score
};

// Labels are matched to topics by topic_id; a topic without a label is
// recorded as a failure. Factuality uses the representative chunks,
// coverage the top-m centroid-nearest members.
EvalReport build_report(const ReportInputs& in);

// Recomputes means and counts from per_topic.
void aggregate(EvalReport& report);

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Aligned plain-text table: topic, label, alignment, factuality, coverage,
// hallucination, then the means.
std::string to_text_table(const EvalReport& report);

// {"<topic_id>": f1, ...}
std::map<int, double> bert_scores_from_json(const nlohmann::json& j);
// {"<topic_id>": {"relevance": 4, ...}, ...}
std::map<int, std::map<std::string, double>> human_ratings_from_json(const nlohmann::json& j);

}  // namespace lens::eval
