#include "lens/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_set>

#include "lens/error.hpp"
#include "lens/tokenize.hpp"

namespace lens::eval {

namespace {

std::vector<std::string> lookup_texts(const label::ChunkLookup& chunks, const std::vector<std::string>& ids) {
  std::vector<std::string> texts;
  texts.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = chunks.find(id);
    if (it == chunks.end()) throw LookupError("chunk " + id + " not found");
    texts.push_back(it->second);
  }
  return texts;
}

std::optional<double> mean_of(const std::vector<TopicEval>& evals, std::optional<double> TopicEval::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : evals) {
    if (const auto& v = e.*field) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

int parse_topic_key(const std::string& key) {
  try {
    std::size_t used = 0;
    const int id = std::stoi(key, &used);
    if (used != key.size()) throw std::invalid_argument(key);
    return id;
  } catch (const std::exception&) {
    throw FormatError("sidecar", "topic key '" + key + "' is not an integer");
  }
}

}  // namespace

std::vector<std::string> label_words(std::string_view label) {
  std::vector<std::string> words;
  std::set<std::string> seen;
  for (auto& w : text::content_tokens(label)) {
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

Metric factuality_score(std::string_view label, const std::vector<std::string>& topic_docs) {
  const auto words = label_words(label);
  if (words.empty() || topic_docs.empty()) return {0.0, true};
  std::unordered_set<std::string> doc_tokens;
  for (const auto& doc : topic_docs) {
    for (auto& t : text::raw_tokens(doc)) doc_tokens.insert(std::move(t));
  }
  std::size_t found = 0;
  for (const auto& w : words) found += doc_tokens.count(w);
  return {static_cast<double>(found) / static_cast<double>(words.size()), false};
}

Metric coverage_score(std::string_view label, const std::vector<std::string>& top_docs) {
  const auto words = label_words(label);
  if (words.empty() || top_docs.empty()) return {0.0, true};
  const std::unordered_set<std::string> wanted(words.begin(), words.end());
  std::size_t covered = 0;
  for (const auto& doc : top_docs) {
    const auto tokens = text::raw_tokens(doc);
    if (std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return wanted.count(t) > 0; })) {
      ++covered;
    }
  }
  return {static_cast<double>(covered) / static_cast<double>(top_docs.size()), false};
}

double alignment_score(std::string_view label, const topics::Topic& topic, const embed::EmbeddingProvider& provider) {
  std::string representation;
  for (std::size_t i = 0; i < topic.keywords.size(); ++i) {
    if (i) representation += ", ";
    representation += topic.keywords[i].term;
  }
  if (representation.empty()) throw ContractError("topic " + std::to_string(topic.topic_id) + " has no keywords");
  const std::vector<std::string> texts{std::string(label), representation};
  const auto vecs = embed::embed_texts(provider, texts);
  return embed::cosine(vecs[0], vecs[1]);
}

bool is_hallucination(double alignment, double factuality) {
  return alignment > kAlignmentThreshold && factuality < kFactualityThreshold;
}

std::vector<int> flag_hallucinations(const std::vector<TopicEval>& evals) {
  std::vector<int> ids;
  for (const auto& e : evals) {
    if (e.alignment && e.factuality && is_hallucination(*e.alignment, *e.factuality)) ids.push_back(e.topic_id);
  }
  return ids;
}

void aggregate(EvalReport& report) {
  report.mean_alignment = mean_of(report.per_topic, &TopicEval::alignment);
  report.mean_factuality = mean_of(report.per_topic, &TopicEval::factuality);
  report.mean_coverage = mean_of(report.per_topic, &TopicEval::coverage);
  report.mean_bert_score_f1 = mean_of(report.per_topic, &TopicEval::bert_score_f1);
  report.hallucination_count = flag_hallucinations(report.per_topic).size();
}

EvalReport build_report(const ReportInputs& in) {
  if (!in.topics || !in.labels || !in.chunks) throw UsageError("build_report needs topics, labels and chunks");
  std::map<int, const label::TopicLabel*> by_id;
  for (const auto& l : *in.labels) by_id[l.topic_id] = &l;

  EvalReport report;
  for (const auto& topic : in.topics->topics) {
    TopicEval e;
    e.topic_id = topic.topic_id;
    if (auto it = in.bert_scores.find(topic.topic_id); it != in.bert_scores.end()) e.bert_score_f1 = it->second;
    const auto lit = by_id.find(topic.topic_id);
    if (lit == by_id.end()) {
      e.notes.push_back("no label");
      report.metric_failures += 3;
      report.per_topic.push_back(std::move(e));
      continue;
    }
    e.label = lit->second->label;

    try {
      const auto m = factuality_score(e.label, lookup_texts(*in.chunks, topic.representative_chunk_ids));
      e.factuality = m.value;
      if (m.degenerate) e.notes.push_back("factuality: degenerate input");
    } catch (const Error& err) {
      e.notes.push_back(std::string("factuality: ") + err.what());
      ++report.metric_failures;
    }

    try {
      const auto m_count = std::min(in.coverage_m, topic.member_chunk_ids.size());
      const std::vector<std::string> top(topic.member_chunk_ids.begin(),
                                         topic.member_chunk_ids.begin() + static_cast<std::ptrdiff_t>(m_count));
      const auto m = coverage_score(e.label, lookup_texts(*in.chunks, top));
      e.coverage = m.value;
      if (m.degenerate) e.notes.push_back("coverage: degenerate input");
    } catch (const Error& err) {
      e.notes.push_back(std::string("coverage: ") + err.what());
      ++report.metric_failures;
    }

    if (in.provider) {
      try {
        e.alignment = alignment_score(e.label, topic, *in.provider);
      } catch (const Error& err) {
        e.notes.push_back(std::string("alignment: ") + err.what());
        ++report.metric_failures;
      }
    } else {
      e.notes.push_back("alignment: no embedding provider");
      ++report.metric_failures;
    }

    e.hallucination = e.alignment && e.factuality && is_hallucination(*e.alignment, *e.factuality);
    report.per_topic.push_back(std::move(e));
  }
  aggregate(report);

  if (!in.human_ratings.empty()) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& [topic_id, ratings] : in.human_ratings) {
      for (const auto& [criterion, score] : ratings) {
        auto& s = sums[criterion];
        s.first += score;
        ++s.second;
      }
    }
    std::map<std::string, double> means;
    for (const auto& [criterion, s] : sums) means[criterion] = s.first / static_cast<double>(s.second);
    report.human_scores = std::move(means);
  }
  return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  auto per_topic = nlohmann::ordered_json::array();
  for (const auto& e : report.per_topic) {
    nlohmann::ordered_json t;
    t["topic_id"] = e.topic_id;
    t["label"] = e.label;
    t["alignment"] = opt(e.alignment);
    t["factuality"] = opt(e.factuality);
    t["coverage"] = opt(e.coverage);
    t["hallucination"] = e.hallucination;
    t["bert_score_f1"] = opt(e.bert_score_f1);
    t["notes"] = e.notes;
    per_topic.push_back(std::move(t));
  }
  j["per_topic"] = std::move(per_topic);
  j["means"] = {{"alignment", opt(report.mean_alignment)},
                {"factuality", opt(report.mean_factuality)},
                {"coverage", opt(report.mean_coverage)},
                {"bert_score_f1", opt(report.mean_bert_score_f1)}};
  j["hallucination_count"] = report.hallucination_count;
  j["metric_failures"] = report.metric_failures;
  if (report.human_scores) {
    j["human_scores"] = *report.human_scores;
  } else {
    j["human_scores"] = nullptr;
  }
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    for (const auto& t : j.at("per_topic")) {
      TopicEval e;
      e.topic_id = t.at("topic_id").get<int>();
      e.label = t.at("label").get<std::string>();
      e.alignment = opt_from(t, "alignment");
      e.factuality = opt_from(t, "factuality");
      e.coverage = opt_from(t, "coverage");
      e.hallucination = t.at("hallucination").get<bool>();
      e.bert_score_f1 = opt_from(t, "bert_score_f1");
      e.notes = t.value("notes", std::vector<std::string>{});
      r.per_topic.push_back(std::move(e));
    }
    const auto& means = j.at("means");
    r.mean_alignment = opt_from(means, "alignment");
    r.mean_factuality = opt_from(means, "factuality");
    r.mean_coverage = opt_from(means, "coverage");
    r.mean_bert_score_f1 = opt_from(means, "bert_score_f1");
    r.hallucination_count = j.at("hallucination_count").get<std::size_t>();
    r.metric_failures = j.value("metric_failures", std::size_t{0});
    if (j.contains("human_scores") && !j["human_scores"].is_null()) {
      r.human_scores = j["human_scores"].get<std::map<std::string, double>>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report", e.what());
  }
}

std::string to_text_table(const EvalReport& report) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return std::string(buf);
  };
  std::size_t label_width = 5;
  for (const auto& e : report.per_topic) label_width = std::max(label_width, e.label.size());

  std::string out;
  auto row = [&](const std::string& topic, const std::string& label, const std::string& a, const std::string& f,
                 const std::string& c, const std::string& h) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-6s ", topic.c_str());
    out += buf;
    out += label;
    out.append(label_width - label.size() + 1, ' ');
    std::snprintf(buf, sizeof(buf), "%10s %10s %10s %6s\n", a.c_str(), f.c_str(), c.c_str(), h.c_str());
    out += buf;
  };
  row("Topic", "Label", "Cosine", "Factuality", "Coverage", "Halluc");
  for (const auto& e : report.per_topic) {
    row(std::to_string(e.topic_id), e.label, fmt(e.alignment), fmt(e.factuality), fmt(e.coverage),
        e.hallucination ? "yes" : "no");
  }
  row("Mean", "", fmt(report.mean_alignment), fmt(report.mean_factuality), fmt(report.mean_coverage),
      std::to_string(report.hallucination_count));
  if (report.mean_bert_score_f1) out += "BERTScore F1 (imported): " + fmt(report.mean_bert_score_f1) + "\n";
  if (report.human_scores) {
    for (const auto& [criterion, mean] : *report.human_scores) out += "Human " + criterion + ": " + fmt(mean) + "\n";
  }
  return out;
}

std::map<int, double> bert_scores_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("sidecar", "BERTScore file must be an object keyed by topic_id");
  std::map<int, double> out;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw FormatError("sidecar", "BERTScore for topic " + key + " is not a number");
    out[parse_topic_key(key)] = value.get<double>();
  }
  return out;
}

std::map<int, std::map<std::string, double>> human_ratings_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("sidecar", "human score file must be an object keyed by topic_id");
  std::map<int, std::map<std::string, double>> out;
  for (const auto& [key, ratings] : j.items()) {
    if (!ratings.is_object()) throw FormatError("sidecar", "human scores for topic " + key + " must be an object");
    auto& dest = out[parse_topic_key(key)];
    for (const auto& [criterion, score] : ratings.items()) {
      if (!score.is_number()) throw FormatError("sidecar", "score " + criterion + " is not a number");
      dest[criterion] = score.get<double>();
    }
  }
  return out;
}

}  // namespace lens::eval
