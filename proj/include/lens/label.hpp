#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lens/topics.hpp"

namespace lens::label {

inline constexpr std::string_view kDefaultInstruction =
    "You label topics. Given keywords and example snippets from one topic, reply with only a short, "
    "domain-relevant, human-readable topic label of at most 8 words.";

struct PromptTemplate {
  std::string instruction{kDefaultInstruction};
  std::string keyword_marker = "Keywords: ";
  std::string snippet_marker = "Snippets: ";
  std::size_t max_label_words = 8;
  std::size_t snippet_word_limit = 60;

  void validate() const;
};

struct TopicLabel {
  int topic_id = 0;
  std::string label;
  std::string prompt_used;
  std::string provider_name;
  std::chrono::system_clock::time_point created_at;
  bool flagged = false;  // the provider failed and the stub label was used
};

using ChunkLookup = std::unordered_map<std::string, std::string>;  // chunk_id -> text

// instruction, then the keyword line, then the snippet block, one per line.
// Throws LookupError for a representative id missing from `chunks`.
std::string render_prompt(const topics::Topic& topic, const ChunkLookup& chunks, const PromptTemplate& tmpl);

// Strips quotes and markdown, keeps the first non-empty line, drops a
// leading "Label:" and trailing punctuation, capitalizes each word and
// truncates to max_words. Idempotent. Returns "" when nothing is left.
std::string postprocess_label(std::string_view raw, std::size_t max_words);

// Keyword terms parsed back out of a rendered prompt.
std::vector<std::string> keywords_from_prompt(std::string_view prompt, std::string_view keyword_marker = "Keywords: ");

// Title-cased join of the first three keywords.
std::string stub_label(const std::vector<std::string>& keywords);

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string name() const = 0;
  // Raw completion for a single-turn prompt.
  virtual std::string complete(const std::string& prompt) const = 0;
};

class StubGenerator final : public TextGenerator {
 public:
  explicit StubGenerator(std::string keyword_marker = "Keywords: ") : marker_(std::move(keyword_marker)) {}
  std::string name() const override { return "stub"; }
  std::string complete(const std::string& prompt) const override;

 private:
  std::string marker_;
};

enum class GenProviderKind { remote_chat, stub };

struct GenProviderConfig {
  GenProviderKind kind = GenProviderKind::stub;
  std::string endpoint_url;  // e.g. http://host:8000/v1/chat/completions
  std::string model_name;
  std::string api_key;
  double temperature = 0.0;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_retries = 3;
  std::size_t max_concurrency = 4;
  std::chrono::milliseconds backoff_base{500};

  void validate() const;
};

// Chat-completions client: {"model", "messages": [{"role": "user", ...}],
// "temperature"} -> choices[0].message.content.
class RemoteChatGenerator final : public TextGenerator {
 public:
  explicit RemoteChatGenerator(GenProviderConfig cfg);
  std::string name() const override { return "remote-chat:" + cfg_.model_name; }
  std::string complete(const std::string& prompt) const override;

 private:
  GenProviderConfig cfg_;
};

std::unique_ptr<TextGenerator> make_generator(const GenProviderConfig& cfg, const PromptTemplate& tmpl);

// Fills empty endpoint/model/key fields from GEN_ENDPOINT, GEN_MODEL and
// GEN_API_KEY.
void apply_env(GenProviderConfig& cfg);

// Throws GenerationError on an empty (post-processed) completion; transport
// errors propagate.
std::string generate_label(const TextGenerator& generator, const std::string& prompt, std::size_t max_words);

// One label per topic, in topic order. A topic whose generation fails gets
// the stub label and flagged = true.
std::vector<TopicLabel> label_topic_set(const topics::TopicSet& set, const ChunkLookup& chunks,
                                        const TextGenerator& generator, const PromptTemplate& tmpl,
                                        std::size_t max_concurrency = 1);

// Export schema: [{topic_id, label, flagged, provider, prompt}]. created_at is
// kept out of the file so identical runs produce identical bytes.
nlohmann::ordered_json to_json(const std::vector<TopicLabel>& labels);
std::vector<TopicLabel> labels_from_json(const nlohmann::json& j);

}  // namespace lens::label
