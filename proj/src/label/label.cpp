#include "lens/label.hpp"

#include <array>
#include <cctype>
#include <cstdlib>

#include "lens/error.hpp"
#include "lens/util.hpp"
#include "net/http_post.hpp"

namespace lens::label {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (is_space(s.front()) || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (is_space(s.back()) || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const auto start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) words.push_back(s.substr(start, i - start));
  }
  return words;
}

std::string join(const std::vector<std::string_view>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

constexpr std::array<std::string_view, 6> kQuotes = {"\"", "'", "\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98",
                                                     "\xE2\x80\x99"};

bool strip_quote_prefix(std::string_view& s) {
  for (auto q : kQuotes) {
    if (s.starts_with(q)) {
      s.remove_prefix(q.size());
      return true;
    }
  }
  return false;
}

bool strip_quote_suffix(std::string_view& s) {
  for (auto q : kQuotes) {
    if (s.ends_with(q)) {
      s.remove_suffix(q.size());
      return true;
    }
  }
  return false;
}

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

std::string postprocess_once(std::string_view raw, std::size_t max_words) {
  // First non-empty line.
  std::string_view line;
  while (!raw.empty()) {
    const auto nl = raw.find('\n');
    line = trim(raw.substr(0, nl));
    if (!line.empty() || nl == std::string_view::npos) break;
    raw.remove_prefix(nl + 1);
  }

  std::string no_markdown;
  for (char c : line) {
    if (c == '*' || c == '#' || c == '`' || c == '_') continue;
    no_markdown.push_back(c);
  }
  std::string_view s = trim(no_markdown);
  while (s.starts_with("- ")) s = trim(s.substr(2));
  for (auto prefix : {std::string_view("topic label:"), std::string_view("label:")}) {
    if (iequals_prefix(s, prefix)) s = trim(s.substr(prefix.size()));
  }
  while (strip_quote_prefix(s)) s = trim(s);
  while (strip_quote_suffix(s)) s = trim(s);
  while (!s.empty() && std::string_view(".,;:!?").find(s.back()) != std::string_view::npos) {
    s.remove_suffix(1);
    s = trim(s);
  }

  auto words = split_words(s);
  if (words.size() > max_words) words.resize(max_words);
  std::string out = join(words, " ");
  bool word_start = true;
  for (auto& c : out) {
    if (word_start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    word_start = c == ' ';
  }
  return out;
}

}  // namespace

void PromptTemplate::validate() const {
  if (max_label_words < 1) throw ConfigError("template.max_label_words must be >= 1");
  if (keyword_marker.empty()) throw ConfigError("template.keyword_marker must not be empty");
}

void GenProviderConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("labeler temperature must be >= 0");
  if (max_concurrency < 1) throw ConfigError("labeler max_concurrency must be >= 1");
  if (kind == GenProviderKind::remote_chat && endpoint_url.empty()) {
    throw ConfigError("remote-chat labeler needs endpoint_url (or GEN_ENDPOINT)");
  }
}

std::string render_prompt(const topics::Topic& topic, const ChunkLookup& chunks, const PromptTemplate& tmpl) {
  std::string prompt = tmpl.instruction;
  prompt += '\n';
  prompt += tmpl.keyword_marker;
  for (std::size_t i = 0; i < topic.keywords.size(); ++i) {
    if (i) prompt += ", ";
    prompt += topic.keywords[i].term;
  }
  prompt += '\n';
  prompt += tmpl.snippet_marker;
  for (std::size_t i = 0; i < topic.representative_chunk_ids.size(); ++i) {
    const auto& id = topic.representative_chunk_ids[i];
    const auto it = chunks.find(id);
    if (it == chunks.end()) throw LookupError("representative chunk " + id + " not found");
    auto words = split_words(it->second);
    if (words.size() > tmpl.snippet_word_limit) words.resize(tmpl.snippet_word_limit);
    if (i) prompt += '\n';
    prompt += join(words, " ");
  }
  return prompt;
}

std::string postprocess_label(std::string_view raw, std::size_t max_words) {
  std::string current = postprocess_once(raw, max_words);
  for (int i = 0; i < 8; ++i) {
    auto next = postprocess_once(current, max_words);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::vector<std::string> keywords_from_prompt(std::string_view prompt, std::string_view keyword_marker) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    const auto nl = prompt.find('\n', pos);
    const auto line = prompt.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (line.starts_with(keyword_marker)) {
      auto rest = line.substr(keyword_marker.size());
      while (!rest.empty()) {
        const auto comma = rest.find(", ");
        const auto term = trim(rest.substr(0, comma));
        if (!term.empty()) out.emplace_back(term);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 2);
      }
      return out;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

std::string stub_label(const std::vector<std::string>& keywords) {
  std::vector<std::string_view> top;
  for (std::size_t i = 0; i < keywords.size() && i < 3; ++i) top.push_back(keywords[i]);
  return postprocess_label(join(top, " "), 3);
}

std::string StubGenerator::complete(const std::string& prompt) const {
  return stub_label(keywords_from_prompt(prompt, marker_));
}

RemoteChatGenerator::RemoteChatGenerator(GenProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  net::parse_endpoint(cfg_.endpoint_url);
}

std::string RemoteChatGenerator::complete(const std::string& prompt) const {
  nlohmann::json body;
  body["model"] = cfg_.model_name;
  body["temperature"] = cfg_.temperature;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

  net::PostOptions opts;
  opts.api_key = cfg_.api_key;
  opts.timeout = cfg_.timeout;
  opts.max_retries = cfg_.max_retries;
  opts.backoff_base = cfg_.backoff_base;
  const auto response = net::post_json(cfg_.endpoint_url, body, opts);

  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty()) {
    throw GenerationError("completion response has no choices");
  }
  const auto& first = (*choices)[0];
  if (first.contains("message") && first["message"].contains("content") && first["message"]["content"].is_string()) {
    return first["message"]["content"].get<std::string>();
  }
  if (first.contains("text") && first["text"].is_string()) return first["text"].get<std::string>();
  throw GenerationError("completion response has no message content");
}

std::unique_ptr<TextGenerator> make_generator(const GenProviderConfig& cfg, const PromptTemplate& tmpl) {
  cfg.validate();
  switch (cfg.kind) {
    case GenProviderKind::stub:
      return std::make_unique<StubGenerator>(tmpl.keyword_marker);
    case GenProviderKind::remote_chat:
      return std::make_unique<RemoteChatGenerator>(cfg);
  }
  throw ConfigError("unknown generator kind");
}

void apply_env(GenProviderConfig& cfg) {
  auto fill = [](std::string& field, const char* var) {
    if (!field.empty()) return;
    if (const char* v = std::getenv(var)) field = v;
  };
  fill(cfg.endpoint_url, "GEN_ENDPOINT");
  fill(cfg.model_name, "GEN_MODEL");
  fill(cfg.api_key, "GEN_API_KEY");
}

std::string generate_label(const TextGenerator& generator, const std::string& prompt, std::size_t max_words) {
  if (prompt.empty()) throw UsageError("generate_label needs a non-empty prompt");
  auto label = postprocess_label(generator.complete(prompt), max_words);
  if (label.empty()) throw GenerationError(generator.name() + " returned an empty label");
  return label;
}

std::vector<TopicLabel> label_topic_set(const topics::TopicSet& set, const ChunkLookup& chunks,
                                        const TextGenerator& generator, const PromptTemplate& tmpl,
                                        std::size_t max_concurrency) {
  tmpl.validate();
  std::vector<TopicLabel> labels(set.topics.size());
  util::parallel_for(
      set.topics.size(),
      [&](std::size_t i) {
        const auto& topic = set.topics[i];
        auto& out = labels[i];
        out.topic_id = topic.topic_id;
        out.created_at = std::chrono::system_clock::now();
        try {
          out.prompt_used = render_prompt(topic, chunks, tmpl);
          out.label = generate_label(generator, out.prompt_used, tmpl.max_label_words);
          out.provider_name = generator.name();
        } catch (const Error&) {
          std::vector<std::string> terms;
          for (const auto& k : topic.keywords) terms.push_back(k.term);
          out.label = stub_label(terms);
          if (out.label.empty()) out.label = "Topic " + std::to_string(topic.topic_id);
          out.provider_name = "stub";
          out.flagged = true;
        }
      },
      max_concurrency);
  return labels;
}

nlohmann::ordered_json to_json(const std::vector<TopicLabel>& labels) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& l : labels) {
    nlohmann::ordered_json j;
    j["topic_id"] = l.topic_id;
    j["label"] = l.label;
    j["flagged"] = l.flagged;
    j["provider"] = l.provider_name;
    j["prompt"] = l.prompt_used;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<TopicLabel> labels_from_json(const nlohmann::json& j) {
  try {
    std::vector<TopicLabel> labels;
    for (const auto& item : j) {
      TopicLabel l;
      l.topic_id = item.at("topic_id").get<int>();
      l.label = item.at("label").get<std::string>();
      l.flagged = item.value("flagged", false);
      l.provider_name = item.value("provider", std::string{});
      l.prompt_used = item.value("prompt", std::string{});
      labels.push_back(std::move(l));
    }
    return labels;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("labels", e.what());
  }
}

}  // namespace lens::label
