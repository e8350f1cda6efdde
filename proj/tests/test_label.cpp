#include <doctest.h>

#include <atomic>
#include <random>

#include <json.hpp>

#include "lens/error.hpp"
#include "lens/label.hpp"
#include "support.hpp"

using namespace lens;
using namespace lens::label;

namespace {

topics::Topic topic(int id, std::vector<std::string> terms, std::vector<std::string> reps) {
  topics::Topic t;
  t.topic_id = id;
  double s = 1.0;
  for (auto& term : terms) t.keywords.push_back({std::move(term), s -= 0.1});
  t.representative_chunk_ids = reps;
  t.member_chunk_ids = reps;
  t.frequency = reps.size();
  return t;
}

// Fails on prompts that mention a chosen keyword.
class FlakyGenerator final : public TextGenerator {
 public:
  explicit FlakyGenerator(std::string poison) : poison_(std::move(poison)) {}
  std::string name() const override { return "flaky"; }
  std::string complete(const std::string& prompt) const override {
    if (prompt.find(poison_) != std::string::npos) throw TransportError("injected", 500, 1);
    return "\"Generated Label\"";
  }

 private:
  std::string poison_;
};

}  // namespace

TEST_CASE("prompt rendering") {
  const ChunkLookup chunks{{"d_chunk1", "wheat prices climbed sharply this season."}};
  const auto t = topic(0, {"wheat", "price"}, {"d_chunk1"});
  const auto prompt = render_prompt(t, chunks, {});
  CHECK(prompt.find(kDefaultInstruction) == 0);
  const auto kw = prompt.find("Keywords: wheat, price");
  const auto snip = prompt.find("wheat prices climbed sharply this season.");
  REQUIRE(kw != std::string::npos);
  REQUIRE(snip != std::string::npos);
  CHECK(kw < snip);
  CHECK(render_prompt(t, chunks, {}) == prompt);
  CHECK(keywords_from_prompt(prompt) == std::vector<std::string>{"wheat", "price"});
}

TEST_CASE("prompt with no representatives keeps an empty snippet section") {
  const auto prompt = render_prompt(topic(0, {"wheat"}, {}), {}, {});
  CHECK(prompt.find("Keywords: wheat") != std::string::npos);
  CHECK(prompt.find("Snippets: ") != std::string::npos);
}

TEST_CASE("prompt truncates snippets and rejects unknown ids") {
  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "word" + std::to_string(i) + " ";
  PromptTemplate tmpl;
  tmpl.snippet_word_limit = 5;
  const auto prompt = render_prompt(topic(0, {"x"}, {"a"}), {{"a", long_text}}, tmpl);
  CHECK(prompt.find("word4") != std::string::npos);
  CHECK(prompt.find("word5") == std::string::npos);
  CHECK_THROWS_AS(render_prompt(topic(0, {"x"}, {"missing"}), {}, {}), LookupError);
}

TEST_CASE("prompt structure holds for random topics") {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> n(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> terms, reps;
    ChunkLookup chunks;
    for (int i = 0, m = n(rng); i < m; ++i) terms.push_back("term" + std::to_string(rng() % 1000));
    for (int i = 0, m = n(rng); i < m; ++i) {
      const auto id = "c" + std::to_string(trial) + "_" + std::to_string(i);
      reps.push_back(id);
      chunks[id] = "snippet " + std::to_string(rng());
    }
    const auto prompt = render_prompt(topic(trial, terms, reps), chunks, {});
    std::size_t pos = prompt.find(kDefaultInstruction);
    CHECK(pos == 0);
    for (const auto& t : terms) {
      const auto p = prompt.find(t, pos);
      CHECK(p != std::string::npos);
      pos = p;
    }
    for (const auto& r : reps) {
      const auto p = prompt.find(chunks[r], pos);
      CHECK(p != std::string::npos);
      pos = p;
    }
  }
}

TEST_CASE("post-processing") {
  CHECK(postprocess_label("\"Tractor Engines and Models\"\nExplanation: ...", 8) == "Tractor Engines And Models");
  CHECK(postprocess_label("Label: food security.", 8) == "Food Security");
  CHECK(postprocess_label("**Topic label:** `Soil Health`", 8) == "Soil Health");
  CHECK(postprocess_label("\n\n  - rice markets!  \nmore", 8) == "Rice Markets");
  CHECK(postprocess_label("one two three four five six seven eight nine ten", 8) ==
        "One Two Three Four Five Six Seven Eight");
  CHECK(postprocess_label("\xE2\x80\x9C" "Curly Quotes\xE2\x80\x9D", 8) == "Curly Quotes");
  CHECK(postprocess_label("   ", 8) == "");
  CHECK(postprocess_label("\"\"", 8) == "");
}

TEST_CASE("post-processing is idempotent and respects the word limit") {
  std::mt19937 rng(10);
  const std::vector<std::string> parts = {"\"", "'", "*", "#", "`", "_", "Label:", "label:", "Topic label:", " ",
                                          "\n", ".", "!", "wheat", "Corn", "- ", "drought", "x", "\xE2\x80\x9C"};
  std::uniform_int_distribution<std::size_t> pick(0, parts.size() - 1), len(0, 15), words(1, 8);
  for (int i = 0; i < 500; ++i) {
    std::string raw;
    for (std::size_t j = 0, m = len(rng); j < m; ++j) raw += parts[pick(rng)];
    const auto limit = words(rng);
    const auto once = postprocess_label(raw, limit);
    CHECK(postprocess_label(once, limit) == once);
    std::size_t count = 0;
    for (std::size_t k = 0; k < once.size(); ++k) count += (k == 0 || once[k - 1] == ' ') && once[k] != ' ';
    CHECK(count <= limit);
  }
}

TEST_CASE("stub labels") {
  CHECK(stub_label({"food", "security", "climate"}) == "Food Security Climate");
  CHECK(stub_label({"food", "security", "climate", "change"}) == "Food Security Climate");
  CHECK(stub_label({"wheat"}) == "Wheat");
  StubGenerator gen;
  const auto prompt = render_prompt(topic(0, {"food", "security", "climate"}, {}), {}, {});
  CHECK(generate_label(gen, prompt, 8) == "Food Security Climate");
  CHECK(gen.complete(prompt) == gen.complete(prompt));
}

TEST_CASE("labeling a topic set with the stub") {
  topics::TopicSet set;
  ChunkLookup chunks{{"a", "text a"}, {"b", "text b"}, {"c", "text c"}};
  set.topics = {topic(0, {"wheat", "corn"}, {"a"}), topic(1, {"tractor"}, {"b"}), topic(2, {"rain"}, {"c"})};
  StubGenerator gen;
  const auto labels = label_topic_set(set, chunks, gen, {}, 2);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0].label == "Wheat Corn");
  CHECK(labels[1].topic_id == 1);
  for (const auto& l : labels) {
    CHECK_FALSE(l.flagged);
    CHECK(l.provider_name == "stub");
    CHECK(l.prompt_used.find("Keywords: ") != std::string::npos);
  }
  CHECK(label_topic_set({}, chunks, gen, {}).empty());
}

TEST_CASE("a failing provider is isolated to its topic") {
  topics::TopicSet set;
  ChunkLookup chunks{{"a", "text a"}, {"b", "text b"}, {"c", "text c"}};
  set.topics = {topic(0, {"wheat"}, {"a"}), topic(1, {"poison", "tractor"}, {"b"}), topic(2, {"rain"}, {"c"})};
  FlakyGenerator gen("poison");
  const auto labels = label_topic_set(set, chunks, gen, {}, 3);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0].label == "Generated Label");
  CHECK_FALSE(labels[0].flagged);
  CHECK(labels[1].label == "Poison Tractor");
  CHECK(labels[1].flagged);
  CHECK(labels[2].label == "Generated Label");
  CHECK_FALSE(labels[2].flagged);
}

TEST_CASE("a topic whose snippets are missing falls back without keywords") {
  topics::TopicSet set;
  set.topics = {topic(4, {}, {"gone"})};
  StubGenerator gen;
  const auto labels = label_topic_set(set, {}, gen, {});
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].flagged);
  CHECK(labels[0].label == "Topic 4");
}

TEST_CASE("labels JSON round-trip") {
  std::vector<TopicLabel> labels(2);
  labels[0] = {0, "Wheat Corn", "prompt 0", "stub", {}, false};
  labels[1] = {3, "Rain", "prompt 1", "remote-chat:m", {}, true};
  const auto back = labels_from_json(nlohmann::json::parse(to_json(labels).dump()));
  REQUIRE(back.size() == 2);
  CHECK(back[1].topic_id == 3);
  CHECK(back[1].label == "Rain");
  CHECK(back[1].flagged);
  CHECK(back[1].provider_name == "remote-chat:m");
  CHECK(back[0].prompt_used == "prompt 0");
  CHECK(to_json(labels).dump().find("created_at") == std::string::npos);
}

TEST_CASE("generator config") {
  GenProviderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.kind = GenProviderKind::remote_chat;
  CHECK_THROWS_AS(make_generator(cfg, {}), ConfigError);
  cfg = {};
  cfg.temperature = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  PromptTemplate tmpl;
  tmpl.max_label_words = 0;
  CHECK_THROWS_AS(tmpl.validate(), ConfigError);
}

TEST_CASE("remote chat generator talks the chat-completions shape") {
  lens::testing::MockServer mock;
  nlohmann::json seen;
  std::atomic<int> calls{0};
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 500;
      return;
    }
    seen = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"\"Farm Machinery Upkeep\"\nBecause..."}}]})",
                    "application/json");
  });
  mock.start();
  GenProviderConfig cfg;
  cfg.kind = GenProviderKind::remote_chat;
  cfg.endpoint_url = mock.url("/v1/chat/completions");
  cfg.model_name = "mock-llm";
  cfg.backoff_base = std::chrono::milliseconds(1);
  const auto gen = make_generator(cfg, {});
  CHECK(generate_label(*gen, "the prompt", 8) == "Farm Machinery Upkeep");
  CHECK(calls == 2);
  CHECK(seen["model"] == "mock-llm");
  CHECK(seen["messages"][0]["role"] == "user");
  CHECK(seen["messages"][0]["content"] == "the prompt");
  CHECK(seen["temperature"] == 0.0);
}

TEST_CASE("an empty completion is a generation error") {
  lens::testing::MockServer mock;
  mock.server().Post("/chat", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[{"message":{"content":"  \"\" "}}]})", "application/json");
  });
  mock.start();
  GenProviderConfig cfg;
  cfg.kind = GenProviderKind::remote_chat;
  cfg.endpoint_url = mock.url("/chat");
  cfg.model_name = "m";
  const auto gen = make_generator(cfg, {});
  CHECK_THROWS_AS(generate_label(*gen, "p", 8), GenerationError);

  topics::TopicSet set;
  set.topics = {topic(0, {"soil"}, {})};
  const auto labels = label_topic_set(set, {}, *gen, {});
  CHECK(labels[0].flagged);
  CHECK(labels[0].label == "Soil");
}
