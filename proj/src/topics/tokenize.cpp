#include "lens/tokenize.hpp"

#include <algorithm>
#include <cctype>

namespace lens::text {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

// Sorted for binary search.
std::vector<std::string_view> build_stop_words() {
  std::vector<std::string_view> words = {
      "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
      "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
      "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "even",
      "ever", "every", "few", "for", "from", "further", "get", "got", "had", "has", "have",
      "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "however",
      "i", "if", "in", "into", "is", "it", "its", "itself", "just", "last", "less", "like", "made",
      "make", "many", "may", "me", "might", "more", "most", "much", "must", "my", "myself", "new",
      "no", "nor", "not", "now", "of", "off", "on", "once", "one", "only", "or", "other", "our",
      "ours", "ourselves", "out", "over", "own", "per", "said", "same", "says", "she", "should",
      "since", "so", "some", "still", "such", "than", "that", "the", "their", "theirs", "them",
      "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
      "under", "until", "up", "upon", "us", "very", "via", "was", "we", "well", "were", "what",
      "when", "where", "whether", "which", "while", "who", "whom", "whose", "why", "will", "with",
      "within", "without", "would", "year", "years", "yet", "you", "your", "yours", "yourself",
      "yourselves"};
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

}  // namespace

const std::vector<std::string_view>& stop_words() {
  static const auto words = build_stop_words();
  return words;
}

bool is_stop_word(std::string_view token) {
  const auto& words = stop_words();
  return std::binary_search(words.begin(), words.end(), token);
}

std::vector<std::string> raw_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    std::size_t end = i;
    while (start < end && is_ascii_punct(text[start])) ++start;
    while (end > start && is_ascii_punct(text[end - 1])) --end;
    if (start == end) continue;
    std::string token(text.substr(start, end - start));
    for (auto& c : token) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

std::vector<std::string> content_tokens(std::string_view text) {
  auto tokens = raw_tokens(text);
  std::erase_if(tokens, [](const std::string& t) { return t.size() < 2 || is_stop_word(t); });
  return tokens;
}

}  // namespace lens::text
