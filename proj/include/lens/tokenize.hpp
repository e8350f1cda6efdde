#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lens::text {

// Whitespace split, ASCII lowercase, leading/trailing punctuation stripped.
// Empty results are dropped.
std::vector<std::string> raw_tokens(std::string_view text);

// raw_tokens minus stop words and tokens shorter than two bytes. This is the
// term definition shared by c-TF-IDF and the label metrics.
std::vector<std::string> content_tokens(std::string_view text);

bool is_stop_word(std::string_view token);

const std::vector<std::string_view>& stop_words();

}  // namespace lens::text
