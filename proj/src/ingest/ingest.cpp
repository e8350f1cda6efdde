#include "lens/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <optional>

#include <json.hpp>

#include "lens/error.hpp"
#include "lens/util.hpp"

namespace lens::ingest {

namespace {

constexpr std::string_view kRetainedPunct = ".,;:!?'\"()-%";

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Decodes one UTF-8 sequence starting at s[i]. Returns the code point and
// advances i; returns nullopt (advancing past one byte) on ill-formed input.
std::optional<char32_t> next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    ++i;
    return std::nullopt;
  }
  if (i + len > s.size()) {
    ++i;
    return std::nullopt;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return std::nullopt;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++i;
    return std::nullopt;
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

enum class Kind { keep, space, drop };

// Classifies a code point and rewrites it in place (case folding, mapping of
// typographic punctuation to ASCII).
Kind classify(char32_t& cp) {
  if (cp < 0x80) {
    const char c = static_cast<char>(cp);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return Kind::space;
    if (cp < 0x20 || cp == 0x7F) return Kind::drop;
    if (c >= 'A' && c <= 'Z') {
      cp = cp - 'A' + 'a';
      return Kind::keep;
    }
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) return Kind::keep;
    if (kRetainedPunct.find(c) != std::string_view::npos) return Kind::keep;
    return Kind::space;
  }
  switch (cp) {
    case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return Kind::space;
    case 0x2018: case 0x2019: case 0x201A: case 0x201B: case 0x2032:
      cp = '\'';
      return Kind::keep;
    case 0x201C: case 0x201D: case 0x201E: case 0x201F: case 0x2033:
      cp = '"';
      return Kind::keep;
    case 0x2010: case 0x2011: case 0x2012: case 0x2013: case 0x2014: case 0x2015: case 0x2212:
      cp = '-';
      return Kind::keep;
    case 0x2026:
      cp = '.';
      return Kind::keep;
    case 0x00D7: case 0x00F7:
      return Kind::space;
    default:
      break;
  }
  if (cp >= 0x2000 && cp <= 0x200A) return Kind::space;
  if (cp < 0x00C0) return Kind::drop;                    // C1 controls, Latin-1 symbols
  if (cp >= 0x00C0 && cp <= 0x00DE) {
    cp += 0x20;
    return Kind::keep;
  }
  if (cp >= 0x200B && cp <= 0x200F) return Kind::drop;   // zero-width, direction marks
  if (cp >= 0x2010 && cp <= 0x2BFF) return Kind::space;  // punctuation, symbols, arrows, math
  if (cp >= 0x3000 && cp <= 0x303F) return Kind::space;  // CJK punctuation
  if (cp >= 0xE000 && cp <= 0xF8FF) return Kind::drop;   // private use
  if (cp >= 0xFE00 && cp <= 0xFE0F) return Kind::drop;   // variation selectors
  if (cp >= 0xFFF0) {
    if (cp <= 0xFFFF) return Kind::drop;                 // specials, incl. U+FFFD
  }
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return Kind::space;  // emoji, pictographs
  if (cp >= 0xE0000) return Kind::drop;
  return Kind::keep;
}

std::string_view trim_leading_punct(std::string_view token) {
  while (!token.empty() && (token.front() == '(' || token.front() == '"' || token.front() == '\'')) {
    token.remove_prefix(1);
  }
  return token;
}

}  // namespace

void ChunkingConfig::validate() const {
  if (word_limit < 1) throw ConfigError("chunking.word_limit must be >= 1");
}

std::string clean_text(std::string_view raw) {
  std::string mapped;
  mapped.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    auto cp = next_code_point(raw, i);
    if (!cp) continue;
    char32_t c = *cp;
    switch (classify(c)) {
      case Kind::keep:
        append_utf8(mapped, c);
        break;
      case Kind::space:
        mapped.push_back(' ');
        break;
      case Kind::drop:
        break;
    }
  }

  std::string collapsed;
  collapsed.reserve(mapped.size());
  for (char c : mapped) {
    if (is_terminal(c) && !collapsed.empty() && is_terminal(collapsed.back())) continue;
    collapsed.push_back(c);
  }

  std::string out;
  out.reserve(collapsed.size());
  for (char c : collapsed) {
    if (c == ' ') {
      if (out.empty() || out.back() == ' ') continue;
    }
    out.push_back(c);
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_abbreviation(std::string_view token) {
  static constexpr std::array<std::string_view, 20> kAbbreviations = {
      "u.s.", "u.k.", "u.n.", "dr.", "mr.", "mrs.", "ms.", "e.g.", "i.e.", "no.",
      "vs.", "st.", "jr.", "sr.", "prof.", "inc.", "ltd.", "corp.", "approx.", "fig."};
  token = trim_leading_punct(token);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), token) != kAbbreviations.end();
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_terminal(text[i])) continue;
    const bool at_end = i + 1 == text.size();
    if (!at_end && text[i + 1] != ' ') continue;  // also keeps "2.5" intact
    if (text[i] == '.') {
      const auto word_start = text.rfind(' ', i);
      const auto from = word_start == std::string_view::npos ? 0 : word_start + 1;
      if (from >= start && is_abbreviation(text.substr(from, i + 1 - from))) continue;
    }
    sentences.emplace_back(text.substr(start, i + 1 - start));
    start = i + 2;
  }
  if (start < text.size()) sentences.emplace_back(text.substr(start));
  return sentences;
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::string make_chunk_id(std::string_view doc_id, std::size_t chunk_index) {
  return std::string(doc_id) + "_chunk" + std::to_string(chunk_index);
}

bool parse_chunk_id(std::string_view chunk_id, std::string& doc_id, std::size_t& chunk_index) {
  constexpr std::string_view kSep = "_chunk";
  const auto pos = chunk_id.rfind(kSep);
  if (pos == std::string_view::npos) return false;
  const auto digits = chunk_id.substr(pos + kSep.size());
  if (digits.empty() || digits.front() == '0') return false;
  std::size_t value = 0;
  auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || end != digits.data() + digits.size()) return false;
  doc_id.assign(chunk_id.substr(0, pos));
  chunk_index = value;
  return true;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg) {
  cfg.validate();
  std::vector<Chunk> chunks;
  std::string current;
  std::size_t current_words = 0;

  auto close = [&] {
    if (current.empty()) return;
    Chunk c;
    c.doc_id = doc.doc_id;
    c.chunk_index = chunks.size() + 1;
    c.chunk_id = make_chunk_id(doc.doc_id, c.chunk_index);
    c.text = std::move(current);
    c.word_count = current_words;
    chunks.push_back(std::move(c));
    current.clear();
    current_words = 0;
  };

  for (auto& sentence : split_sentences(doc.clean_text)) {
    const auto words = count_words(sentence);
    if (!current.empty() && current_words + words > cfg.word_limit) close();
    if (!current.empty()) current.push_back(' ');
    current += sentence;
    current_words += words;
  }
  close();
  return chunks;
}

std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkingConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<Chunk>> per_doc(docs.size());
  util::parallel_for(docs.size(), [&](std::size_t i) { per_doc[i] = chunk_document(docs[i], cfg); });
  std::vector<Chunk> out;
  for (auto& chunks : per_doc) {
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

CorpusLoad load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("corpus directory not readable: " + dir.string());

  std::vector<fs::path> files;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  enum class Outcome { ok, missing, empty, malformed };
  std::vector<Outcome> outcomes(files.size(), Outcome::ok);
  std::vector<Document> slots(files.size());

  util::parallel_for(files.size(), [&](std::size_t i) {
    const auto bytes = util::read_file(files[i]);
    const auto json = nlohmann::json::parse(bytes, nullptr, /*allow_exceptions=*/false);
    if (json.is_discarded()) {
      outcomes[i] = Outcome::malformed;
      return;
    }
    if (!json.is_object() || !json.contains("Text") || !json["Text"].is_string()) {
      outcomes[i] = Outcome::missing;
      return;
    }
    Document doc;
    doc.doc_id = files[i].stem().string();
    doc.raw_text = json["Text"].get<std::string>();
    doc.clean_text = clean_text(doc.raw_text);
    if (doc.clean_text.empty()) {
      outcomes[i] = Outcome::empty;
      return;
    }
    slots[i] = std::move(doc);
  });

  CorpusLoad result;
  for (std::size_t i = 0; i < files.size(); ++i) {
    switch (outcomes[i]) {
      case Outcome::ok: result.documents.push_back(std::move(slots[i])); break;
      case Outcome::missing: ++result.skipped.missing_text; break;
      case Outcome::empty: ++result.skipped.empty_text; break;
      case Outcome::malformed: ++result.skipped.malformed; break;
    }
  }
  return result;
}

std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) {
    nlohmann::ordered_json j;
    j["doc_id"] = c.doc_id;
    j["chunk_id"] = c.chunk_id;
    j["chunk_index"] = c.chunk_index;
    j["text"] = c.text;
    j["word_count"] = c.word_count;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<Chunk> chunks_from_jsonl(std::string_view jsonl) {
  std::vector<Chunk> chunks;
  std::size_t line_no = 0;
  while (!jsonl.empty()) {
    const auto nl = jsonl.find('\n');
    const auto line = jsonl.substr(0, nl);
    jsonl.remove_prefix(nl == std::string_view::npos ? jsonl.size() : nl + 1);
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Chunk c;
      c.doc_id = j.at("doc_id").get<std::string>();
      c.chunk_id = j.at("chunk_id").get<std::string>();
      c.chunk_index = j.at("chunk_index").get<std::size_t>();
      c.text = j.at("text").get<std::string>();
      c.word_count = j.at("word_count").get<std::size_t>();
      if (c.chunk_id != make_chunk_id(c.doc_id, c.chunk_index)) {
        throw FormatError("chunks", "line " + std::to_string(line_no) + ": inconsistent chunk_id");
      }
      chunks.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("chunks", "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return chunks;
}

}  // namespace lens::ingest
