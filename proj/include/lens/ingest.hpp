#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lens::ingest {

struct Document {
  std::string doc_id;  // source file stem
  std::string raw_text;
  std::string clean_text;
};

struct Chunk {
  std::string doc_id;
  std::size_t chunk_index = 0;  // 1-based
  std::string chunk_id;         // "<doc_id>_chunk<chunk_index>"
  std::string text;
  std::size_t word_count = 0;

  bool operator==(const Chunk&) const = default;
};

struct ChunkingConfig {
  std::size_t word_limit = 120;

  void validate() const;
};

// Files that did not become documents, by reason.
struct SkipCounts {
  std::size_t missing_text = 0;  // no string "Text" field
  std::size_t empty_text = 0;    // "Text" empty after cleaning
  std::size_t malformed = 0;     // not parseable as JSON

  std::size_t total() const { return missing_text + empty_text + malformed; }
};

struct CorpusLoad {
  std::vector<Document> documents;
  SkipCounts skipped;
};

// Reads every *.json file in `dir` (non-recursive) in lexicographic filename
// order. Throws IoError when the directory cannot be listed.
CorpusLoad load_corpus(const std::filesystem::path& dir);

// Lowercases, drops control characters and invalid UTF-8, keeps letters,
// digits and the punctuation set . , ; : ! ? ' " ( ) - %, turns other symbols
// into spaces, collapses runs of terminal marks and whitespace, and trims.
// Typographic quotes, dashes and Unicode spaces are mapped to their ASCII
// forms first. Idempotent.
std::string clean_text(std::string_view raw);

// Splits cleaned text at . ! ? followed by a space or end of text, except
// after known abbreviations. Joining the result with single spaces gives
// back the input.
std::vector<std::string> split_sentences(std::string_view text);

bool is_abbreviation(std::string_view token);

std::size_t count_words(std::string_view text);

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg);

// Chunks every document, preserving document order.
std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkingConfig& cfg);

std::string make_chunk_id(std::string_view doc_id, std::size_t chunk_index);

// Inverse of make_chunk_id. Returns false when `chunk_id` is not of the form
// "<doc>_chunk<n>" with n >= 1.
bool parse_chunk_id(std::string_view chunk_id, std::string& doc_id, std::size_t& chunk_index);

// JSON Lines, one object per chunk: doc_id, chunk_id, chunk_index, text,
// word_count.
std::string chunks_to_jsonl(const std::vector<Chunk>& chunks);
std::vector<Chunk> chunks_from_jsonl(std::string_view jsonl);

}  // namespace lens::ingest
