#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lens/embed.hpp"

namespace lens::index {

// File layout (all integers little-endian):
//   "LENSIDX1" | version u32 | dim u32 | count u64
//   metadata length u64 | UTF-8 JSON array of {chunk_id, doc_id, text}
//   count * dim float32 vectors in entry order
//   CRC-32 (IEEE) of every preceding byte, u32
inline constexpr std::string_view kMagic = "LENSIDX1";
inline constexpr std::uint32_t kFormatVersion = 1;

struct Hit {
  std::string chunk_id;
  std::string doc_id;
  double score = 0.0;
  std::string text;

  bool operator==(const Hit&) const = default;
};

struct RetrievalResult {
  std::vector<Hit> hits;  // score desc, ties by chunk_id asc
};

struct Entry {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
};

// Exact cosine top-k over unit vectors. Readers (search, save, accessors)
// share a lock; upsert takes it exclusively, so a search never sees half a
// batch.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim);
  VectorIndex(VectorIndex&& other) noexcept;
  VectorIndex& operator=(VectorIndex&& other) noexcept;
  VectorIndex(const VectorIndex&) = delete;
  VectorIndex& operator=(const VectorIndex&) = delete;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  // Appends new chunk ids and replaces vector and text of existing ones.
  // Validates the whole batch before touching the index. Returns the number
  // of items processed.
  std::size_t upsert(const std::vector<embed::EmbeddedChunk>& items);

  // Throws EmptyIndexError on an empty index and UsageError for k == 0.
  RetrievalResult search(const embed::EmbeddingVector& query, std::size_t k) const;

  Entry entry(std::size_t position) const;
  embed::EmbeddingVector vector(std::size_t position) const;
  std::ptrdiff_t position_of(std::string_view chunk_id) const;

  // Serializes a consistent snapshot.
  std::string serialize() const;
  static VectorIndex deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::size_t dim_;
  std::vector<Entry> entries_;
  std::vector<float> vectors_;  // entries_.size() * dim_
  std::unordered_map<std::string, std::size_t> id_map_;
  mutable std::shared_mutex mutex_;
};

std::uint32_t crc32(std::string_view bytes);

}  // namespace lens::index
