#include "lens/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>

#include <zlib.h>

#include <json.hpp>

#include "lens/error.hpp"
#include "lens/util.hpp"

namespace lens::index {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le(const char* section) {
    need(sizeof(T), section);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* section) {
    need(n, section);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* section) const {
    if (remaining() < n) {
      throw FormatError(section, "truncated (need " + std::to_string(n) + " bytes, have " +
                                     std::to_string(remaining()) + ")");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in pieces.
  while (!bytes.empty()) {
    const auto n = std::min<std::size_t>(bytes.size(), 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n));
    bytes.remove_prefix(n);
  }
  return static_cast<std::uint32_t>(crc);
}

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("index dim must be >= 1");
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept : dim_(other.dim_) {
  std::unique_lock lock(other.mutex_);
  entries_ = std::move(other.entries_);
  vectors_ = std::move(other.vectors_);
  id_map_ = std::move(other.id_map_);
}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    dim_ = other.dim_;
    entries_ = std::move(other.entries_);
    vectors_ = std::move(other.vectors_);
    id_map_ = std::move(other.id_map_);
  }
  return *this;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t VectorIndex::upsert(const std::vector<embed::EmbeddedChunk>& items) {
  for (const auto& item : items) {
    if (item.vector.dim() != dim_) {
      throw ContractError("vector for " + item.chunk.chunk_id + " has dim " + std::to_string(item.vector.dim()) +
                          ", index dim is " + std::to_string(dim_));
    }
  }
  std::unique_lock lock(mutex_);
  for (const auto& item : items) {
    const auto values = item.vector.values();
    const auto it = id_map_.find(item.chunk.chunk_id);
    std::size_t pos;
    if (it == id_map_.end()) {
      pos = entries_.size();
      entries_.push_back({item.chunk.chunk_id, item.chunk.doc_id, item.chunk.text});
      vectors_.resize(vectors_.size() + dim_);
      id_map_.emplace(item.chunk.chunk_id, pos);
    } else {
      pos = it->second;
      entries_[pos].doc_id = item.chunk.doc_id;
      entries_[pos].text = item.chunk.text;
    }
    std::copy(values.begin(), values.end(), vectors_.begin() + static_cast<std::ptrdiff_t>(pos * dim_));
  }
  return items.size();
}

RetrievalResult VectorIndex::search(const embed::EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw UsageError("k must be >= 1");
  if (query.dim() != dim_) throw ContractError("query dim does not match index dim");
  std::shared_lock lock(mutex_);
  const auto n = entries_.size();
  if (n == 0) throw EmptyIndexError();

  const auto q = query.values();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = embed::dot(q, std::span<const float>(vectors_.data() + i * dim_, dim_));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto keep = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return entries_[a].chunk_id < entries_[b].chunk_id;
                    });
  RetrievalResult result;
  result.hits.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) {
    const auto& e = entries_[order[r]];
    result.hits.push_back({e.chunk_id, e.doc_id, scores[order[r]], e.text});
  }
  return result;
}

Entry VectorIndex::entry(std::size_t position) const {
  std::shared_lock lock(mutex_);
  return entries_.at(position);
}

embed::EmbeddingVector VectorIndex::vector(std::size_t position) const {
  std::shared_lock lock(mutex_);
  if (position >= entries_.size()) throw LookupError("index position out of range");
  const auto begin = vectors_.begin() + static_cast<std::ptrdiff_t>(position * dim_);
  return embed::EmbeddingVector::from_normalized(std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(dim_)));
}

std::ptrdiff_t VectorIndex::position_of(std::string_view chunk_id) const {
  std::shared_lock lock(mutex_);
  const auto it = id_map_.find(std::string(chunk_id));
  return it == id_map_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::string VectorIndex::serialize() const {
  std::shared_lock lock(mutex_);
  auto meta = nlohmann::ordered_json::array();
  for (const auto& e : entries_) {
    meta.push_back(nlohmann::ordered_json{{"chunk_id", e.chunk_id}, {"doc_id", e.doc_id}, {"text", e.text}});
  }
  const auto meta_bytes = meta.dump();

  std::string out;
  out.reserve(kMagic.size() + 24 + meta_bytes.size() + vectors_.size() * 4 + 4);
  out += kMagic;
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(out, entries_.size());
  put_le<std::uint64_t>(out, meta_bytes.size());
  out += meta_bytes;
  for (float v : vectors_) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  put_le<std::uint32_t>(out, crc32(out));
  return out;
}

VectorIndex VectorIndex::deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size(), "header") != kMagic) throw VersionError("not a lens index file (bad magic)");
  const auto version = in.le<std::uint32_t>("header");
  if (version != kFormatVersion) {
    throw VersionError("unsupported index format version " + std::to_string(version));
  }
  const auto dim = in.le<std::uint32_t>("header");
  const auto count = in.le<std::uint64_t>("header");
  if (dim == 0) throw FormatError("header", "dim is zero");

  const auto meta_len = in.le<std::uint64_t>("metadata");
  const auto meta_bytes = in.take(meta_len, "metadata");
  const auto meta = nlohmann::json::parse(meta_bytes, nullptr, false);
  if (meta.is_discarded() || !meta.is_array()) throw FormatError("metadata", "not a JSON array");
  if (meta.size() != count) {
    throw FormatError("metadata", "has " + std::to_string(meta.size()) + " entries, header says " +
                                      std::to_string(count));
  }

  VectorIndex index(dim);
  index.entries_.reserve(count);
  for (const auto& item : meta) {
    if (!item.is_object() || !item.contains("chunk_id") || !item["chunk_id"].is_string() ||
        !item.contains("doc_id") || !item["doc_id"].is_string() || !item.contains("text") ||
        !item["text"].is_string()) {
      throw FormatError("metadata", "entry lacks chunk_id/doc_id/text strings");
    }
    Entry e{item["chunk_id"].get<std::string>(), item["doc_id"].get<std::string>(), item["text"].get<std::string>()};
    if (!index.id_map_.emplace(e.chunk_id, index.entries_.size()).second) {
      throw FormatError("metadata", "duplicate chunk_id " + e.chunk_id);
    }
    index.entries_.push_back(std::move(e));
  }

  if (count > 0 && dim > (std::numeric_limits<std::size_t>::max() / 4) / count) {
    throw FormatError("vectors", "size overflows");
  }
  const auto vec_bytes = in.take(static_cast<std::size_t>(count) * dim * 4, "vectors");
  index.vectors_.resize(static_cast<std::size_t>(count) * dim);
  for (std::size_t i = 0; i < index.vectors_.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(vec_bytes[i * 4 + b])) << (8 * b);
    }
    index.vectors_[i] = std::bit_cast<float>(bits);
  }

  const auto covered = in.position();
  const auto stored_crc = in.le<std::uint32_t>("crc");
  if (in.remaining() != 0) throw FormatError("crc", "unexpected trailing bytes");
  if (stored_crc != crc32(bytes.substr(0, covered))) throw FormatError("crc", "checksum mismatch");

  for (std::size_t i = 0; i < count; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = index.vectors_[i * dim + j];
      if (!std::isfinite(v)) throw FormatError("vectors", "non-finite value in entry " + std::to_string(i));
      sq += v * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw FormatError("vectors", "entry " + std::to_string(i) + " is not unit norm");
    }
  }
  return index;
}

void VectorIndex::save(const std::filesystem::path& path) const { util::atomic_write(path, serialize()); }

VectorIndex VectorIndex::load(const std::filesystem::path& path) { return deserialize(util::read_file(path)); }

}  // namespace lens::index
