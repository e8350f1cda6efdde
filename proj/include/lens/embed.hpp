#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lens/ingest.hpp"

namespace lens::embed {

// Unit-norm dense vector. The constructor normalizes; a zero or non-finite
// input violates the contract.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::span<const double> raw);

  // Adopts already-normalized float values as-is, checking the norm.
  static EmbeddingVector from_normalized(std::vector<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<float> values_;
};

// Dot product accumulated in double; equals cosine for unit vectors.
double dot(std::span<const float> a, std::span<const float> b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct EmbeddedChunk {
  ingest::Chunk chunk;
  EmbeddingVector vector;
};

enum class ProviderKind { remote, local_deterministic };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::local_deterministic;
  std::string endpoint_url;  // remote only, e.g. http://host:8080/v1/embeddings
  std::string model_name = "hash-trigram";
  std::string api_key;       // sent as a bearer token when non-empty
  std::size_t dim = 384;
  std::size_t batch_size = 64;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_retries = 3;
  std::size_t max_concurrency = 4;  // in-flight remote batches
  std::chrono::milliseconds backoff_base{200};

  void validate() const;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t batch_size() const = 0;
  virtual std::size_t max_concurrency() const { return 1; }

  // Raw, not necessarily normalized, vectors for one batch, in input order.
  virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) const = 0;
};

// Feature hashing over whitespace tokens (ASCII-lowercased, surrounding
// punctuation trimmed) and their byte trigrams: FNV-1a 64 picks the
// coordinate (hash mod dim) and the sign (bit 63). The empty token set maps
// to e_1.
EmbeddingVector local_deterministic_embed(std::string_view text, std::size_t dim);

class LocalDeterministicProvider final : public EmbeddingProvider {
 public:
  explicit LocalDeterministicProvider(std::size_t dim, std::size_t batch_size = 64);

  std::string name() const override { return "local-deterministic"; }
  std::size_t dim() const override { return dim_; }
  std::size_t batch_size() const override { return batch_size_; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::size_t batch_size_;
};

// Client for the common embeddings API shape: POST {"model", "input": [...]}
// answered by {"data": [{"index", "embedding": [...]}, ...]}.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(ProviderConfig cfg);

  std::string name() const override { return "remote:" + cfg_.model_name; }
  std::size_t dim() const override { return cfg_.dim; }
  std::size_t batch_size() const override { return cfg_.batch_size; }
  std::size_t max_concurrency() const override { return cfg_.max_concurrency; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) const override;

 private:
  ProviderConfig cfg_;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg);

// Fills empty endpoint/model/key fields from EMBED_ENDPOINT, EMBED_MODEL and
// EMBED_API_KEY.
void apply_env(ProviderConfig& cfg);

// Embeds `texts` in provider-sized batches; output order matches input.
// Throws ContractError on empty input, wrong dimension, or a vector that
// cannot be normalized.
std::vector<EmbeddingVector> embed_texts(const EmbeddingProvider& provider,
                                         std::span<const std::string> texts);

std::vector<EmbeddedChunk> embed_chunks(const EmbeddingProvider& provider,
                                        const std::vector<ingest::Chunk>& chunks);

}  // namespace lens::embed
