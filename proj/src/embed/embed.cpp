#include "lens/embed.hpp"

#include <cmath>
#include <cstdlib>

#include "lens/error.hpp"
#include "lens/util.hpp"
#include "net/http_post.hpp"

namespace lens::embed {

namespace {

constexpr double kNormTolerance = 1e-6;

std::vector<float> normalize(std::span<const double> raw) {
  double sq = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw ContractError("embedding has a non-finite component");
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError("embedding cannot be normalized");
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] / norm);
  return out;
}

void add_feature(std::vector<double>& acc, std::string_view feature) {
  const auto h = util::fnv1a64(feature);
  const auto coord = static_cast<std::size_t>(h % acc.size());
  acc[coord] += (h >> 63) ? -1.0 : 1.0;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::span<const double> raw) : values_(normalize(raw)) {}

EmbeddingVector EmbeddingVector::from_normalized(std::vector<float> values) {
  double sq = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw ContractError("embedding has a non-finite component");
    sq += static_cast<double>(v) * v;
  }
  if (values.empty() || std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
    throw ContractError("embedding is not unit norm");
  }
  EmbeddingVector out;
  out.values_ = std::move(values);
  return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ContractError("dot product of vectors with different dimensions");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return dot(a.values(), b.values()); }

void ProviderConfig::validate() const {
  if (dim < 2) throw ConfigError("embedding dim must be >= 2");
  if (batch_size < 1) throw ConfigError("embedding batch_size must be >= 1");
  if (max_concurrency < 1) throw ConfigError("embedding max_concurrency must be >= 1");
  if (kind == ProviderKind::remote && endpoint_url.empty()) {
    throw ConfigError("remote embedding provider needs endpoint_url (or EMBED_ENDPOINT)");
  }
}

namespace {

std::vector<double> hash_features(std::string_view text, std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  bool any = false;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const auto start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) break;
    // Case and surrounding punctuation do not change meaning here, so
    // "Climate" and "climate," land on the same features.
    auto b = start, e = i;
    while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b == e) continue;
    std::string token(text.substr(b, e - b));
    for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    any = true;
    add_feature(acc, token);
    for (std::size_t k = 0; k + 3 <= token.size(); ++k) add_feature(acc, std::string_view(token).substr(k, 3));
  }
  bool nonzero = false;
  for (double v : acc) nonzero = nonzero || v != 0.0;
  if (!any || !nonzero) {
    // Empty input, or features that cancel exactly.
    std::fill(acc.begin(), acc.end(), 0.0);
    acc[0] = 1.0;
  }
  return acc;
}

}  // namespace

EmbeddingVector local_deterministic_embed(std::string_view text, std::size_t dim) {
  if (dim < 2) throw ConfigError("embedding dim must be >= 2");
  return EmbeddingVector(hash_features(text, dim));
}

LocalDeterministicProvider::LocalDeterministicProvider(std::size_t dim, std::size_t batch_size)
    : dim_(dim), batch_size_(batch_size) {
  if (dim < 2) throw ConfigError("embedding dim must be >= 2");
  if (batch_size < 1) throw ConfigError("embedding batch_size must be >= 1");
}

std::vector<std::vector<double>> LocalDeterministicProvider::embed_batch(
    std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_features(t, dim_));
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  net::parse_endpoint(cfg_.endpoint_url);
}

std::vector<std::vector<double>> RemoteEmbeddingProvider::embed_batch(
    std::span<const std::string> texts) const {
  nlohmann::json body;
  body["model"] = cfg_.model_name;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());

  net::PostOptions opts;
  opts.api_key = cfg_.api_key;
  opts.timeout = cfg_.timeout;
  opts.max_retries = cfg_.max_retries;
  opts.backoff_base = cfg_.backoff_base;
  const auto response = net::post_json(cfg_.endpoint_url, body, opts);

  if (!response.contains("data") || !response["data"].is_array()) {
    throw ContractError("embedding response lacks a data array");
  }
  const auto& data = response["data"];
  if (data.size() != texts.size()) {
    throw ContractError("embedding response has " + std::to_string(data.size()) + " vectors for " +
                        std::to_string(texts.size()) + " inputs");
  }
  std::vector<std::vector<double>> out(texts.size());
  std::vector<bool> seen(texts.size(), false);
  for (std::size_t pos = 0; pos < data.size(); ++pos) {
    const auto& item = data[pos];
    const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : pos;
    if (idx >= texts.size() || seen[idx]) throw ContractError("embedding response has a bad index");
    seen[idx] = true;
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      throw ContractError("embedding response item lacks an embedding array");
    }
    out[idx] = item["embedding"].get<std::vector<double>>();
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case ProviderKind::local_deterministic:
      return std::make_unique<LocalDeterministicProvider>(cfg.dim, cfg.batch_size);
    case ProviderKind::remote:
      return std::make_unique<RemoteEmbeddingProvider>(cfg);
  }
  throw ConfigError("unknown provider kind");
}

void apply_env(ProviderConfig& cfg) {
  auto fill = [](std::string& field, const char* var) {
    if (!field.empty()) return;
    if (const char* v = std::getenv(var)) field = v;
  };
  fill(cfg.endpoint_url, "EMBED_ENDPOINT");
  if (cfg.kind == ProviderKind::remote) fill(cfg.model_name, "EMBED_MODEL");
  fill(cfg.api_key, "EMBED_API_KEY");
}

std::vector<EmbeddingVector> embed_texts(const EmbeddingProvider& provider,
                                         std::span<const std::string> texts) {
  if (texts.empty()) throw ContractError("embed_texts needs at least one text");
  for (const auto& t : texts) {
    if (t.empty()) throw ContractError("embed_texts got an empty text");
  }
  const auto batch = provider.batch_size();
  const auto num_batches = (texts.size() + batch - 1) / batch;
  std::vector<EmbeddingVector> out(texts.size());
  util::parallel_for(
      num_batches,
      [&](std::size_t b) {
        const auto begin = b * batch;
        const auto len = std::min(batch, texts.size() - begin);
        auto raw = provider.embed_batch(texts.subspan(begin, len));
        if (raw.size() != len) throw ContractError("provider returned the wrong number of vectors");
        for (std::size_t i = 0; i < len; ++i) {
          if (raw[i].size() != provider.dim()) {
            throw ContractError("provider returned a " + std::to_string(raw[i].size()) +
                                "-dim vector, expected " + std::to_string(provider.dim()));
          }
          out[begin + i] = EmbeddingVector(raw[i]);
        }
      },
      provider.max_concurrency());
  return out;
}

std::vector<EmbeddedChunk> embed_chunks(const EmbeddingProvider& provider,
                                        const std::vector<ingest::Chunk>& chunks) {
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = embed_texts(provider, texts);
  std::vector<EmbeddedChunk> out;
  out.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) out.push_back({chunks[i], std::move(vectors[i])});
  return out;
}

}  // namespace lens::embed
