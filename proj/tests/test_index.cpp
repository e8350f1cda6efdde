#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <thread>

#include "lens/error.hpp"
#include "lens/index.hpp"
#include "support.hpp"

using namespace lens;
using namespace lens::index;

namespace {

embed::EmbeddingVector random_vector(std::mt19937& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> raw(dim);
  for (auto& x : raw) x = g(rng);
  return embed::EmbeddingVector(raw);
}

embed::EmbeddedChunk item(const std::string& id, embed::EmbeddingVector v, const std::string& text = "") {
  embed::EmbeddedChunk e;
  e.chunk.chunk_id = id;
  e.chunk.doc_id = id.substr(0, id.find('_'));
  e.chunk.text = text.empty() ? "text of " + id : text;
  e.vector = std::move(v);
  return e;
}

std::vector<embed::EmbeddedChunk> random_items(std::mt19937& rng, std::size_t n, std::size_t dim) {
  std::vector<embed::EmbeddedChunk> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(item("d" + std::to_string(i) + "_chunk1", random_vector(rng, dim)));
  return out;
}

// Full sort of every entry by (score desc, chunk_id asc).
std::vector<Hit> brute_force(const std::vector<embed::EmbeddedChunk>& items, const embed::EmbeddingVector& q,
                             std::size_t k) {
  std::vector<Hit> all;
  for (const auto& it : items) {
    double s = 0;
    for (std::size_t d = 0; d < q.dim(); ++d) s += double(q[d]) * double(it.vector[d]);
    all.push_back({it.chunk.chunk_id, it.chunk.doc_id, s, it.chunk.text});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST_CASE("upsert appends and replaces") {
  std::mt19937 rng(1);
  VectorIndex idx(8);
  CHECK(idx.empty());
  auto items = random_items(rng, 3, 8);
  CHECK(idx.upsert(items) == 3);
  CHECK(idx.size() == 3);
  const auto replacement = random_vector(rng, 8);
  CHECK(idx.upsert({item("d1_chunk1", replacement, "new text")}) == 1);
  CHECK(idx.size() == 3);
  CHECK(idx.vector(1) == replacement);
  CHECK(idx.entry(1).text == "new text");
  CHECK(idx.position_of("d1_chunk1") == 1);
  CHECK(idx.position_of("nope") == -1);
}

TEST_CASE("upsert validates the whole batch first") {
  std::mt19937 rng(2);
  VectorIndex idx(8);
  auto batch = random_items(rng, 3, 8);
  batch.push_back(item("bad_chunk1", random_vector(rng, 7)));
  CHECK_THROWS_AS(idx.upsert(batch), ContractError);
  CHECK(idx.size() == 0);
}

TEST_CASE("search basics") {
  std::mt19937 rng(3);
  VectorIndex idx(16);
  CHECK_THROWS_AS(idx.search(random_vector(rng, 16), 3), EmptyIndexError);
  const auto items = random_items(rng, 10, 16);
  idx.upsert(items);
  const auto self = idx.search(items[4].vector, 1);
  REQUIRE(self.hits.size() == 1);
  CHECK(self.hits[0].chunk_id == items[4].chunk.chunk_id);
  CHECK(std::abs(self.hits[0].score - 1.0) < 1e-6);
  CHECK(idx.search(items[0].vector, 50).hits.size() == 10);
  CHECK_THROWS_AS(idx.search(items[0].vector, 0), UsageError);
  CHECK_THROWS_AS(idx.search(random_vector(rng, 15), 1), ContractError);
}

TEST_CASE("ties break by chunk id") {
  VectorIndex idx(2);
  const std::vector<double> e1{1.0, 0.0};
  idx.upsert({item("b_chunk1", embed::EmbeddingVector(e1)), item("a_chunk1", embed::EmbeddingVector(e1)),
              item("c_chunk1", embed::EmbeddingVector(e1))});
  const auto r = idx.search(embed::EmbeddingVector(e1), 3);
  CHECK(r.hits[0].chunk_id == "a_chunk1");
  CHECK(r.hits[1].chunk_id == "b_chunk1");
  CHECK(r.hits[2].chunk_id == "c_chunk1");
}

TEST_CASE("search equals a brute-force full sort, scores are bounded and k is monotone") {
  std::mt19937 rng(4);
  const auto items = random_items(rng, 1000, 64);
  VectorIndex idx(64);
  idx.upsert(items);
  for (int q = 0; q < 20; ++q) {
    const auto query = random_vector(rng, 64);
    const auto full = idx.search(query, 1000).hits;
    CHECK(full == brute_force(items, query, 1000));
    for (const auto& h : full) {
      CHECK(h.score >= -1 - 1e-6);
      CHECK(h.score <= 1 + 1e-6);
    }
    for (std::size_t k : {1u, 2u, 7u, 100u}) {
      const auto hits = idx.search(query, k).hits;
      CHECK(hits == std::vector<Hit>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(k)));
    }
  }
}

TEST_CASE("save/load round-trip") {
  std::mt19937 rng(5);
  lens::testing::TempDir dir;
  VectorIndex idx(32);
  idx.upsert(random_items(rng, 100, 32));
  idx.save(dir / "i.lensidx");
  const auto back = VectorIndex::load(dir / "i.lensidx");
  CHECK(back.size() == 100);
  CHECK(back.dim() == 32);
  CHECK(back.serialize() == idx.serialize());
  for (std::size_t i = 0; i < 100; ++i) {
    const auto a = idx.vector(i), b = back.vector(i);
    CHECK(std::memcmp(a.values().data(), b.values().data(), 32 * sizeof(float)) == 0);
    CHECK(back.entry(i).chunk_id == idx.entry(i).chunk_id);
  }
  for (int q = 0; q < 10; ++q) {
    const auto query = random_vector(rng, 32);
    CHECK(back.search(query, 10).hits == idx.search(query, 10).hits);
  }

  VectorIndex empty(5);
  const auto e = VectorIndex::deserialize(empty.serialize());
  CHECK(e.size() == 0);
  CHECK(e.dim() == 5);
}

TEST_CASE("header layout") {
  VectorIndex idx(3);
  const std::vector<double> v{0.0, 1.0, 0.0};
  idx.upsert({item("a_chunk1", embed::EmbeddingVector(v))});
  const auto bytes = idx.serialize();
  CHECK(bytes.substr(0, 8) == "LENSIDX1");
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);   // version, little-endian
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);  // dim
  CHECK(static_cast<unsigned char>(bytes[16]) == 1);  // count
  CHECK(crc32(bytes.substr(0, bytes.size() - 4)) ==
        (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 4])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 3])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 1])) << 24));
  CHECK(crc32("123456789") == 0xCBF43926u);
}

TEST_CASE("corrupt files raise errors naming the section") {
  std::mt19937 rng(6);
  VectorIndex idx(16);
  idx.upsert(random_items(rng, 20, 16));
  const auto bytes = idx.serialize();
  const auto meta_len = bytes.size() - 28 - 20 * 16 * 4 - 4;
  const auto vec_start = 28 + meta_len;

  auto section_of = [](const std::string& b) {
    try {
      VectorIndex::deserialize(b);
    } catch (const FormatError& e) {
      return e.section();
    }
    return std::string("none");
  };
  CHECK(section_of(bytes.substr(0, 20)) == "header");
  CHECK(section_of(bytes.substr(0, 30)) == "metadata");
  CHECK(section_of(bytes.substr(0, vec_start + 100)) == "vectors");
  CHECK(section_of(bytes.substr(0, bytes.size() - 2)) == "crc");
  auto flipped = bytes;
  flipped[vec_start + 5] ^= 0x10;
  CHECK(section_of(flipped) == "crc");
  CHECK(section_of(bytes + "x") == "crc");

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(VectorIndex::deserialize(bad_magic), VersionError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_AS(VectorIndex::deserialize(bad_version), VersionError);
  CHECK_THROWS_AS(VectorIndex::deserialize(""), FormatError);
}

TEST_CASE("readers never observe half a batch") {
  std::mt19937 rng(7);
  VectorIndex idx(8);
  idx.upsert(random_items(rng, 10, 8));
  const auto query = random_vector(rng, 8);
  std::vector<std::vector<embed::EmbeddedChunk>> batches;
  for (int b = 0; b < 50; ++b) {
    std::vector<embed::EmbeddedChunk> batch;
    for (int i = 0; i < 10; ++i) {
      batch.push_back(item("n" + std::to_string(b) + "x" + std::to_string(i) + "_chunk1", random_vector(rng, 8)));
    }
    batches.push_back(std::move(batch));
  }
  std::atomic<bool> bad{false};
  std::jthread reader([&](std::stop_token st) {
    while (!st.stop_requested()) {
      const auto n = idx.search(query, 10000).hits.size();
      if (n % 10 != 0) bad = true;
    }
  });
  for (const auto& b : batches) idx.upsert(b);
  reader.request_stop();
  reader.join();
  CHECK_FALSE(bad);
  CHECK(idx.size() == 510);
}

TEST_CASE("capacity: 58,144 chunks at dim 384") {
  std::mt19937 rng(8);
  VectorIndex idx(384);
  std::vector<embed::EmbeddedChunk> batch;
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < 58144; ++i) {
    std::vector<double> raw(384);
    for (auto& x : raw) x = u(rng);
    batch.push_back(item("doc" + std::to_string(i / 3) + "_chunk" + std::to_string(i % 3 + 1),
                         embed::EmbeddingVector(raw), "t"));
    if (batch.size() == 4096) {
      idx.upsert(batch);
      batch.clear();
    }
  }
  idx.upsert(batch);
  CHECK(idx.size() == 58144);
  lens::testing::TempDir dir;
  idx.save(dir / "big.lensidx");
  const auto back = VectorIndex::load(dir / "big.lensidx");
  CHECK(back.size() == 58144);
  const auto v = idx.vector(31337);
  CHECK(back.search(v, 1).hits[0].chunk_id == idx.entry(31337).chunk_id);
}
