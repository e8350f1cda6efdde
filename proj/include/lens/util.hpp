#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace lens::util {

// 64-bit FNV-1a. Stable across platforms and runs.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value);

// Calls fn(i) for i in [0, n) across up to `threads` workers (0 = hardware
// concurrency). fn must only write to state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t threads = 0);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, flushes, then renames over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

}  // namespace lens::util
