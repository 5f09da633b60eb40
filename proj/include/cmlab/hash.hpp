// FNV-1a 64-bit content hashing: config hashes for run directories, artifact
// digests in manifests, checkpoint identity checks. Not cryptographic.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace cmlab {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* data, size_t len,
                        uint64_t seed = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), seed);
}

std::string hex64(uint64_t v);
uint64_t hash_file(const std::string& path);

}  // namespace cmlab
