#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace textmill {

// Murmur3 64-bit finalizer. Bijective, full avalanche.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

// The toolkit's declared 64-bit byte hash: FNV-1a over the bytes with the
// seed folded into the offset basis, followed by mix64. Stable across
// platforms and releases; SimHash features, window keys and counter RNG keys
// all depend on it.
constexpr std::uint64_t hash64(std::string_view bytes, std::uint64_t seed = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed + 0x9e3779b97f4a7c15ULL);
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(h ^ bytes.size());
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

using Md5Digest = std::array<std::uint8_t, 16>;

Md5Digest md5(std::string_view bytes);

std::string to_hex(const Md5Digest& digest);
std::string to_hex(std::uint64_t value);

// Hex md5 of arbitrary bytes; used for config, tokenizer and eval-set
// fingerprints.
inline std::string fingerprint(std::string_view bytes) { return to_hex(md5(bytes)); }

}  // namespace textmill
