#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "textmill/corpus.hpp"
#include "textmill/hashing.hpp"

namespace textmill {

namespace reject {
inline constexpr std::string_view kEmptyAfterNormalize = "empty_after_normalize";
inline constexpr std::string_view kExactDuplicate = "exact_duplicate";
inline constexpr std::string_view kNearDuplicate = "near_duplicate";
}  // namespace reject

// Drops every whitespace and Unicode punctuation codepoint.
std::string normalize_for_dedup(std::string_view text);

struct ExactKey {
  Md5Digest digest{};
  OrderKey order;
};

// md5 of the UTF-8 bytes of the normalized text; nullopt when normalization
// leaves nothing (the document is then rejected as empty_after_normalize).
std::optional<ExactKey> exact_key(const Document& doc);

// Indices (into `docs`) of documents to keep: for each digest the document
// with the smallest order key. `reasons` receives a reject reason for every
// index not kept. Keys may be precomputed in parallel; the decision itself
// does not depend on input order.
std::vector<std::size_t> exact_dedup(std::span<const Document> docs,
                                     std::span<const std::optional<ExactKey>> keys,
                                     std::vector<std::string_view>* reasons = nullptr);

// ---------------------------------------------------------------- SimHash

inline constexpr std::uint64_t kSimHashSeed = 0x5348'2d33'6772'616dULL;  // "SH-3gram"
inline constexpr std::size_t kSimHashShingle = 3;

struct SimHashSignature {
  std::uint64_t fingerprint = 0;
  std::string id;
  OrderKey order;

  bool operator==(const SimHashSignature&) const = default;
};

// Weighted feature multiset: character 3-grams of the normalized text with
// occurrence counts (a text of 1-2 codepoints is a single feature).
std::unordered_map<std::string, std::uint32_t> simhash_features(std::string_view normalized);

// Bit i is set iff sum over features of count * (bit i of hash64(gram,
// kSimHashSeed) ? +1 : -1) is > 0. nullopt when there are no features.
std::optional<std::uint64_t> simhash(std::string_view text);

inline int hamming_distance(std::uint64_t a, std::uint64_t b) {
  return __builtin_popcountll(a ^ b);
}

// Splits the 64 fingerprint bits into `bands` contiguous blocks; two
// fingerprints within Hamming distance `radius` < bands agree exactly on at
// least one block.
class BandedIndex {
 public:
  BandedIndex(int bands, int radius);

  void insert(std::uint32_t item, std::uint64_t fingerprint);

  // Calls fn(a, b) with a < b for every pair sharing at least one block
  // (pairs may repeat across blocks).
  template <typename Fn>
  void for_each_candidate(Fn&& fn) const {
    for (const auto& table : tables_) {
      for (const auto& [_, items] : table) {
        for (std::size_t i = 0; i < items.size(); ++i) {
          for (std::size_t j = i + 1; j < items.size(); ++j) fn(items[i], items[j]);
        }
      }
    }
  }

  int bands() const { return bands_; }
  int radius() const { return radius_; }
  std::uint64_t band_key(int band, std::uint64_t fingerprint) const;

 private:
  int bands_;
  int radius_;
  std::vector<int> offsets_;  // bands_ + 1 bit offsets
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> tables_;
};

struct NearCluster {
  std::size_t kept = 0;               // index with the smallest order key
  std::vector<std::size_t> members;   // sorted, includes kept
};

struct NearDedupResult {
  std::vector<std::size_t> removed;   // sorted indices into the signature list
  std::vector<NearCluster> clusters;  // size >= 2, ordered by kept member's order key
  std::size_t candidate_pairs = 0;
  std::size_t verified_pairs = 0;
};

// Clusters = connected components of pairs within Hamming distance `radius`;
// every member but the one with the smallest order key is removed. Throws
// ValidationError unless 0 <= radius < bands <= 64.
NearDedupResult near_dedup(std::span<const SimHashSignature> signatures, int radius = 3,
                           int bands = 4);

// Binary signature file, see docs/formats.md:
//   "TMSG" u32 version=1 u64 count, then per record
//   u32 shard u64 record u64 fingerprint u32 id_len id bytes
void write_signatures(const std::filesystem::path& path,
                      std::span<const SimHashSignature> signatures);
std::vector<SimHashSignature> read_signatures(const std::filesystem::path& path);

}  // namespace textmill
