#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "textmill/corpus.hpp"
#include "textmill/tokenizer.hpp"

namespace textmill {

namespace reject {
inline constexpr std::string_view kContaminated = "contaminated";
}  // namespace reject

inline constexpr std::size_t kDefaultWindow = 17;

// How shared n-grams are counted toward the ">= 2 matches" part of the rule.
enum class MatchSemantics {
  kOverlapping,  // distinct matched window keys; one shared (n+1)-span counts 2
  kDisjoint,     // non-overlapping matched windows, scanned left to right
};

MatchSemantics parse_match_semantics(std::string_view name);

// Content tokens (whitespace tokens removed) of `text` under `tokenizer`.
std::vector<std::string_view> content_tokens(std::string_view text, const Tokenizer& tokenizer);

// One key per length-n window: a polynomial rolling hash over the per-token
// hash64 values, finalized with mix64. Empty when there are fewer than n
// tokens.
std::vector<std::uint64_t> window_keys(std::span<const std::string_view> tokens, std::size_t n);

// Sorted, unique window keys built from evaluation documents.
class ContaminationIndex {
 public:
  ContaminationIndex() = default;
  ContaminationIndex(std::size_t n, std::vector<std::uint64_t> keys, std::string tokenizer_fp);

  bool contains(std::uint64_t key) const;

  std::size_t n() const { return n_; }
  const std::vector<std::uint64_t>& keys() const { return keys_; }
  const std::string& tokenizer_fingerprint() const { return tokenizer_fp_; }
  // md5 over the sorted key array: insensitive to eval order and duplicates.
  const std::string& eval_fingerprint() const { return eval_fp_; }
  bool empty() const { return keys_.empty(); }

  // Binary layout, see docs/formats.md:
  //   "TMCI" u32 version=1 u32 n u32 len tokenizer_fp u32 len eval_fp
  //   u64 count u64[count] keys (ascending)
  void save(const std::filesystem::path& path) const;
  static ContaminationIndex load(const std::filesystem::path& path);

  bool operator==(const ContaminationIndex&) const = default;

 private:
  std::size_t n_ = kDefaultWindow;
  std::vector<std::uint64_t> keys_;
  std::string tokenizer_fp_;
  std::string eval_fp_;
};

// Throws ValidationError for n == 0. An empty eval set yields a valid but
// vacuous index.
ContaminationIndex build_eval_index(std::span<const Document> eval_docs,
                                    const Tokenizer& tokenizer, std::size_t n = kDefaultWindow,
                                    unsigned workers = 1);

struct ContaminationVerdict {
  bool remove = false;
  std::size_t matched_count = 0;
  // Some 2n-token window has all n+1 of its n-grams in the index.
  bool has_double_window = false;
};

// remove iff matched_count >= 2 or has_double_window.
ContaminationVerdict check_document(std::string_view text, const ContaminationIndex& index,
                                    const Tokenizer& tokenizer,
                                    MatchSemantics semantics = MatchSemantics::kOverlapping);

}  // namespace textmill
