#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textmill {

using TokenId = std::uint32_t;

// Token <-> id table. On disk: one token per line, line number = id, with
// "\n", "\r" and "\\" written as two-character escapes. "<unk>" is appended
// if the file does not contain it.
class Vocabulary {
 public:
  static constexpr std::string_view kUnkToken = "<unk>";

  // Contains only "<unk>" (id 0).
  Vocabulary();

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Returns the existing id or appends the token.
  TokenId intern(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id_or_unk(std::string_view token) const;

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  TokenId unk() const { return unk_; }
  std::size_t max_token_bytes() const { return max_bytes_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId unk_ = 0;
  std::size_t max_bytes_ = 0;
};

// The run tokenizer. Tokens are always contiguous substrings of the input, so
// concatenating them reproduces the text exactly when whitespace is
// preserved.
//
// Default mixed-script rule: each CJK ideograph is one token; each maximal
// run of letters/digits is one token; each punctuation or symbol codepoint is
// one token; each maximal whitespace run is one token when preserved and is
// dropped otherwise.
//
// Vocabulary rule: greedy longest match against the vocabulary inside
// whitespace-delimited segments, one codepoint when nothing matches.
class Tokenizer {
 public:
  static Tokenizer mixed_script(bool preserve_whitespace = true);
  static Tokenizer with_vocabulary(Vocabulary vocab, bool preserve_whitespace = true);
  static Tokenizer from_vocab_file(const std::filesystem::path& path,
                                   bool preserve_whitespace = true);

  // Views into `text`; valid while `text` is.
  std::vector<std::string_view> split(std::string_view text) const;
  std::vector<std::string> tokenize(std::string_view text) const;
  std::size_t count(std::string_view text) const;

  static std::string detokenize(std::span<const std::string> tokens);
  static std::string detokenize(std::span<const std::string_view> tokens);
  static bool is_whitespace_token(std::string_view token);

  const std::string& name() const { return name_; }
  bool preserve_whitespace() const { return preserve_whitespace_; }
  // Identifies the tokenizer in manifests and index headers.
  std::string fingerprint() const;
  const Vocabulary* vocabulary() const { return vocab_.get(); }

 private:
  Tokenizer() = default;

  template <typename Emit>
  void scan_mixed(std::string_view text, Emit&& emit) const;
  void split_vocab(std::string_view text, std::vector<std::string_view>& out) const;

  std::string name_;
  bool preserve_whitespace_ = true;
  std::shared_ptr<const Vocabulary> vocab_;
};

// Maps text to ids; tokens missing from the vocabulary become vocab.unk().
std::vector<TokenId> encode(std::string_view text, const Tokenizer& tokenizer,
                            const Vocabulary& vocab);

}  // namespace textmill
