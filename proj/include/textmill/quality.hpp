#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textmill/corpus.hpp"
#include "textmill/tokenizer.hpp"

namespace textmill {

namespace reject {
inline constexpr std::string_view kPlaceholder = "placeholder";
inline constexpr std::string_view kCodeLike = "code_like";
inline constexpr std::string_view kSymbolHeavy = "symbol_heavy";
inline constexpr std::string_view kTooShort = "too_short";
inline constexpr std::string_view kTooFewLines = "too_few_lines";
}  // namespace reject

// Rule-based noise filters, evaluated in this fixed order:
//   1. blacklist phrase present          -> placeholder
//   2. brace density > max_brace_density -> code_like
//   3. symbol ratio > max_symbol_ratio   -> symbol_heavy
//   4. content tokens < min_tokens       -> too_short
//   5. content lines < min_lines         -> too_few_lines
// Densities are over non-whitespace codepoints. Braces are '{', '}', ';'.
// Symbol ratio counts punctuation and symbol codepoints. A content line is a
// non-blank line whose last non-closing-quote codepoint is terminal
// punctuation. Content tokens exclude whitespace tokens.
struct RuleSet {
  bool use_blacklist = true;
  std::vector<std::string> blacklist = {"lorem ipsum"};

  bool use_brace_density = true;
  double max_brace_density = 0.05;

  bool use_symbol_ratio = true;
  double max_symbol_ratio = 0.3;

  bool use_min_tokens = true;
  std::size_t min_tokens = 32;

  bool use_min_lines = true;
  std::size_t min_lines = 3;
  std::u32string terminal_punctuation = U"。！？.!?";

  // Throws ValidationError for out-of-range thresholds.
  void validate() const;

  // Unknown keys are rejected.
  static RuleSet from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

// Returns the reject reason of the first failing rule, or nullopt to keep.
std::optional<std::string_view> apply_rules(std::string_view text, const RuleSet& rules,
                                            const Tokenizer& tokenizer);

inline std::optional<std::string_view> apply_rules(const Document& doc, const RuleSet& rules,
                                                   const Tokenizer& tokenizer) {
  return apply_rules(doc.text, rules, tokenizer);
}

struct QualityExample {
  std::string text;
  bool positive = false;
};

// Record-grammar file whose meta["label"] is "positive" or "negative".
std::vector<QualityExample> read_labeled_examples(const std::filesystem::path& path,
                                                  bool strict = false);

struct QualityConfig {
  std::vector<int> orders = {2, 3, 4};
  std::uint64_t bucket_count = std::uint64_t{1} << 20;
  std::uint64_t seed = 0;
  int epochs = 10;
  double learning_rate = 0.2;
  double l2 = 1e-6;
  // Downsample the majority class to a 1:1 positive/negative ratio.
  bool balance_classes = true;
  double keep_threshold = 0.9;

  void validate() const;
  static QualityConfig from_json(const nlohmann::json& j);
};

struct Feature {
  std::uint64_t bucket = 0;
  double value = 0.0;
};

// Hashed character n-gram logistic model. Features are log(1 + count) of
// each hashed codepoint n-gram, after collapsing whitespace runs to one
// space; p = sigmoid(bias + w . x).
class QualityModel {
 public:
  QualityModel(std::vector<int> orders, std::uint64_t bucket_count, double keep_threshold,
               std::uint64_t seed = 0);

  // Sorted by bucket, buckets unique.
  std::vector<Feature> features(std::string_view text) const;

  double score(std::string_view text) const;
  double score_features(std::span<const Feature> feats) const;
  // Strict: p must exceed the threshold.
  bool keep(double p) const { return p > keep_threshold_; }

  std::uint64_t bucket_of(std::u32string_view gram) const;

  const std::vector<int>& orders() const { return orders_; }
  std::uint64_t bucket_count() const { return weights_.size(); }
  double keep_threshold() const { return keep_threshold_; }
  std::uint64_t seed() const { return seed_; }
  double bias() const { return bias_; }
  const std::vector<double>& weights() const { return weights_; }

  void set_bias(double b) { bias_ = b; }
  void set_weight(std::uint64_t bucket, double w) { weights_.at(bucket) = w; }
  double& weight(std::uint64_t bucket) { return weights_[bucket]; }
  void set_keep_threshold(double t) { keep_threshold_ = t; }

  // Binary layout (little-endian), see docs/formats.md:
  //   "TMQM" u32 version=1 u32 n_orders i32[n_orders] u64 bucket_count
  //   u64 seed f64 keep_threshold f64 bias f64[bucket_count]
  std::string serialize() const;
  static QualityModel deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static QualityModel load(const std::filesystem::path& path);

  bool operator==(const QualityModel&) const = default;

 private:
  std::vector<int> orders_;
  std::vector<double> weights_;
  double bias_ = 0.0;
  double keep_threshold_ = 0.9;
  std::uint64_t seed_ = 0;
};

double sigmoid(double z);

// SGD on logistic loss, one pass per epoch in a seed-determined order.
// Bit-reproducible for a given (examples, config). Throws ValidationError on
// empty or single-class input.
QualityModel train_quality_model(std::span<const QualityExample> examples,
                                 const QualityConfig& config);

}  // namespace textmill
