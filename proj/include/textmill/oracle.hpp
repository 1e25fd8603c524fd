#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "textmill/corpus.hpp"
#include "textmill/error.hpp"
#include "textmill/tokenizer.hpp"

namespace textmill {

// Language-model contract used by the probe and the classifier. Both
// operations are deterministic. logprob returns the sum of natural-log
// probabilities of `continuation` given `context`.
class GenerationOracle {
 public:
  virtual ~GenerationOracle() = default;

  virtual std::vector<TokenId> greedy_continue(std::span<const TokenId> context,
                                               std::size_t max_new) const = 0;
  virtual double logprob(std::span<const TokenId> context,
                         std::span<const TokenId> continuation) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

class OracleError : public Error {
 public:
  OracleError(const std::string& code, const std::string& message)
      : Error(code + ": " + message), code_(code) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Interpolated absolute discounting:
//   P(w|h) = max(c(h,w) - D, 0) / c(h) + D * N1+(h) / c(h) * P(w|h')
// where h' drops the oldest token of h, c(h) = sum_w c(h,w), levels with
// c(h) = 0 are skipped, and the base distribution is uniform over the
// vocabulary. Counts are taken within each sequence, without padding.
class BackoffNGramOracle final : public GenerationOracle {
 public:
  static constexpr double kDefaultDiscount = 0.75;
  static constexpr std::size_t kDefaultOrder = 5;

  // Throws ValidationError for order == 0, vocab_size == 0, an empty corpus,
  // a token id >= vocab_size, or a discount outside (0, 1].
  static BackoffNGramOracle train(std::span<const std::vector<TokenId>> sequences,
                                  std::size_t vocab_size, std::size_t order = kDefaultOrder,
                                  double discount = kDefaultDiscount);

  double prob(std::span<const TokenId> context, TokenId token) const;
  // Full next-token distribution; sums to 1.
  std::vector<double> distribution(std::span<const TokenId> context) const;
  // Most probable next token; ties go to the smallest id.
  TokenId argmax(std::span<const TokenId> context) const;

  std::vector<TokenId> greedy_continue(std::span<const TokenId> context,
                                       std::size_t max_new) const override;
  double logprob(std::span<const TokenId> context,
                 std::span<const TokenId> continuation) const override;
  std::size_t vocab_size() const override { return vocab_size_; }

  std::size_t order() const { return order_; }
  double discount() const { return discount_; }
  std::size_t node_count() const { return offsets_.size() - 1; }

  bool operator==(const BackoffNGramOracle& o) const {
    return order_ == o.order_ && vocab_size_ == o.vocab_size_ && discount_ == o.discount_ &&
           children_ == o.children_ && offsets_ == o.offsets_ && followers_ == o.followers_ &&
           totals_ == o.totals_ && root_by_count_ == o.root_by_count_ &&
           first_unseen_ == o.first_unseen_ && has_unseen_ == o.has_unseen_;
  }

 private:
  BackoffNGramOracle() = default;

  struct Follower {
    TokenId token;
    std::uint32_t count;
    bool operator==(const Follower&) const = default;
  };

  // Node ids along the history path of `context`, shortest history first.
  void history_path(std::span<const TokenId> context, std::vector<std::uint32_t>& path) const;
  std::uint32_t child(std::uint32_t node, TokenId token) const;
  std::span<const Follower> followers(std::uint32_t node) const;
  std::uint32_t follower_count(std::uint32_t node, TokenId token) const;
  double prob_along(std::span<const std::uint32_t> path, TokenId token) const;
  void check_ids(std::span<const TokenId> ids) const;

  std::size_t order_ = kDefaultOrder;
  std::size_t vocab_size_ = 0;
  double discount_ = kDefaultDiscount;
  // History trie, most recent token first. Node 0 is the empty history.
  std::unordered_map<std::uint64_t, std::uint32_t> children_;
  // CSR follower lists sorted by token id.
  std::vector<std::uint64_t> offsets_;
  std::vector<Follower> followers_;
  std::vector<std::uint64_t> totals_;
  // Root followers by count desc, id asc; and the smallest unseen id.
  std::vector<TokenId> root_by_count_;
  TokenId first_unseen_ = 0;
  bool has_unseen_ = false;
};

// Interns content tokens (whitespace tokens removed) in canonical order,
// with <unk> at id 0, and trains an order-N oracle on the result.
struct TrainedOracle {
  Vocabulary vocab;
  BackoffNGramOracle oracle;
};
TrainedOracle train_ngram_oracle(std::span<const Document> corpus, const Tokenizer& tokenizer,
                                 std::size_t order = BackoffNGramOracle::kDefaultOrder);

// Content-token ids of `text`; unknown tokens map to vocab.unk().
std::vector<TokenId> oracle_ids(std::string_view text, const Tokenizer& tokenizer,
                                const Vocabulary& vocab);

// ------------------------------------------------- external oracle protocol
//
// Line-delimited JSON over stdin/stdout, version 1. See docs/formats.md.
//   -> {"v":1,"id":0,"op":"hello"}
//   <- {"v":1,"id":0,"vocab_size":V}
//   -> {"v":1,"id":n,"op":"greedy","context":[..],"max_new":k}
//   <- {"v":1,"id":n,"tokens":[..]}
//   -> {"v":1,"id":n,"op":"logprob","context":[..],"continuation":[..]}
//   <- {"v":1,"id":n,"logprob":x}
// Any request may instead get {"v":1,"id":n,"error":{"code":..,"message":..}}.

inline constexpr int kOracleProtocolVersion = 1;

// Answers requests from `in` until EOF. Returns the number of requests
// served. Malformed requests get error responses; the loop keeps going.
std::size_t serve_oracle(const GenerationOracle& oracle, std::istream& in, std::ostream& out);

// Handles one request line; exposed for testing.
std::string handle_oracle_request(const GenerationOracle& oracle, const std::string& line);

// Runs an external oracle as a child process. Every call is one round trip;
// a response that does not arrive within `timeout` kills the child and
// raises OracleError("timeout", ..).
class SubprocessOracle final : public GenerationOracle {
 public:
  SubprocessOracle(std::vector<std::string> argv,
                   std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~SubprocessOracle() override;
  SubprocessOracle(const SubprocessOracle&) = delete;
  SubprocessOracle& operator=(const SubprocessOracle&) = delete;

  std::vector<TokenId> greedy_continue(std::span<const TokenId> context,
                                       std::size_t max_new) const override;
  double logprob(std::span<const TokenId> context,
                 std::span<const TokenId> continuation) const override;
  std::size_t vocab_size() const override { return vocab_size_; }

 private:
  std::string round_trip(const std::string& request) const;
  void shutdown() const;

  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  mutable int pid_ = -1;
  mutable int to_child_ = -1;
  mutable int from_child_ = -1;
  mutable std::string buffer_;
  mutable std::uint64_t next_id_ = 0;
  std::size_t vocab_size_ = 0;
};

}  // namespace textmill
