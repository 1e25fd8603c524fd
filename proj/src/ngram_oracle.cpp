#include <algorithm>
#include <cmath>

#include "textmill/decontam.hpp"
#include "textmill/oracle.hpp"

namespace textmill {

namespace {

constexpr std::uint32_t kNoNode = 0xFFFFFFFFu;

std::uint64_t edge_key(std::uint64_t node, TokenId token) { return (node << 32) | token; }

}  // namespace

BackoffNGramOracle BackoffNGramOracle::train(std::span<const std::vector<TokenId>> sequences,
                                             std::size_t vocab_size, std::size_t order,
                                             double discount) {
  if (order == 0) throw ValidationError("n-gram order must be >= 1");
  if (vocab_size == 0) throw ValidationError("vocabulary is empty");
  if (!(discount > 0.0 && discount <= 1.0)) throw ValidationError("discount must be in (0, 1]");
  std::size_t total_tokens = 0;
  for (const auto& s : sequences) total_tokens += s.size();
  if (total_tokens == 0) throw ValidationError("cannot train an n-gram oracle on an empty corpus");

  BackoffNGramOracle m;
  m.order_ = order;
  m.vocab_size_ = vocab_size;
  m.discount_ = discount;
  m.check_ids({});

  std::uint32_t nodes = 1;
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  for (const auto& seq : sequences) {
    m.check_ids(seq);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const TokenId w = seq[i];
      std::uint32_t node = 0;
      ++counts[edge_key(node, w)];
      for (std::size_t k = 1; k < order && k <= i; ++k) {
        auto [it, inserted] = m.children_.try_emplace(edge_key(node, seq[i - k]), nodes);
        if (inserted) {
          if (nodes == kNoNode) throw ValidationError("n-gram trie too large");
          ++nodes;
        }
        node = it->second;
        ++counts[edge_key(node, w)];
      }
    }
  }

  std::vector<std::pair<std::uint64_t, std::uint32_t>> entries(counts.begin(), counts.end());
  counts.clear();
  std::sort(entries.begin(), entries.end());
  m.offsets_.assign(nodes + 1, 0);
  m.totals_.assign(nodes, 0);
  m.followers_.reserve(entries.size());
  for (const auto& [key, c] : entries) {
    const auto node = static_cast<std::uint32_t>(key >> 32);
    m.followers_.push_back({static_cast<TokenId>(key & 0xFFFFFFFFu), c});
    ++m.offsets_[node + 1];
    m.totals_[node] += c;
  }
  for (std::size_t i = 1; i < m.offsets_.size(); ++i) m.offsets_[i] += m.offsets_[i - 1];

  const auto root = m.followers(0);
  std::vector<Follower> by_count(root.begin(), root.end());
  std::sort(by_count.begin(), by_count.end(), [](const Follower& a, const Follower& b) {
    return a.count != b.count ? a.count > b.count : a.token < b.token;
  });
  for (const auto& f : by_count) m.root_by_count_.push_back(f.token);
  // Root followers are sorted by id, so the first gap is the smallest unseen id.
  TokenId expect = 0;
  for (const auto& f : root) {
    if (f.token != expect) break;
    ++expect;
  }
  m.has_unseen_ = expect < vocab_size;
  m.first_unseen_ = expect;
  return m;
}

void BackoffNGramOracle::check_ids(std::span<const TokenId> ids) const {
  for (TokenId t : ids) {
    if (t >= vocab_size_) {
      throw ValidationError("token id " + std::to_string(t) + " is outside the vocabulary of " +
                            std::to_string(vocab_size_));
    }
  }
}

std::uint32_t BackoffNGramOracle::child(std::uint32_t node, TokenId token) const {
  auto it = children_.find(edge_key(node, token));
  return it == children_.end() ? kNoNode : it->second;
}

std::span<const BackoffNGramOracle::Follower> BackoffNGramOracle::followers(
    std::uint32_t node) const {
  return std::span<const Follower>(followers_).subspan(offsets_[node],
                                                       offsets_[node + 1] - offsets_[node]);
}

std::uint32_t BackoffNGramOracle::follower_count(std::uint32_t node, TokenId token) const {
  const auto f = followers(node);
  auto it = std::lower_bound(f.begin(), f.end(), token,
                             [](const Follower& a, TokenId t) { return a.token < t; });
  return it != f.end() && it->token == token ? it->count : 0;
}

void BackoffNGramOracle::history_path(std::span<const TokenId> context,
                                      std::vector<std::uint32_t>& path) const {
  path.clear();
  path.push_back(0);
  std::uint32_t node = 0;
  for (std::size_t k = 1; k < order_ && k <= context.size(); ++k) {
    node = child(node, context[context.size() - k]);
    if (node == kNoNode) break;
    path.push_back(node);
  }
}

double BackoffNGramOracle::prob_along(std::span<const std::uint32_t> path, TokenId token) const {
  double p = 1.0 / static_cast<double>(vocab_size_);
  for (std::uint32_t node : path) {
    const double c = static_cast<double>(totals_[node]);
    if (c == 0.0) continue;
    const double cw = follower_count(node, token);
    const double n1 = static_cast<double>(offsets_[node + 1] - offsets_[node]);
    p = std::max(cw - discount_, 0.0) / c + discount_ * n1 / c * p;
  }
  return p;
}

double BackoffNGramOracle::prob(std::span<const TokenId> context, TokenId token) const {
  check_ids(context);
  check_ids(std::span<const TokenId>(&token, 1));
  std::vector<std::uint32_t> path;
  history_path(context, path);
  return prob_along(path, token);
}

std::vector<double> BackoffNGramOracle::distribution(std::span<const TokenId> context) const {
  check_ids(context);
  std::vector<std::uint32_t> path;
  history_path(context, path);
  std::vector<double> p(vocab_size_, 1.0 / static_cast<double>(vocab_size_));
  for (std::uint32_t node : path) {
    const double c = static_cast<double>(totals_[node]);
    if (c == 0.0) continue;
    const auto f = followers(node);
    const double lambda = discount_ * static_cast<double>(f.size()) / c;
    for (double& v : p) v *= lambda;
    for (const auto& fw : f) p[fw.token] += std::max(fw.count - discount_, 0.0) / c;
  }
  return p;
}

TokenId BackoffNGramOracle::argmax(std::span<const TokenId> context) const {
  check_ids(context);
  std::vector<std::uint32_t> path;
  history_path(context, path);

  // A token outside every deeper follower list scores (product of deeper
  // backoff weights) * P_root(token), which is monotone in its root count, so
  // one representative per class is enough.
  std::vector<TokenId> candidates;
  for (std::size_t i = 1; i < path.size(); ++i) {
    for (const auto& f : followers(path[i])) candidates.push_back(f.token);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const std::size_t deep = candidates.size();
  for (TokenId t : root_by_count_) {
    if (!std::binary_search(candidates.begin(), candidates.begin() + deep, t)) {
      candidates.push_back(t);
      break;
    }
  }
  if (has_unseen_) candidates.push_back(first_unseen_);
  std::sort(candidates.begin(), candidates.end());

  TokenId best = candidates.front();
  double best_p = -1.0;
  for (TokenId t : candidates) {
    const double p = prob_along(path, t);
    if (p > best_p) {
      best_p = p;
      best = t;
    }
  }
  return best;
}

std::vector<TokenId> BackoffNGramOracle::greedy_continue(std::span<const TokenId> context,
                                                         std::size_t max_new) const {
  std::vector<TokenId> seq(context.begin(), context.end());
  std::vector<TokenId> out;
  out.reserve(max_new);
  for (std::size_t i = 0; i < max_new; ++i) {
    const TokenId next = argmax(seq);
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

double BackoffNGramOracle::logprob(std::span<const TokenId> context,
                                   std::span<const TokenId> continuation) const {
  check_ids(context);
  check_ids(continuation);
  std::vector<TokenId> seq(context.begin(), context.end());
  seq.insert(seq.end(), continuation.begin(), continuation.end());
  std::vector<std::uint32_t> path;
  double total = 0.0;
  for (std::size_t i = 0; i < continuation.size(); ++i) {
    const std::size_t at = context.size() + i;
    history_path(std::span<const TokenId>(seq).first(at), path);
    total += std::log(prob_along(path, seq[at]));
  }
  return total;
}

std::vector<TokenId> oracle_ids(std::string_view text, const Tokenizer& tokenizer,
                                const Vocabulary& vocab) {
  const auto toks = content_tokens(text, tokenizer);
  std::vector<TokenId> ids;
  ids.reserve(toks.size());
  for (auto t : toks) ids.push_back(vocab.id_or_unk(t));
  return ids;
}

TrainedOracle train_ngram_oracle(std::span<const Document> corpus, const Tokenizer& tokenizer,
                                 std::size_t order) {
  if (corpus.empty()) throw ValidationError("cannot train an n-gram oracle on an empty corpus");
  Vocabulary vocab;
  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& doc : corpus) {
    std::vector<TokenId> ids;
    for (auto t : content_tokens(doc.text, tokenizer)) ids.push_back(vocab.intern(t));
    seqs.push_back(std::move(ids));
  }
  auto oracle = BackoffNGramOracle::train(seqs, vocab.size(), order);
  return {std::move(vocab), std::move(oracle)};
}

}  // namespace textmill
