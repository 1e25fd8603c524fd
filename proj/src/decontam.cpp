#include "textmill/decontam.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/parallel.hpp"

namespace textmill {

namespace {

constexpr std::uint64_t kTokenSeed = 0x746f6b656e2d6e67ULL;  // "token-ng"
constexpr std::uint64_t kBase = 0x100000001b3ULL * 0x9e3779b97f4a7c15ULL | 1;

}  // namespace

MatchSemantics parse_match_semantics(std::string_view name) {
  if (name == "overlapping") return MatchSemantics::kOverlapping;
  if (name == "disjoint") return MatchSemantics::kDisjoint;
  throw ValidationError("unknown match semantics \"" + std::string(name) +
                        "\" (expected overlapping or disjoint)");
}

std::vector<std::string_view> content_tokens(std::string_view text, const Tokenizer& tokenizer) {
  auto toks = tokenizer.split(text);
  if (tokenizer.preserve_whitespace()) {
    std::erase_if(toks, [](std::string_view t) { return Tokenizer::is_whitespace_token(t); });
  }
  return toks;
}

std::vector<std::uint64_t> window_keys(std::span<const std::string_view> tokens, std::size_t n) {
  std::vector<std::uint64_t> keys;
  if (n == 0 || tokens.size() < n) return keys;
  keys.reserve(tokens.size() - n + 1);

  std::uint64_t top = 1;  // kBase^(n-1)
  for (std::size_t i = 1; i < n; ++i) top *= kBase;

  std::vector<std::uint64_t> th(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) th[i] = hash64(tokens[i], kTokenSeed);

  std::uint64_t rolling = 0;
  for (std::size_t i = 0; i < n; ++i) rolling = rolling * kBase + th[i];
  keys.push_back(mix64(rolling ^ n));
  for (std::size_t i = n; i < tokens.size(); ++i) {
    rolling = (rolling - th[i - n] * top) * kBase + th[i];
    keys.push_back(mix64(rolling ^ n));
  }
  return keys;
}

ContaminationIndex::ContaminationIndex(std::size_t n, std::vector<std::uint64_t> keys,
                                       std::string tokenizer_fp)
    : n_(n), keys_(std::move(keys)), tokenizer_fp_(std::move(tokenizer_fp)) {
  std::sort(keys_.begin(), keys_.end());
  keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
  std::string bytes;
  bytes.reserve(keys_.size() * 8);
  for (std::uint64_t k : keys_) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((k >> (8 * i)) & 0xFF));
  }
  eval_fp_ = fingerprint(bytes);
}

bool ContaminationIndex::contains(std::uint64_t key) const {
  return std::binary_search(keys_.begin(), keys_.end(), key);
}

namespace {

constexpr char kIndexMagic[4] = {'T', 'M', 'C', 'I'};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw FormatError("contamination index is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = get_le<std::uint32_t>(in);
  if (len > (1u << 20)) throw FormatError("contamination index header string too long");
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) throw FormatError("contamination index is truncated");
  return s;
}

}  // namespace

void ContaminationIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kIndexMagic, 4);
  put_le<std::uint32_t>(out, kIndexVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n_));
  put_string(out, tokenizer_fp_);
  put_string(out, eval_fp_);
  put_le<std::uint64_t>(out, keys_.size());
  for (std::uint64_t k : keys_) put_le<std::uint64_t>(out, k);
  if (!out) throw IoError("write error on " + path.string());
}

ContaminationIndex ContaminationIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kIndexMagic, 4)) {
    throw FormatError("not a contamination index (bad magic)");
  }
  if (get_le<std::uint32_t>(in) != kIndexVersion) {
    throw FormatError("unsupported contamination index version");
  }
  const auto n = get_le<std::uint32_t>(in);
  std::string tok_fp = get_string(in);
  std::string eval_fp = get_string(in);
  const auto count = get_le<std::uint64_t>(in);
  std::vector<std::uint64_t> keys;
  keys.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) keys.push_back(get_le<std::uint64_t>(in));
  if (!std::is_sorted(keys.begin(), keys.end()) ||
      std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw FormatError("contamination index keys are not strictly ascending");
  }
  ContaminationIndex idx(n, std::move(keys), std::move(tok_fp));
  if (idx.eval_fp_ != eval_fp) throw FormatError("contamination index fingerprint mismatch");
  return idx;
}

ContaminationIndex build_eval_index(std::span<const Document> eval_docs,
                                    const Tokenizer& tokenizer, std::size_t n, unsigned workers) {
  if (n == 0) throw ValidationError("n-gram window must be >= 1");
  std::vector<std::vector<std::uint64_t>> per_doc(eval_docs.size());
  parallel_for(eval_docs.size(), workers, [&](std::size_t i) {
    const auto toks = content_tokens(eval_docs[i].text, tokenizer);
    per_doc[i] = window_keys(toks, n);
  });
  std::vector<std::uint64_t> keys;
  for (auto& k : per_doc) keys.insert(keys.end(), k.begin(), k.end());
  return ContaminationIndex(n, std::move(keys), tokenizer.fingerprint());
}

ContaminationVerdict check_document(std::string_view text, const ContaminationIndex& index,
                                    const Tokenizer& tokenizer, MatchSemantics semantics) {
  ContaminationVerdict v;
  if (index.empty()) return v;
  const std::size_t n = index.n();
  const auto toks = content_tokens(text, tokenizer);
  const auto keys = window_keys(toks, n);

  std::vector<bool> hit(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) hit[i] = index.contains(keys[i]);

  if (semantics == MatchSemantics::kOverlapping) {
    std::unordered_set<std::uint64_t> distinct;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (hit[i]) distinct.insert(keys[i]);
    }
    v.matched_count = distinct.size();
  } else {
    for (std::size_t i = 0; i < keys.size();) {
      if (hit[i]) {
        ++v.matched_count;
        i += n;
      } else {
        ++i;
      }
    }
  }

  // A 2n-token window spans n+1 consecutive window starts.
  std::size_t run = 0;
  for (std::size_t i = 0; i < keys.size() && !v.has_double_window; ++i) {
    run = hit[i] ? run + 1 : 0;
    if (run >= n + 1) v.has_double_window = true;
  }
  v.remove = v.matched_count >= 2 || v.has_double_window;
  return v;
}

}  // namespace textmill
