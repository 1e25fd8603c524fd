#include "textmill/tokenizer.hpp"

#include <fstream>

#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/unicode.hpp"

namespace textmill {

namespace {

std::string unescape_line(std::string_view line, std::size_t lineno) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out.push_back(line[i]);
      continue;
    }
    if (i + 1 == line.size()) throw FormatError("dangling escape in vocabulary", lineno);
    switch (line[++i]) {
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      default: throw FormatError("unknown escape in vocabulary", lineno);
    }
  }
  return out;
}

std::string escape_token(std::string_view tok) {
  std::string out;
  for (char c : tok) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

bool is_word_class(CharClass c) { return c == CharClass::kLetter || c == CharClass::kDigit; }

}  // namespace

Vocabulary::Vocabulary() { intern(kUnkToken); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Vocabulary v;
  v.tokens_.clear();
  v.ids_.clear();
  v.max_bytes_ = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string tok = unescape_line(line, lineno);
    if (tok.empty()) throw FormatError("empty vocabulary entry", lineno);
    if (v.ids_.count(tok)) throw FormatError("duplicate vocabulary entry \"" + tok + "\"", lineno);
    v.intern(tok);
  }
  auto unk = v.find(kUnkToken);
  v.unk_ = unk ? *unk : v.intern(kUnkToken);
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : tokens_) out << escape_token(t) << '\n';
}

TokenId Vocabulary::intern(std::string_view token) {
  auto [it, inserted] = ids_.try_emplace(std::string(token), static_cast<TokenId>(tokens_.size()));
  if (inserted) {
    tokens_.emplace_back(token);
    max_bytes_ = std::max(max_bytes_, token.size());
  }
  return it->second;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_or_unk(std::string_view token) const {
  auto id = find(token);
  return id ? *id : unk_;
}

Tokenizer Tokenizer::mixed_script(bool preserve_whitespace) {
  Tokenizer t;
  t.name_ = "mixed-script";
  t.preserve_whitespace_ = preserve_whitespace;
  return t;
}

Tokenizer Tokenizer::with_vocabulary(Vocabulary vocab, bool preserve_whitespace) {
  Tokenizer t;
  t.name_ = "vocab";
  t.preserve_whitespace_ = preserve_whitespace;
  t.vocab_ = std::make_shared<const Vocabulary>(std::move(vocab));
  return t;
}

Tokenizer Tokenizer::from_vocab_file(const std::filesystem::path& path, bool preserve_whitespace) {
  return with_vocabulary(Vocabulary::load(path), preserve_whitespace);
}

template <typename Emit>
void Tokenizer::scan_mixed(std::string_view text, Emit&& emit) const {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const CharClass cls = classify(next_codepoint(text, pos));
    if (cls == CharClass::kWhitespace || is_word_class(cls)) {
      // Extend the run while the class family matches.
      const bool ws = cls == CharClass::kWhitespace;
      while (pos < text.size()) {
        std::size_t probe = pos;
        const CharClass next = classify(next_codepoint(text, probe));
        if (ws ? next != CharClass::kWhitespace : !is_word_class(next)) break;
        pos = probe;
      }
      if (ws && !preserve_whitespace_) continue;
    }
    emit(text.substr(start, pos - start));
  }
}

void Tokenizer::split_vocab(std::string_view text, std::vector<std::string_view>& out) const {
  const Vocabulary& vocab = *vocab_;
  std::size_t pos = 0;
  while (pos < text.size()) {
    // Find the end of the current whitespace / non-whitespace segment.
    std::size_t seg_end = pos;
    std::size_t probe = pos;
    const bool ws = is_whitespace(next_codepoint(text, probe));
    seg_end = probe;
    while (seg_end < text.size()) {
      std::size_t p = seg_end;
      if (is_whitespace(next_codepoint(text, p)) != ws) break;
      seg_end = p;
    }
    if (ws && !preserve_whitespace_) {
      pos = seg_end;
      continue;
    }
    while (pos < seg_end) {
      std::size_t best = 0;
      const std::size_t limit = std::min(vocab.max_token_bytes(), seg_end - pos);
      for (std::size_t len = limit; len > 0; --len) {
        if (vocab.find(text.substr(pos, len))) {
          best = len;
          break;
        }
      }
      if (best == 0) {
        std::size_t p = pos;
        next_codepoint(text, p);
        best = p - pos;
      }
      out.push_back(text.substr(pos, best));
      pos += best;
    }
  }
}

std::vector<std::string_view> Tokenizer::split(std::string_view text) const {
  std::vector<std::string_view> out;
  if (vocab_) {
    split_vocab(text, out);
  } else {
    scan_mixed(text, [&](std::string_view tok) { out.push_back(tok); });
  }
  return out;
}

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
  auto views = split(text);
  return {views.begin(), views.end()};
}

std::size_t Tokenizer::count(std::string_view text) const {
  if (vocab_) return split(text).size();
  std::size_t n = 0;
  scan_mixed(text, [&](std::string_view) { ++n; });
  return n;
}

std::string Tokenizer::detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

std::string Tokenizer::detokenize(std::span<const std::string_view> tokens) {
  std::string out;
  for (auto t : tokens) out += t;
  return out;
}

bool Tokenizer::is_whitespace_token(std::string_view token) {
  if (token.empty()) return false;
  std::size_t pos = 0;
  return is_whitespace(next_codepoint(token, pos));
}

std::string Tokenizer::fingerprint() const {
  std::string fp = name_;
  if (vocab_) {
    std::string all;
    for (std::size_t i = 0; i < vocab_->size(); ++i) {
      all += vocab_->token(static_cast<TokenId>(i));
      all.push_back('\0');
    }
    fp += ":" + textmill::fingerprint(all);
  }
  fp += preserve_whitespace_ ? "/ws=keep" : "/ws=drop";
  return fp;
}

std::vector<TokenId> encode(std::string_view text, const Tokenizer& tokenizer,
                            const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (auto tok : tokenizer.split(text)) ids.push_back(vocab.id_or_unk(tok));
  return ids;
}

}  // namespace textmill
