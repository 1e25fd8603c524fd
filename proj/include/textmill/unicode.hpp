#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace textmill {

// Coarse codepoint classes shared by language detection, tokenization,
// rule filters and dedup normalization.
enum class CharClass : std::uint8_t {
  kIdeograph,    // Unified_Ideograph (the CJK unified ideograph blocks)
  kLetter,       // Alphabetic, not an ideograph
  kDigit,        // decimal digit (Nd)
  kWhitespace,   // White_Space
  kPunctuation,  // general category P*
  kSymbol,       // everything else: S*, controls, marks, unassigned
};

CharClass classify(char32_t cp);

inline bool is_whitespace(char32_t cp) { return classify(cp) == CharClass::kWhitespace; }
inline bool is_punctuation(char32_t cp) { return classify(cp) == CharClass::kPunctuation; }

constexpr char32_t kReplacementChar = 0xFFFD;

// Decodes one codepoint starting at text[pos] and advances pos. Invalid or
// truncated sequences consume one byte and yield U+FFFD.
char32_t next_codepoint(std::string_view text, std::size_t& pos);

void append_utf8(std::string& out, char32_t cp);

std::u32string to_codepoints(std::string_view utf8);
std::string to_utf8(std::u32string_view cps);

std::size_t codepoint_count(std::string_view utf8);

// Calls fn(cp, byte_offset, byte_length) for every codepoint.
template <typename Fn>
void for_each_codepoint(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = next_codepoint(text, pos);
    fn(cp, start, pos - start);
  }
}

}  // namespace textmill
