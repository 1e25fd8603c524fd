#include "textmill/unicode.hpp"

#include <array>

#include <unicode/uchar.h>

namespace textmill {
namespace {

CharClass classify_slow(char32_t cp) {
  const auto c = static_cast<UChar32>(cp);
  if (u_isUWhiteSpace(c)) return CharClass::kWhitespace;
  if (u_hasBinaryProperty(c, UCHAR_UNIFIED_IDEOGRAPH)) return CharClass::kIdeograph;
  if (u_charType(c) == U_DECIMAL_DIGIT_NUMBER) return CharClass::kDigit;
  if (u_hasBinaryProperty(c, UCHAR_ALPHABETIC)) return CharClass::kLetter;
  if (u_ispunct(c)) return CharClass::kPunctuation;
  return CharClass::kSymbol;
}

struct AsciiTable {
  std::array<CharClass, 128> cls{};
  AsciiTable() {
    for (char32_t c = 0; c < 128; ++c) cls[c] = classify_slow(c);
  }
};

}  // namespace

CharClass classify(char32_t cp) {
  static const AsciiTable ascii;
  if (cp < 128) return ascii.cls[cp];
  return classify_slow(cp);
}

char32_t next_codepoint(std::string_view text, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(text[pos]);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
    min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
    min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
    min = 0x10000;
  } else {
    ++pos;
    return kReplacementChar;
  }
  // A truncated or broken sequence becomes one replacement for its maximal
  // valid prefix.
  for (int i = 1; i <= extra; ++i) {
    const auto b = pos + i < text.size() ? static_cast<unsigned char>(text[pos + i]) : 0u;
    if ((b & 0xC0) != 0x80) {
      pos += i;
      return kReplacementChar;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return kReplacementChar;
  }
  pos += extra + 1;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::u32string to_codepoints(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  std::size_t pos = 0;
  while (pos < utf8.size()) out.push_back(next_codepoint(utf8, pos));
  return out;
}

std::string to_utf8(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size() * 3);
  for (char32_t cp : cps) append_utf8(out, cp);
  return out;
}

std::size_t codepoint_count(std::string_view utf8) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < utf8.size()) {
    next_codepoint(utf8, pos);
    ++n;
  }
  return n;
}

}  // namespace textmill
