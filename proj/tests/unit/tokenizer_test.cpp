#include <gtest/gtest.h>

#include "test_support.hpp"
#include "textmill/error.hpp"
#include "textmill/random.hpp"
#include "textmill/tokenizer.hpp"

namespace textmill {
namespace {

using Tokens = std::vector<std::string>;

TEST(MixedScript, LatinRunThenIdeographs) {
  const Tokenizer t = Tokenizer::mixed_script();
  EXPECT_EQ(t.tokenize("Mill是模型"), (Tokens{"Mill", "是", "模", "型"}));
}

TEST(MixedScript, TabsArePreserved) {
  EXPECT_EQ(Tokenizer::mixed_script(true).tokenize("a\tb"), (Tokens{"a", "\t", "b"}));
  EXPECT_EQ(Tokenizer::mixed_script(false).tokenize("a\tb"), (Tokens{"a", "b"}));
}

TEST(MixedScript, EmptyText) {
  EXPECT_TRUE(Tokenizer::mixed_script().tokenize("").empty());
  EXPECT_EQ(Tokenizer::mixed_script().count(""), 0u);
}

TEST(MixedScript, PunctuationDigitsAndWhitespaceRuns) {
  const Tokenizer t = Tokenizer::mixed_script();
  EXPECT_EQ(t.tokenize("GPT3，共175B参数。  \n\nok!"),
            (Tokens{"GPT3", "，", "共", "175B", "参", "数", "。", "  \n\n", "ok", "!"}));
}

TEST(MixedScript, DetokenizeReproducesText) {
  const Tokenizer t = Tokenizer::mixed_script();
  SplitMix64 g(3);
  const std::vector<std::string> pieces = {"中", "文", "ab", "12", " ", "\t", "\n", "，", "$", "é"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const auto len = uniform_below(g, 40);
    for (std::uint64_t i = 0; i < len; ++i) text += pieces[uniform_below(g, pieces.size())];
    EXPECT_EQ(Tokenizer::detokenize(t.tokenize(text)), text);
    EXPECT_EQ(t.count(text), t.tokenize(text).size());
  }
}

TEST(Vocabulary, InternFindAndUnk) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 1u);
  EXPECT_EQ(v.token(v.unk()), "<unk>");
  const TokenId a = v.intern("语言");
  EXPECT_EQ(v.intern("语言"), a);
  EXPECT_EQ(v.find("语言"), a);
  EXPECT_FALSE(v.find("模型"));
  EXPECT_EQ(v.id_or_unk("模型"), v.unk());
}

TEST(Vocabulary, SaveLoadEscapes) {
  textmill::testing::TempDir dir;
  Vocabulary v;
  v.intern("a\nb");
  v.intern("\\");
  v.intern("\r");
  v.intern("模型");
  v.save(dir / "v.txt");
  EXPECT_EQ(Vocabulary::load(dir / "v.txt"), v);
}

TEST(Vocabulary, LoadRejectsDuplicates) {
  textmill::testing::TempDir dir;
  textmill::testing::write_file(dir / "v.txt", "a\nb\na\n");
  EXPECT_THROW(Vocabulary::load(dir / "v.txt"), FormatError);
}

TEST(VocabTokenizer, GreedyLongestMatchWithinSegments) {
  Vocabulary v;
  for (const char* tok : {"语言", "语言模型", "模型", "ab"}) v.intern(tok);
  const Tokenizer t = Tokenizer::with_vocabulary(v);
  EXPECT_EQ(t.tokenize("语言模型很大 abc"), (Tokens{"语言模型", "很", "大", " ", "ab", "c"}));
  EXPECT_EQ(Tokenizer::with_vocabulary(v, false).tokenize("模型 模型"), (Tokens{"模型", "模型"}));
}

TEST(Tokenizer, FingerprintDistinguishesConfigurations) {
  Vocabulary v;
  v.intern("x");
  const auto a = Tokenizer::mixed_script(true).fingerprint();
  const auto b = Tokenizer::mixed_script(false).fingerprint();
  const auto c = Tokenizer::with_vocabulary(v).fingerprint();
  EXPECT_NE(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a, Tokenizer::mixed_script(true).fingerprint());
}

TEST(Tokenizer, EncodeMapsUnknownToUnk) {
  Vocabulary v;
  const TokenId hi = v.intern("你");
  const auto ids = encode("你好", Tokenizer::mixed_script(), v);
  EXPECT_EQ(ids, (std::vector<TokenId>{hi, v.unk()}));
}

}  // namespace
}  // namespace textmill
