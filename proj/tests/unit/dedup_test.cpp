#include <gtest/gtest.h>

#include <map>
#include <numeric>

#include "test_support.hpp"
#include "textmill/dedup.hpp"
#include "textmill/error.hpp"
#include "textmill/pipeline.hpp"
#include "textmill/random.hpp"
#include "textmill/unicode.hpp"

namespace textmill {
namespace {

Document doc(std::string id, std::string text, std::uint64_t record) {
  Document d;
  d.id = std::move(id);
  d.source = "news";
  d.text = std::move(text);
  d.order = {0, record};
  return d;
}

TEST(Normalize, DropsWhitespaceAndPunctuation) {
  EXPECT_EQ(normalize_for_dedup("你好，世界！"), "你好世界");
  EXPECT_EQ(normalize_for_dedup(" a.b\tc\n"), "abc");
  EXPECT_EQ(normalize_for_dedup("，。！"), "");
}

TEST(ExactKey, EquivalentTextsShareAKey) {
  const auto a = exact_key(doc("a", "你好，世界！", 0));
  const auto b = exact_key(doc("b", "你好 世界", 1));
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->digest, b->digest);
}

TEST(ExactKey, DigestOfNormalizedBytes) {
  const auto k = exact_key(doc("a", "a b, c!", 0));
  ASSERT_TRUE(k);
  EXPECT_EQ(to_hex(k->digest), "900150983cd24fb0d6963f7d28e17f72");
}

TEST(ExactKey, PunctuationOnlyHasNoKey) {
  EXPECT_FALSE(exact_key(doc("a", "，。！", 0)));
  std::vector<Document> docs = {doc("a", "，。！", 0)};
  std::vector<std::optional<ExactKey>> keys = {std::nullopt};
  std::vector<std::string_view> reasons;
  EXPECT_TRUE(exact_dedup(docs, keys, &reasons).empty());
  EXPECT_EQ(reasons[0], reject::kEmptyAfterNormalize);
}

std::vector<std::size_t> run_exact(const std::vector<Document>& docs,
                                   std::vector<std::string_view>* reasons = nullptr) {
  std::vector<std::optional<ExactKey>> keys;
  for (const auto& d : docs) keys.push_back(exact_key(d));
  return exact_dedup(docs, keys, reasons);
}

TEST(ExactDedup, KeepsFirstOccurrence) {
  const std::vector<Document> docs = {doc("A", "第一篇。", 0), doc("B", "第二篇。", 1),
                                      doc("A2", "第一篇", 2)};
  std::vector<std::string_view> reasons;
  EXPECT_EQ(run_exact(docs, &reasons), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(reasons[2], reject::kExactDuplicate);
}

TEST(ExactDedup, OrderKeyNotPositionDecides) {
  std::vector<Document> docs = {doc("late", "同一段。", 9), doc("early", "同一段", 2)};
  EXPECT_EQ(run_exact(docs), (std::vector<std::size_t>{1}));
}

TEST(ExactDedup, AllUniqueUnchanged) {
  std::vector<Document> docs;
  for (int i = 0; i < 50; ++i) docs.push_back(doc(std::to_string(i), "文" + std::to_string(i), i));
  EXPECT_EQ(run_exact(docs).size(), 50u);
}

TEST(ExactDedup, ThousandCopiesManifest) {
  std::vector<Document> docs;
  for (int i = 0; i < 1000; ++i) docs.push_back(doc("d" + std::to_string(i), "同一段落。", i));
  const Tokenizer tok = Tokenizer::mixed_script();
  StageContext ctx;
  ctx.name = "exact";
  ctx.tokenizer = &tok;
  const auto out = make_stage("exact_dedup", nlohmann::json::object())->run(docs, ctx);
  ASSERT_EQ(out.docs.size(), 1u);
  EXPECT_EQ(out.docs[0].id, "d0");
  const Tally& t = out.manifest.totals;
  EXPECT_DOUBLE_EQ(static_cast<double>(t.dropped_count) / t.input_count, 0.999);
  EXPECT_TRUE(out.manifest.conserved());
}

// Independent SimHash: weighted 3-gram multiset of the normalized text.
std::uint64_t brute_simhash(const std::string& text) {
  std::u32string norm;
  for (char32_t c : to_codepoints(text)) {
    const auto cls = classify(c);
    if (cls != CharClass::kWhitespace && cls != CharClass::kPunctuation) norm += c;
  }
  std::map<std::u32string, long> grams;
  if (norm.size() < 3) {
    grams[norm] = 1;
  } else {
    for (std::size_t i = 0; i + 3 <= norm.size(); ++i) ++grams[norm.substr(i, 3)];
  }
  std::array<long, 64> acc{};
  for (const auto& [g, c] : grams) {
    const std::uint64_t h = hash64(to_utf8(g), kSimHashSeed);
    for (int b = 0; b < 64; ++b) acc[b] += ((h >> b) & 1) ? c : -c;
  }
  std::uint64_t fp = 0;
  for (int b = 0; b < 64; ++b) {
    if (acc[b] > 0) fp |= std::uint64_t{1} << b;
  }
  return fp;
}

std::string random_text(SplitMix64& g, std::size_t n) {
  std::u32string s;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<char32_t>(0x4E00 + uniform_below(g, 2000));
  return to_utf8(s);
}

TEST(SimHash, IdenticalDocumentsIdenticalFingerprints) {
  SplitMix64 g(1);
  const std::string t = random_text(g, 300);
  EXPECT_EQ(simhash(t), simhash(t));
  EXPECT_EQ(hamming_distance(*simhash(t), *simhash(t)), 0);
  EXPECT_FALSE(simhash("，。 "));
}

TEST(SimHash, MatchesBruteForceOnOneCharEdit) {
  SplitMix64 g(2);
  const std::string base = random_text(g, 1000);
  std::u32string cps = to_codepoints(base);
  cps[500] = U'〇' == cps[500] ? U'一' : U'〇';
  const std::string edited = to_utf8(cps);
  const auto a = simhash(base), b = simhash(edited);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(*a, brute_simhash(base));
  EXPECT_EQ(*b, brute_simhash(edited));
  const int d = hamming_distance(*a, *b);
  EXPECT_EQ(d, hamming_distance(brute_simhash(base), brute_simhash(edited)));
  EXPECT_LE(d, 6);
}

TEST(SimHash, MatchesBruteForceOnMixedTexts) {
  for (const std::string t : {"ab", "a b c d", "重复重复重复重复", "Hello, world! 你好。", "x"}) {
    EXPECT_EQ(*simhash(t), brute_simhash(t)) << t;
  }
}

TEST(SimHash, UnrelatedPairsAverageHalfTheBits) {
  SplitMix64 g(3);
  double total = 0;
  const int pairs = 1000;
  for (int i = 0; i < pairs; ++i) {
    total += hamming_distance(*simhash(random_text(g, 200)), *simhash(random_text(g, 200)));
  }
  EXPECT_NEAR(total / pairs, 32.0, 2.0);
}

// O(n^2) oracle: components of the "distance <= k" graph, keep min order.
std::vector<std::size_t> brute_removed(const std::vector<SimHashSignature>& s, int k) {
  std::vector<std::size_t> parent(s.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      if (hamming_distance(s[i].fingerprint, s[j].fingerprint) <= k) parent[find(i)] = find(j);
    }
  }
  std::map<std::size_t, std::size_t> keeper;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto [it, fresh] = keeper.emplace(find(i), i);
    if (!fresh && s[i].order < s[it->second].order) it->second = i;
  }
  std::vector<std::size_t> removed;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (keeper[find(i)] != i) removed.push_back(i);
  }
  return removed;
}

std::vector<SimHashSignature> clustered_signatures(std::uint64_t seed, std::size_t n) {
  SplitMix64 g(seed);
  std::vector<std::uint64_t> bases(n / 5);
  for (auto& b : bases) b = g();
  std::vector<SimHashSignature> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t fp = bases[uniform_below(g, bases.size())];
    const auto flips = uniform_below(g, 6);
    for (std::uint64_t f = 0; f < flips; ++f) fp ^= std::uint64_t{1} << uniform_below(g, 64);
    out.push_back({fp, "s" + std::to_string(i), {0, g() % 100000}});
  }
  return out;
}

TEST(NearDedup, PairWithinRadiusClusters) {
  const std::vector<SimHashSignature> s = {{0x0, "a", {0, 1}}, {0x7, "b", {0, 2}}};
  const auto r = near_dedup(s, 3, 4);
  EXPECT_EQ(r.removed, (std::vector<std::size_t>{1}));
  ASSERT_EQ(r.clusters.size(), 1u);
  EXPECT_EQ(r.clusters[0].kept, 0u);
}

TEST(NearDedup, PairJustOutsideRadiusKept) {
  const std::vector<SimHashSignature> s = {{0x0, "a", {0, 1}}, {0xF, "b", {0, 2}}};
  EXPECT_TRUE(near_dedup(s, 3, 4).removed.empty());
}

TEST(NearDedup, TransitiveChainsFormOneCluster) {
  const std::vector<SimHashSignature> s = {
      {0x0, "a", {0, 5}}, {0x7, "b", {0, 1}}, {0x7 | 0x70, "c", {0, 3}}};
  const auto r = near_dedup(s, 3, 4);
  EXPECT_EQ(r.removed, (std::vector<std::size_t>{0, 2}));
}

TEST(NearDedup, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = clustered_signatures(seed, 500);
    EXPECT_EQ(near_dedup(s, 3, 4).removed, brute_removed(s, 3)) << "seed " << seed;
  }
}

TEST(NearDedup, OtherBandings) {
  const auto s = clustered_signatures(77, 400);
  EXPECT_EQ(near_dedup(s, 5, 8).removed, brute_removed(s, 5));
  EXPECT_EQ(near_dedup(s, 0, 1).removed, brute_removed(s, 0));
  EXPECT_THROW(near_dedup(s, 4, 4), ValidationError);
  EXPECT_THROW(near_dedup(s, 3, 65), ValidationError);
}

TEST(NearDedup, SignatureFileRoundTrip) {
  textmill::testing::TempDir dir;
  const auto s = clustered_signatures(1, 50);
  write_signatures(dir / "x.sigs", s);
  EXPECT_EQ(read_signatures(dir / "x.sigs"), s);
  EXPECT_EQ(textmill::testing::read_file(dir / "x.sigs").substr(0, 4), "TMSG");
}

}  // namespace
}  // namespace textmill
