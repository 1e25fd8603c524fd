#include <gtest/gtest.h>

#include <cmath>

#include "source_mix_fixture.hpp"
#include "test_support.hpp"
#include "textmill/error.hpp"
#include "textmill/mixture.hpp"

namespace textmill {
namespace {

using textmill::testing::source_mix_targets;

std::map<std::string, double> source_mix_available_tokens() {
  std::map<std::string, double> m;
  for (const auto& [g, b] : textmill::testing::source_mix_available_billions()) m[g] = b * 1e9;
  return m;
}

TEST(Mixture, ReferenceMixMultipliers) {
  const auto spec = compute_mixture(source_mix_available_tokens(), source_mix_targets(), 300e9);
  // Independent arithmetic: m = target * T / available.
  for (const auto& [g, t] : source_mix_targets()) {
    EXPECT_DOUBLE_EQ(spec.multiplier.at(g), t * 300e9 / source_mix_available_tokens().at(g)) << g;
  }
  EXPECT_NEAR(spec.multiplier.at("common_crawl"), 0.765, 5e-4);
  EXPECT_NEAR(spec.multiplier.at("books"), 1.876, 5e-4);
  EXPECT_NEAR(spec.multiplier.at("news"), 10.52, 5e-3);
  EXPECT_NEAR(spec.multiplier.at("forums"), 10.50, 5e-3);
  EXPECT_NEAR(spec.multiplier.at("academic"), 3.85, 5e-3);
  EXPECT_DOUBLE_EQ(spec.expected_tokens("news"), 0.067 * 300e9);
}

TEST(Mixture, SymmetricInputsGiveEqualMultipliers) {
  const auto spec = compute_mixture({{"a", 5.0}, {"b", 5.0}, {"c", 5.0}},
                                    {{"a", 1.0 / 3}, {"b", 1.0 / 3}, {"c", 1.0 / 3}}, 9.0);
  EXPECT_DOUBLE_EQ(spec.multiplier.at("a"), spec.multiplier.at("b"));
  EXPECT_DOUBLE_EQ(spec.multiplier.at("b"), spec.multiplier.at("c"));
}

TEST(Mixture, Validation) {
  EXPECT_THROW(compute_mixture({{"a", 0.0}, {"b", 1.0}}, {{"a", 0.5}, {"b", 0.5}}, 10),
               ValidationError);
  EXPECT_THROW(compute_mixture({{"a", 1.0}}, {{"a", 0.9}}, 10), ValidationError);
  EXPECT_THROW(compute_mixture({{"a", 1.0}}, {{"a", 1.0}}, 0), ValidationError);
  EXPECT_THROW(compute_mixture({{"a", -1.0}}, {{"a", 1.0}}, 10), ValidationError);
  EXPECT_THROW(compute_mixture({{"a", NAN}}, {{"a", 1.0}}, 10), ValidationError);
  // A zero target on an empty group is fine; an untargeted group gets m = 0.
  const auto s = compute_mixture({{"a", 1.0}, {"b", 0.0}, {"c", 3.0}}, {{"a", 1.0}, {"b", 0.0}}, 2);
  EXPECT_DOUBLE_EQ(s.multiplier.at("a"), 2.0);
  EXPECT_DOUBLE_EQ(s.multiplier.at("c"), 0.0);
}

TEST(MixtureSpecFile, ParseFormatRoundTrip) {
  const std::string text =
      "# comment\n"
      "dimension = source\n"
      "total_tokens = 300e9\n"
      "target.common_crawl = 0.506\n"
      "target.books = 0.387\n"
      "target.news = 0.067\n"
      "target.forums = 0.035\n"
      "target.academic = 0.005\n"
      "available.common_crawl = 198.5e9\n"
      "available.books = 61.9e9\n"
      "available.news = 1.91e9\n"
      "available.forums = 1.0e9\n"
      "available.academic = 0.39e9\n";
  const MixtureSpec s = parse_mixture_spec(text);
  EXPECT_EQ(s.dimension, "source");
  EXPECT_DOUBLE_EQ(s.total_tokens, 300e9);
  ASSERT_EQ(s.multiplier.size(), 5u);
  EXPECT_NEAR(s.multiplier.at("books"), 1.876, 5e-4);
  const MixtureSpec back = parse_mixture_spec(format_mixture_spec(s));
  EXPECT_EQ(back.target, s.target);
  EXPECT_EQ(back.available, s.available);
  EXPECT_EQ(back.multiplier, s.multiplier);
  // Targets only: multipliers wait for measured availability.
  EXPECT_TRUE(parse_mixture_spec("total_tokens = 10\ntarget.a = 1\n").multiplier.empty());
}

TEST(MixtureSpecFile, Errors) {
  EXPECT_THROW(parse_mixture_spec("total_tokens = 10\n"), Error);
  EXPECT_THROW(parse_mixture_spec("target.a = 1\n"), Error);
  EXPECT_THROW(parse_mixture_spec("total_tokens = ten\ntarget.a = 1\n"), Error);
  EXPECT_THROW(parse_mixture_spec("total_tokens = 10\ntarget.a = 1\nweight.a = 2\n"), Error);
  EXPECT_THROW(parse_mixture_spec("total_tokens = 10\ntarget.a = 0.6\ntarget.b = 0.6\n"), Error);
}

TEST(GroupOf, Dimensions) {
  Document d;
  d.id = "x";
  d.source = "news";
  d.text = "今天天气很好。";
  EXPECT_EQ(group_of(d, "source"), "news");
  EXPECT_EQ(group_of(d, "language"), "zh");
  d.meta["language"] = "other";
  EXPECT_EQ(group_of(d, "language"), "other");
  d.meta["topic"] = "sports";
  EXPECT_EQ(group_of(d, "topic"), "sports");
  EXPECT_THROW(group_of(d, "region"), ValidationError);
}

TEST(ReplayCount, ExpectationEqualsMultiplier) {
  for (double m : {0.0, 0.3, 1.0, 1.875, 10.52}) {
    double total = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) total += replay_count("d" + std::to_string(i), m, 7);
    // Bernoulli(frac m) standard error is at most 0.5 / sqrt(n).
    EXPECT_NEAR(total / n, m, 5 * 0.5 / std::sqrt(n)) << m;
    EXPECT_GE(replay_count("any", m, 7), static_cast<std::uint32_t>(std::floor(m)));
    EXPECT_LE(replay_count("any", m, 7), static_cast<std::uint32_t>(std::floor(m)) + 1);
  }
}

MixtureSpec source_mix_spec(const textmill::testing::SizedCorpus& c, double T) {
  return compute_mixture(textmill::testing::measured_availability(c), source_mix_targets(), T);
}

TEST(SampleStream, Deterministic) {
  const auto c = textmill::testing::source_mix_corpus(2e5, 1);
  const auto spec = source_mix_spec(c, 1e5);
  const auto a = sample_stream(c.docs, c.tokens, spec, 99, 100000);
  EXPECT_EQ(a, sample_stream(c.docs, c.tokens, spec, 99, 100000));
  EXPECT_NE(a, sample_stream(c.docs, c.tokens, spec, 100, 100000));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end(), [](const SampledCopy& x, const SampledCopy& y) {
    return std::tie(x.doc, x.copy) < std::tie(y.doc, y.copy);
  }));
}

TEST(SampleStream, ZeroBudgetIsEmpty) {
  const auto c = textmill::testing::source_mix_corpus(2e4, 1);
  EXPECT_TRUE(sample_stream(c.docs, c.tokens, source_mix_spec(c, 1e4), 1, 0).empty());
}

TEST(SampleStream, BudgetIsRespected) {
  const auto c = textmill::testing::source_mix_corpus(2e5, 2);
  const auto copies = sample_stream(c.docs, c.tokens, source_mix_spec(c, 2e5), 3, 50000);
  std::int64_t total = 0;
  for (const auto& x : copies) total += c.tokens[x.doc];
  EXPECT_LE(total, 50000);
  EXPECT_GT(total, 50000 - 150);
}

TEST(SampleStream, UndeclaredGroupIsAnError) {
  auto c = textmill::testing::source_mix_corpus(2e3, 1);
  const auto spec = source_mix_spec(c, 1e3);
  c.docs[0].source = "custom:other";
  EXPECT_THROW(sample_stream(c.docs, c.tokens, spec, 1), ValidationError);
}

TEST(SampleStream, CommonCrawlShareWithinConcentrationBound) {
  const auto c = textmill::testing::source_mix_corpus(2e7, 5);
  const double T = 1e7;
  const auto spec = source_mix_spec(c, T);
  const auto copies = sample_stream(c.docs, c.tokens, spec, 2024, static_cast<std::int64_t>(T));
  std::map<std::string, double> realized;
  double total = 0;
  for (const auto& x : copies) {
    realized[c.docs[x.doc].source] += c.tokens[x.doc];
    total += c.tokens[x.doc];
  }
  // Bernoulli(frac m) per document: variance of CC tokens before the cut.
  const double m = spec.multiplier.at("common_crawl");
  const double f = m - std::floor(m);
  double var = 0;
  for (std::size_t i = 0; i < c.docs.size(); ++i) {
    if (c.docs[i].source == "common_crawl") var += f * (1 - f) * c.tokens[i] * c.tokens[i];
  }
  const double sd_share = std::sqrt(var) / T;
  EXPECT_LT(5 * sd_share, 0.01);  // the bound itself is tight enough
  EXPECT_NEAR(realized["common_crawl"] / total, 0.506, 0.01);
}

double entropy(const std::map<std::string, double>& mass) {
  double total = 0, h = 0;
  for (const auto& [_, v] : mass) total += v;
  for (const auto& [_, v] : mass) {
    if (v > 0) h -= v / total * std::log(v / total);
  }
  return h;
}

TEST(SampleStream, UniformTargetsSmoothSkewedGroups) {
  std::vector<Document> docs;
  std::vector<std::int64_t> tokens;
  const std::map<std::string, int> counts = {{"a", 5000}, {"b", 500}, {"c", 50}};
  for (const auto& [g, n] : counts) {
    for (int i = 0; i < n; ++i) {
      Document d;
      d.id = g + std::to_string(i);
      d.source = "custom:" + g;
      docs.push_back(d);
      tokens.push_back(100);
    }
  }
  std::map<std::string, double> before, available;
  for (std::size_t i = 0; i < docs.size(); ++i) before[docs[i].source] += tokens[i];
  available = before;
  const auto spec = compute_mixture(
      available, {{"custom:a", 1.0 / 3}, {"custom:b", 1.0 / 3}, {"custom:c", 1.0 / 3}}, 3e5);
  std::map<std::string, double> after;
  for (const auto& x : sample_stream(docs, tokens, spec, 4)) after[docs[x.doc].source] += 100;
  EXPECT_GE(entropy(after), entropy(before));
  EXPECT_NEAR(entropy(after), std::log(3.0), 0.01);
}

TEST(CorpusStats, SingleDocument) {
  Document d;
  d.id = "a";
  d.source = "books";
  const std::vector<Document> docs = {d};
  const std::vector<std::int64_t> tokens = {100};
  const auto s = corpus_stats(docs, tokens, {});
  const auto& g = s.groups.at("books");
  EXPECT_DOUBLE_EQ(g.proportion, 1.0);
  int nonzero = 0;
  for (auto b : g.length_histogram) nonzero += b != 0;
  EXPECT_EQ(nonzero, 1);
  EXPECT_EQ(g.length_histogram[length_bin(100)], 1);
  EXPECT_EQ(length_bin(100), 6u);  // [64, 128)
}

TEST(CorpusStats, ReportColumns) {
  Document d;
  d.id = "a";
  d.source = "books";
  const std::vector<Document> docs = {d};
  const std::vector<std::int64_t> tokens = {100};
  const std::string table = render_table(corpus_stats(docs, tokens, {}));
  for (const char* col : {"%Filtered", "#Remaining Tokens", "Proportion"}) {
    EXPECT_NE(table.find(col), std::string::npos) << col;
  }
}

TEST(CorpusStats, EmptyCorpus) {
  const auto s = corpus_stats({}, {}, {});
  EXPECT_EQ(s.documents, 0);
  EXPECT_EQ(s.tokens, 0);
  EXPECT_TRUE(s.groups.empty());
  EXPECT_NO_THROW(render_table(s));
  EXPECT_NO_THROW(to_json(s).dump());
}

TEST(CorpusStats, FilteredFractionFromManifests) {
  StageManifest first, last, balance;
  first.stage = "ingest";
  last.stage = "rules";
  balance.stage = "balance";
  balance.kind = "balance";
  Document a;
  a.id = "a";
  a.source = "news";
  first.record_keep(a, 100);
  first.record_keep(a, 100);
  first.record_keep(a, 100);
  first.record_keep(a, 100);
  last.record_keep(a, 100);
  last.record_drop(a, 300, "low_quality");
  balance.record_keep(a, 100);
  balance.record_emit(a, 100);
  const std::vector<Document> docs = {a};
  const std::vector<std::int64_t> tokens = {100};
  const std::vector<StageManifest> ms = {first, last, balance};
  const auto s = corpus_stats(docs, tokens, ms);
  EXPECT_DOUBLE_EQ(*s.groups.at("news").filtered_fraction, 0.75);
  StageManifest other = last;
  other.config_fingerprint = "different";
  const std::vector<StageManifest> mixed = {first, other};
  EXPECT_THROW(corpus_stats(docs, tokens, mixed), ValidationError);
}

}  // namespace
}  // namespace textmill
