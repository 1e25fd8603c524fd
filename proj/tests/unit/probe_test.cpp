#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "textmill/error.hpp"
#include "textmill/oracle.hpp"
#include "textmill/probe.hpp"
#include "textmill/random.hpp"

namespace textmill {
namespace {

using Ids = std::vector<TokenId>;

Ids random_ids(SplitMix64& g, std::size_t n, std::size_t vocab) {
  Ids out(n);
  for (auto& t : out) t = static_cast<TokenId>(1 + uniform_below(g, vocab - 1));
  return out;
}

// Fixed next-token table for classification tests: logprob is a sum of
// per-token log scores, independent of context.
class TableOracle final : public GenerationOracle {
 public:
  explicit TableOracle(std::vector<double> logp) : logp_(std::move(logp)) {}
  std::vector<TokenId> greedy_continue(std::span<const TokenId>, std::size_t n) const override {
    return Ids(n, 0);
  }
  double logprob(std::span<const TokenId>, std::span<const TokenId> cont) const override {
    double s = 0;
    for (TokenId t : cont) s += logp_.at(t);
    return s;
  }
  std::size_t vocab_size() const override { return logp_.size(); }

 private:
  std::vector<double> logp_;
};

TEST(Probe, ShortDocumentIsSkipped) {
  SplitMix64 g(1);
  const std::vector<Ids> seqs = {random_ids(g, 100, 50)};
  const auto o = BackoffNGramOracle::train(seqs, 50, 5);
  std::vector<ProbeInput> in(1);
  in[0].id = "short";
  in[0].tokens = random_ids(g, 60, 50);
  const auto r = probe_memorization(o, in);
  EXPECT_TRUE(r.results.empty());
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_NE(r.skipped[0].reason.find("72"), std::string::npos);
}

TEST(Probe, RepeatedPassageMemorizedHeldOutNot) {
  SplitMix64 g(2);
  const std::size_t V = 20000;
  std::vector<Ids> training;
  for (int i = 0; i < 200; ++i) training.push_back(random_ids(g, 120, V));
  const Ids passage = random_ids(g, 100, V);
  for (int i = 0; i < 10; ++i) training.push_back(passage);
  const Ids held = random_ids(g, 100, V);
  const auto o = BackoffNGramOracle::train(training, V, 5);

  std::vector<ProbeInput> in(2);
  in[0] = {"dup", Split::kTrain, "books", 10, passage};
  in[1] = {"held", Split::kHeldOut, "books", 0, held};
  const auto r = probe_memorization(o, in);
  ASSERT_EQ(r.results.size(), 2u);
  EXPECT_TRUE(r.results[0].success);
  EXPECT_EQ(r.results[0].matched_len, 22u);
  EXPECT_FALSE(r.results[1].success);
  EXPECT_EQ(r.by_split.at("train").succeeded, 1u);
  EXPECT_EQ(r.by_split.at("held_out").succeeded, 0u);
  EXPECT_DOUBLE_EQ(r.by_occurrences.at(10).mean(), 22.0);
}

TEST(Probe, ParallelMatchesSerial) {
  SplitMix64 g(3);
  std::vector<Ids> training;
  for (int i = 0; i < 50; ++i) training.push_back(random_ids(g, 100, 300));
  const auto o = BackoffNGramOracle::train(training, 300, 5);
  std::vector<ProbeInput> in;
  for (int i = 0; i < 60; ++i) {
    in.push_back({std::to_string(i), i % 2 ? Split::kTrain : Split::kHeldOut, "news", 1,
                  i % 2 ? training[i % 50] : random_ids(g, 100, 300)});
  }
  ProbeOptions serial, parallel;
  parallel.workers = 4;
  const auto a = probe_memorization(o, in, serial);
  const auto b = probe_memorization(o, in, parallel);
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(Probe, OptionValidation) {
  ProbeOptions o;
  o.gen = 10;
  EXPECT_THROW(o.validate(), ValidationError);
  o.gen = 22;
  o.match = 0;
  EXPECT_THROW(o.validate(), ValidationError);
}

TEST(Probe, InputsCountOccurrences) {
  std::vector<Document> training(3);
  for (int i = 0; i < 3; ++i) {
    training[i].id = std::to_string(i);
    training[i].source = "books";
    training[i].text = i < 2 ? "重复的段落" : "唯一的段落";
  }
  Vocabulary vocab;
  for (const char* t : {"重", "复", "的", "段", "落"}) vocab.intern(t);
  const Tokenizer tok = Tokenizer::mixed_script();
  const auto in = make_probe_inputs(std::span(training).first(1), Split::kTrain, training, tok, vocab);
  ASSERT_EQ(in.size(), 1u);
  EXPECT_EQ(in[0].occurrences, 2u);
  EXPECT_EQ(in[0].group, "books");
  EXPECT_EQ(in[0].tokens.size(), 5u);
}

TEST(ProbeSet, EqualDrawsPerSource) {
  std::vector<Document> docs;
  const std::vector<std::pair<std::string, int>> sizes = {
      {"books", 900}, {"news", 500}, {"common_crawl", 5000}, {"forums", 300}, {"academic", 100}};
  for (const auto& [src, n] : sizes) {
    for (int i = 0; i < n; ++i) {
      Document d;
      d.id = src + std::to_string(i);
      d.source = src;
      docs.push_back(d);
    }
  }
  // 1,000 documents from five sources: 200 each where available.
  const auto pick = sample_probe_set(docs, 1000, 9);
  std::map<std::string, int> per;
  for (auto i : pick) ++per[docs[i].source];
  EXPECT_EQ(per["books"], 200);
  EXPECT_EQ(per["news"], 200);
  EXPECT_EQ(per["academic"], 100);
  EXPECT_EQ(pick, sample_probe_set(docs, 1000, 9));
  EXPECT_TRUE(std::is_sorted(pick.begin(), pick.end()));
  // Remainder goes to the first sources by name.
  std::map<std::string, int> per2;
  for (auto i : sample_probe_set(docs, 12, 1)) ++per2[docs[i].source];
  EXPECT_EQ(per2["academic"], 3);
  EXPECT_EQ(per2["books"], 3);
  EXPECT_EQ(per2["common_crawl"], 2);
}

TEST(Classify, HigherProbabilityWins) {
  // id 1 = 好, id 2 = 差.
  const TableOracle o({-5.0, std::log(0.6), std::log(0.1)});
  const auto c = perplexity_classify(o, Ids{0}, {{"pos", {1}}, {"neg", {2}}});
  EXPECT_EQ(c.label, "pos");
  EXPECT_NEAR(c.perplexity.at("pos"), 1 / 0.6, 1e-12);
}

TEST(Classify, TieGoesToSmallestLabel) {
  const TableOracle o({-1.0, -2.0, -2.0});
  EXPECT_EQ(perplexity_classify(o, Ids{}, {{"zeta", {1}}, {"alpha", {2}}}).label, "alpha");
}

TEST(Classify, PerTokenNormalization) {
  // Raw logprob favours the short label; per-token perplexity favours the long one.
  const TableOracle o({0.0, -1.0, -0.6});
  const auto c = perplexity_classify(o, Ids{}, {{"short", {1}}, {"long", {2, 2}}});
  EXPECT_EQ(c.label, "long");
  EXPECT_NEAR(c.perplexity.at("long"), std::exp(0.6), 1e-12);
}

TEST(Classify, EqualLengthVerbalizersFollowRawLogprob) {
  SplitMix64 g(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logp(30);
    for (auto& x : logp) x = -5.0 * to_unit(g()) - 0.01;
    const TableOracle o(logp);
    std::map<std::string, Ids> verb;
    for (const char* label : {"a", "b", "c"}) verb[label] = random_ids(g, 3, 30);
    std::string best;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (const auto& [label, ids] : verb) {
      const double lp = o.logprob({}, ids);
      if (lp > best_lp) best_lp = lp, best = label;
    }
    EXPECT_EQ(perplexity_classify(o, Ids{}, verb).label, best);
  }
}

TEST(Classify, MatchesEnumerationWithNGramOracle) {
  SplitMix64 g(5);
  const std::size_t V = 60;
  std::vector<Ids> training;
  for (int i = 0; i < 100; ++i) training.push_back(random_ids(g, 40, V));
  const auto o = BackoffNGramOracle::train(training, V, 5);
  for (int trial = 0; trial < 300; ++trial) {
    const Ids prompt = random_ids(g, 1 + uniform_below(g, 10), V);
    std::map<std::string, Ids> verb;
    for (const char* label : {"x", "y", "z"}) verb[label] = random_ids(g, 1 + uniform_below(g, 3), V);
    const auto c = perplexity_classify(o, prompt, verb);
    std::string best;
    double best_ppl = std::numeric_limits<double>::infinity();
    for (const auto& [label, ids] : verb) {
      double lp = 0;
      Ids ctx = prompt;
      for (TokenId t : ids) {
        lp += std::log(o.distribution(ctx)[t]);
        ctx.push_back(t);
      }
      const double ppl = std::exp(-lp / static_cast<double>(ids.size()));
      EXPECT_NEAR(c.perplexity.at(label), ppl, 1e-9 * ppl);
      if (ppl < best_ppl) best_ppl = ppl, best = label;
    }
    EXPECT_EQ(c.label, best);
  }
}

TEST(Classify, Validation) {
  const TableOracle o({0.0, -1.0});
  EXPECT_THROW(perplexity_classify(o, Ids{}, {{"only", {1}}}), ValidationError);
  EXPECT_THROW(perplexity_classify(o, Ids{}, {{"a", {1}}, {"b", {}}}), ValidationError);
}

TEST(Classify, TextOverload) {
  std::vector<Document> corpus(1);
  corpus[0].id = "d";
  corpus[0].source = "books";
  corpus[0].text = "这部电影很好。这本书很好。那家店很好。这道菜很差。";
  const Tokenizer tok = Tokenizer::mixed_script();
  const auto t = train_ngram_oracle(corpus, tok, 3);
  const auto c =
      perplexity_classify(t.oracle, "这部电影很", {{"pos", "好"}, {"neg", "差"}}, tok, t.vocab);
  EXPECT_EQ(c.label, "pos");
}

}  // namespace
}  // namespace textmill
