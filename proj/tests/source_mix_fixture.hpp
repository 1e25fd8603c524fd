#pragma once

// Reference source sizes after filtering (billions of tokens) and the
// pre-training proportions after balancing.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "textmill/corpus.hpp"
#include "textmill/random.hpp"

namespace textmill::testing {

inline const std::map<std::string, double>& source_mix_available_billions() {
  static const std::map<std::string, double> m = {{"common_crawl", 198.5},
                                                  {"books", 61.9},
                                                  {"news", 1.91},
                                                  {"forums", 1.0},
                                                  {"academic", 0.39}};
  return m;
}

inline const std::map<std::string, double>& source_mix_targets() {
  static const std::map<std::string, double> m = {{"common_crawl", 0.506},
                                                  {"books", 0.387},
                                                  {"news", 0.067},
                                                  {"forums", 0.035},
                                                  {"academic", 0.005}};
  return m;
}

struct SizedCorpus {
  std::vector<Document> docs;
  std::vector<std::int64_t> tokens;
};

// Documents of 50-150 tokens whose per-source token totals are proportional
// to the reference sizes, scaled to about `total_tokens`. Text is irrelevant to sampling.
inline SizedCorpus source_mix_corpus(double total_tokens, std::uint64_t seed) {
  double sum = 0;
  for (const auto& [_, b] : source_mix_available_billions()) sum += b;
  SizedCorpus c;
  SplitMix64 g(seed);
  for (const auto& [source, b] : source_mix_available_billions()) {
    const double want = total_tokens * b / sum;
    double have = 0;
    std::uint64_t k = 0;
    while (have < want) {
      Document d;
      d.id = source + "-" + std::to_string(k);
      d.source = source;
      d.order = {0, c.docs.size()};
      const auto len = static_cast<std::int64_t>(50 + uniform_below(g, 101));
      c.docs.push_back(std::move(d));
      c.tokens.push_back(len);
      have += static_cast<double>(len);
      ++k;
    }
  }
  return c;
}

inline std::map<std::string, double> measured_availability(const SizedCorpus& c) {
  std::map<std::string, double> a;
  for (std::size_t i = 0; i < c.docs.size(); ++i) a[c.docs[i].source] += static_cast<double>(c.tokens[i]);
  return a;
}

}  // namespace textmill::testing
