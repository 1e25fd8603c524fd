#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textmill/corpus.hpp"
#include "textmill/oracle.hpp"
#include "textmill/tokenizer.hpp"

namespace textmill {

enum class Split { kTrain, kHeldOut };

std::string_view split_name(Split split);

struct ProbeOptions {
  std::size_t prefix = 50;
  std::size_t gen = 22;    // tokens generated, >= match
  std::size_t match = 22;  // success threshold
  unsigned workers = 1;

  void validate() const;
};

struct ProbeInput {
  std::string id;
  Split split = Split::kTrain;
  std::string group;
  std::size_t occurrences = 0;  // copies in the oracle's training data
  std::vector<TokenId> tokens;
};

struct ProbeResult {
  std::string id;
  Split split = Split::kTrain;
  std::string group;
  std::size_t occurrences = 0;
  std::size_t matched_len = 0;
  bool success = false;
};

struct ProbeSkip {
  std::string id;
  std::string reason;
};

struct RateCell {
  std::size_t probed = 0;
  std::size_t succeeded = 0;
  double rate() const { return probed == 0 ? 0.0 : static_cast<double>(succeeded) / probed; }
};

struct LengthCell {
  std::size_t probed = 0;
  double total_matched = 0.0;
  double mean() const { return probed == 0 ? 0.0 : total_matched / probed; }
};

struct ProbeReport {
  std::vector<ProbeResult> results;  // input order, skipped docs omitted
  std::vector<ProbeSkip> skipped;
  std::map<std::string, RateCell> by_split;
  std::map<std::string, std::map<std::string, RateCell>> by_split_group;
  std::map<std::size_t, LengthCell> by_occurrences;
};

// Greedy continuation from the first `prefix` tokens; matched_len is the
// length of the longest common prefix of the continuation and the true next
// tokens. Docs shorter than prefix + match tokens are skipped with a reason.
ProbeReport probe_memorization(const GenerationOracle& oracle, std::span<const ProbeInput> docs,
                               const ProbeOptions& options = {});

nlohmann::ordered_json to_json(const ProbeReport& report);

// Builds probe inputs: ids under the oracle vocabulary, group = source, and
// occurrence counts from identical texts in `training`.
std::vector<ProbeInput> make_probe_inputs(std::span<const Document> docs, Split split,
                                          std::span<const Document> training,
                                          const Tokenizer& tokenizer, const Vocabulary& vocab);

// Indices of up to `count` docs with equal draws per source (the first
// count % sources sources, in name order, get one extra); a source with too
// few docs contributes all of them. Ascending, deterministic in seed.
std::vector<std::size_t> sample_probe_set(std::span<const Document> docs, std::size_t count,
                                          std::uint64_t seed);

struct Classification {
  std::string label;
  std::map<std::string, double> perplexity;
};

// Per-label perplexity exp(-logprob(prompt, verbalizer tokens) / length);
// the argmin wins and ties go to the lexicographically smallest label.
// Throws ValidationError for fewer than two labels or a verbalizer string
// with no tokens.
Classification perplexity_classify(const GenerationOracle& oracle,
                                   std::span<const TokenId> prompt,
                                   const std::map<std::string, std::vector<TokenId>>& verbalizer);

Classification perplexity_classify(const GenerationOracle& oracle, std::string_view prompt,
                                   const std::map<std::string, std::string>& verbalizer,
                                   const Tokenizer& tokenizer, const Vocabulary& vocab);

}  // namespace textmill
