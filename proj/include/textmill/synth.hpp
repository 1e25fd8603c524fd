#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "textmill/random.hpp"

namespace textmill {

// Deterministic Chinese-like prose: a fixed lexicon of 1-3 ideograph words
// drawn with Zipfian frequencies, sentences closed by terminal punctuation,
// one sentence group per line.
class TextGenerator {
 public:
  explicit TextGenerator(std::uint64_t lexicon_seed, std::size_t lexicon_size = 3000);

  std::string word(SplitMix64& gen) const;
  std::string sentence(SplitMix64& gen, std::size_t min_words = 6,
                       std::size_t max_words = 20) const;
  // About `chars` codepoints across several lines.
  std::string document(SplitMix64& gen, std::size_t chars) const;
  std::string english_document(SplitMix64& gen, std::size_t words) const;
  // Advertising-style text that passes the rule filters but reads as spam.
  std::string spam_document(SplitMix64& gen, std::size_t chars) const;

 private:
  std::vector<std::string> words_;
  std::vector<std::string> spam_;
  std::vector<std::string> english_;
  std::vector<double> cdf_;
};

struct SynthOptions {
  std::size_t total_bytes = 50'000'000;
  std::size_t shards = 4;
  std::uint64_t seed = 20221017;
  double exact_dup_rate = 0.04;
  double near_dup_rate = 0.04;
  double noise_rate = 0.08;
  double spam_rate = 0.05;
  double contaminated_rate = 0.004;
  double english_rate = 0.05;
  std::size_t eval_docs = 300;
  std::size_t quality_examples = 3000;
  std::size_t prompt_tasks = 6;
  std::size_t prompt_examples = 400;  // per task
};

struct SynthSummary {
  std::size_t documents = 0;
  std::size_t bytes = 0;
  std::size_t exact_duplicates = 0;
  std::size_t near_duplicates = 0;
  std::size_t noise = 0;
  std::size_t spam = 0;
  std::size_t contaminated = 0;
  std::vector<std::filesystem::path> shards;
};

// Writes a self-contained sample workspace under `dir`:
//   corpus/shard-NNN.jsonl   the raw corpus
//   eval.jsonl               evaluation set for decontamination
//   quality_labeled.jsonl    positive/negative examples for the classifier
//   prompts/bank.jsonl, prompts/examples.jsonl
//   pipeline.json            full run writing to out/
// Same options, same bytes.
SynthSummary write_sample_workspace(const std::filesystem::path& dir,
                                    const SynthOptions& options = {});

}  // namespace textmill
