#include "textmill/probe.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>

#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/parallel.hpp"
#include "textmill/random.hpp"

namespace textmill {

std::string_view split_name(Split split) {
  return split == Split::kTrain ? "train" : "held_out";
}

void ProbeOptions::validate() const {
  if (prefix == 0) throw ValidationError("probe prefix must be >= 1");
  if (match == 0) throw ValidationError("probe match threshold must be >= 1");
  if (gen < match) throw ValidationError("probe generation length must be >= match threshold");
}

ProbeReport probe_memorization(const GenerationOracle& oracle, std::span<const ProbeInput> docs,
                               const ProbeOptions& options) {
  options.validate();
  std::vector<std::optional<ProbeResult>> slots(docs.size());
  parallel_for(docs.size(), options.workers, [&](std::size_t i) {
    const ProbeInput& d = docs[i];
    if (d.tokens.size() < options.prefix + options.match) return;
    const std::span<const TokenId> toks(d.tokens);
    const auto cont = oracle.greedy_continue(toks.first(options.prefix), options.gen);
    const auto truth = toks.subspan(options.prefix);
    std::size_t m = 0;
    while (m < cont.size() && m < truth.size() && cont[m] == truth[m]) ++m;
    slots[i] = ProbeResult{d.id, d.split, d.group, d.occurrences, m, m >= options.match};
  });

  ProbeReport report;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!slots[i]) {
      report.skipped.push_back(
          {docs[i].id, "has " + std::to_string(docs[i].tokens.size()) + " tokens, needs " +
                           std::to_string(options.prefix + options.match)});
      continue;
    }
    const ProbeResult& r = *slots[i];
    const std::string split(split_name(r.split));
    for (RateCell* cell : {&report.by_split[split], &report.by_split_group[split][r.group]}) {
      ++cell->probed;
      if (r.success) ++cell->succeeded;
    }
    LengthCell& lc = report.by_occurrences[r.occurrences];
    ++lc.probed;
    lc.total_matched += static_cast<double>(r.matched_len);
    report.results.push_back(std::move(*slots[i]));
  }
  return report;
}

nlohmann::ordered_json to_json(const ProbeReport& report) {
  nlohmann::ordered_json j;
  auto rate = [](const RateCell& c) {
    return nlohmann::ordered_json{
        {"probed", c.probed}, {"succeeded", c.succeeded}, {"success_rate", c.rate()}};
  };
  j["by_split"] = nlohmann::ordered_json::object();
  for (const auto& [split, cell] : report.by_split) j["by_split"][split] = rate(cell);
  j["by_split_group"] = nlohmann::ordered_json::object();
  for (const auto& [split, groups] : report.by_split_group) {
    for (const auto& [group, cell] : groups) j["by_split_group"][split][group] = rate(cell);
  }
  j["by_occurrences"] = nlohmann::ordered_json::array();
  for (const auto& [occ, cell] : report.by_occurrences) {
    j["by_occurrences"].push_back(
        {{"occurrences", occ}, {"probed", cell.probed}, {"mean_matched_len", cell.mean()}});
  }
  j["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : report.skipped) j["skipped"].push_back({{"id", s.id}, {"reason", s.reason}});
  j["results"] = nlohmann::ordered_json::array();
  for (const auto& r : report.results) {
    j["results"].push_back({{"id", r.id},
                            {"split", split_name(r.split)},
                            {"group", r.group},
                            {"occurrences", r.occurrences},
                            {"matched_len", r.matched_len},
                            {"success", r.success}});
  }
  return j;
}

std::vector<ProbeInput> make_probe_inputs(std::span<const Document> docs, Split split,
                                          std::span<const Document> training,
                                          const Tokenizer& tokenizer, const Vocabulary& vocab) {
  std::unordered_map<std::uint64_t, std::size_t> copies;
  for (const auto& d : training) ++copies[hash64(d.text)];
  std::vector<ProbeInput> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    ProbeInput in;
    in.id = d.id;
    in.split = split;
    in.group = d.source;
    auto it = copies.find(hash64(d.text));
    in.occurrences = it == copies.end() ? 0 : it->second;
    in.tokens = oracle_ids(d.text, tokenizer, vocab);
    out.push_back(std::move(in));
  }
  return out;
}

std::vector<std::size_t> sample_probe_set(std::span<const Document> docs, std::size_t count,
                                          std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < docs.size(); ++i) by_source[docs[i].source].push_back(i);
  std::vector<std::size_t> out;
  if (by_source.empty()) return out;
  const std::size_t base = count / by_source.size();
  std::size_t extra = count % by_source.size();
  for (auto& [source, idx] : by_source) {
    const std::size_t want = base + (extra > 0 ? 1 : 0);
    if (extra > 0) --extra;
    SplitMix64 gen(hash64(source, seed));
    const std::size_t take = std::min(want, idx.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(gen, idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Classification perplexity_classify(const GenerationOracle& oracle,
                                   std::span<const TokenId> prompt,
                                   const std::map<std::string, std::vector<TokenId>>& verbalizer) {
  if (verbalizer.size() < 2) throw ValidationError("classification needs at least two labels");
  Classification c;
  std::optional<double> best;
  for (const auto& [label, tokens] : verbalizer) {
    if (tokens.empty()) {
      throw ValidationError("verbalizer for label \"" + label + "\" has no tokens");
    }
    const double lp = oracle.logprob(prompt, tokens);
    const double ppl = std::exp(-lp / static_cast<double>(tokens.size()));
    c.perplexity[label] = ppl;
    // Labels arrive in ascending order, so strict < keeps the smallest on ties.
    if (!best || ppl < *best) {
      best = ppl;
      c.label = label;
    }
  }
  return c;
}

Classification perplexity_classify(const GenerationOracle& oracle, std::string_view prompt,
                                   const std::map<std::string, std::string>& verbalizer,
                                   const Tokenizer& tokenizer, const Vocabulary& vocab) {
  std::map<std::string, std::vector<TokenId>> ids;
  for (const auto& [label, text] : verbalizer) ids[label] = oracle_ids(text, tokenizer, vocab);
  return perplexity_classify(oracle, oracle_ids(prompt, tokenizer, vocab), ids);
}

}  // namespace textmill
