#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textmill/corpus.hpp"
#include "textmill/manifest.hpp"

namespace textmill {

// Per-group replay multipliers m_g = target_g * total_tokens / available_g,
// so the expected emitted tokens of group g are exactly
// target_g * total_tokens.
struct MixtureSpec {
  std::string dimension = "source";  // source | language | any meta key
  std::map<std::string, double> target;
  std::map<std::string, double> available;  // tokens
  double total_tokens = 0.0;                // T
  std::map<std::string, double> multiplier;

  double expected_tokens(const std::string& group) const;
};

// Throws ValidationError when targets do not sum to 1 (+-1e-9), any input is
// negative or non-finite, T <= 0, or a group with a positive target has no
// available tokens.
MixtureSpec compute_mixture(const std::map<std::string, double>& available,
                            const std::map<std::string, double>& target, double total_tokens,
                            std::string dimension = "source");

// Key-value text file, see docs/formats.md:
//   dimension = source
//   total_tokens = 300e9
//   target.<group> = 0.506
//   available.<group> = 198.5e9      (optional)
// Multipliers are derived when every targeted group has an availability.
MixtureSpec load_mixture_spec(const std::filesystem::path& path);
MixtureSpec parse_mixture_spec(std::string_view text);
std::string format_mixture_spec(const MixtureSpec& spec);

// Group of a document along `dimension`. "language" uses meta["language"]
// when present and detect_language otherwise. Throws ValidationError when the
// document has no value for the dimension.
std::string group_of(const Document& doc, std::string_view dimension);

struct SampledCopy {
  std::size_t doc = 0;   // index into the input span
  std::uint32_t copy = 0;

  bool operator==(const SampledCopy&) const = default;
};

// Each document is replayed floor(m_g) times plus once more with probability
// frac(m_g), drawn from a counter-based RNG keyed by (seed, doc id). When the
// replayed tokens exceed `budget`, copies are admitted in the order of an
// independent per-copy random priority, skipping copies that no longer fit,
// so the total never exceeds the budget and the cut does not favour any group
// or position. Output is in canonical order
// (document index, then copy). Throws ValidationError for an unresolvable or
// undeclared group.
std::vector<SampledCopy> sample_stream(std::span<const Document> docs,
                                       std::span<const std::int64_t> tokens,
                                       const MixtureSpec& spec, std::uint64_t seed,
                                       std::optional<std::int64_t> budget = std::nullopt);

// Number of replays of one document (before any budget cut).
std::uint32_t replay_count(std::string_view doc_id, double multiplier, std::uint64_t seed);

// ---------------------------------------------------------------- stats

inline constexpr std::size_t kLengthBins = 32;

// Bin 0 holds lengths 0-1; bin b >= 1 holds [2^b, 2^(b+1)).
std::size_t length_bin(std::int64_t tokens);

struct GroupStats {
  std::int64_t documents = 0;
  std::int64_t tokens = 0;
  double proportion = 0.0;  // of all tokens
  std::optional<double> filtered_fraction;
  std::array<std::int64_t, kLengthBins> length_histogram{};
  std::map<std::string, std::int64_t> topics;  // from meta["topic"]
};

struct StageRow {
  std::string stage;
  std::string kind;
  Tally totals;
};

struct CorpusStats {
  std::string dimension = "source";
  std::int64_t documents = 0;
  std::int64_t tokens = 0;
  std::map<std::string, GroupStats> groups;
  std::vector<StageRow> stages;
  std::string config_fingerprint;
};

// Joins manifests (all must share one config fingerprint; otherwise
// ValidationError) and measures the corpus. %filtered per source compares the
// first manifest's input tokens with the kept tokens of the last manifest
// that does not replicate documents.
CorpusStats corpus_stats(std::span<const Document> docs, std::span<const std::int64_t> tokens,
                         std::span<const StageManifest> manifests,
                         std::string_view dimension = "source");

nlohmann::ordered_json to_json(const CorpusStats& stats);
// Aligned-column text report.
std::string render_table(const CorpusStats& stats);

}  // namespace textmill
