#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace textmill {

// Canonical position of a record: (input-file position, line number).
// Every "keep the first occurrence" rule orders documents by this key.
struct OrderKey {
  std::uint32_t shard = 0;
  std::uint64_t record = 0;

  auto operator<=>(const OrderKey&) const = default;
};

struct Document {
  std::string id;
  std::string source;
  std::string text;
  std::map<std::string, std::string> meta;
  OrderKey order;

  bool operator==(const Document&) const = default;
};

// common_crawl | books | news | forums | academic | custom:<name>
bool is_valid_source(std::string_view source);

enum class MalformedPolicy { kSkip, kAbort };

struct ReadOptions {
  MalformedPolicy policy = MalformedPolicy::kAbort;
  // Reject records carrying fields outside {id, source, text, meta}.
  bool strict = false;
  std::uint32_t shard = 0;
};

struct MalformedLine {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ReadReport {
  std::size_t lines = 0;
  std::vector<MalformedLine> malformed;
};

// Parses one record line. Throws FormatError (without a line number).
Document parse_record(std::string_view line, bool strict);

// Canonical single-line serialization, no trailing newline.
std::string serialize_record(const Document& doc);

// Reads one shard. Documents come back in file order with
// order = (options.shard, 0-based line index). Blank lines count as
// malformed. Throws IoError when the file cannot be opened and FormatError
// (carrying the line number) for a malformed line under kAbort.
std::vector<Document> read_records(const std::filesystem::path& path,
                                   const ReadOptions& options = {},
                                   ReadReport* report = nullptr);

// Reads several shards; shard index = position in `paths`.
std::vector<Document> read_corpus(std::span<const std::filesystem::path> paths,
                                  const ReadOptions& options = {},
                                  ReadReport* report = nullptr);

void write_records(const std::filesystem::path& path, std::span<const Document> docs);

// Throws ValidationError on the first repeated id.
void check_unique_ids(std::span<const Document> docs);

struct LanguageGuess {
  std::string tag;  // "zh" or "other"
  double cjk_ratio = 0.0;
};

inline constexpr double kDefaultChineseThreshold = 0.25;

// cjk_ratio = ideographs / (ideographs + other alphabetic codepoints).
// Returns nullopt (indeterminate) when the text has no alphabetic or
// ideographic codepoint at all.
std::optional<LanguageGuess> detect_language(std::string_view text,
                                             double threshold = kDefaultChineseThreshold);

}  // namespace textmill
