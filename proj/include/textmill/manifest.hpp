#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textmill/corpus.hpp"

namespace textmill {

// Counts for one slice of a stage (the whole stage, or one source).
// Documents are either kept or dropped; `emitted_*` counts output records,
// which differs from kept only for stages that replicate documents.
struct Tally {
  std::int64_t input_count = 0;
  std::int64_t kept_count = 0;
  std::int64_t dropped_count = 0;
  std::int64_t input_tokens = 0;
  std::int64_t kept_tokens = 0;
  std::int64_t dropped_tokens = 0;
  std::int64_t emitted_count = 0;
  std::int64_t emitted_tokens = 0;
  std::map<std::string, std::int64_t> dropped_by_reason;

  bool conserved() const;
  bool operator==(const Tally&) const = default;
};

struct StageManifest {
  std::string stage;  // stage name, also the output file stem
  std::string kind;   // stage kind from the registry
  std::string config_fingerprint;
  std::string tokenizer;
  std::uint64_t seed = 0;
  Tally totals;
  std::map<std::string, Tally> per_source;
  std::vector<std::string> failed_shards;

  void record_keep(const Document& doc, std::int64_t tokens);
  void record_drop(const Document& doc, std::int64_t tokens, std::string_view reason);
  // Adds one output record (a replica) of an already-kept document.
  void record_emit(const Document& doc, std::int64_t tokens);

  // kept + dropped = input for counts and tokens, in totals and per source,
  // and per-source rows sum to the totals.
  bool conserved() const;

  bool operator==(const StageManifest&) const = default;
};

nlohmann::ordered_json to_json(const StageManifest& m);
StageManifest manifest_from_json(const nlohmann::json& j);

// Pretty-printed JSON with a trailing newline; the byte layout is stable.
std::string dump_manifest(const StageManifest& m);
void save_manifest(const std::filesystem::path& path, const StageManifest& m);
StageManifest load_manifest(const std::filesystem::path& path);

// `<dir>/<stage>.manifest.json`
std::filesystem::path manifest_path(const std::filesystem::path& dir, std::string_view stage);

}  // namespace textmill
