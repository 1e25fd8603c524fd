#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textmill/corpus.hpp"
#include "textmill/manifest.hpp"
#include "textmill/tokenizer.hpp"

namespace textmill {

// What every stage sees besides its input documents.
struct StageContext {
  std::string name;
  const Tokenizer* tokenizer = nullptr;
  std::uint64_t seed = 0;  // global run seed
  unsigned workers = 1;
  std::string config_fingerprint;
  // Ingest only.
  std::vector<std::filesystem::path> inputs;
  bool strict = false;
  bool continue_on_error = false;
  // Side artifacts (trained model, eval index, ...) go to
  // <artifact_dir>/<name>.<ext> when set.
  std::optional<std::filesystem::path> artifact_dir;

  // Per-stage RNG seed derived from the run seed and stage name.
  std::uint64_t stage_seed() const;
};

struct StageOutput {
  std::vector<Document> docs;  // canonical order
  StageManifest manifest;
};

class Stage {
 public:
  virtual ~Stage() = default;
  virtual std::string_view kind() const = 0;
  virtual StageOutput run(std::vector<Document> input, const StageContext& ctx) const = 0;
};

// Registry. Parameters are validated here, so a config that builds all its
// stages will not fail on parameters later. Relative paths in parameters are
// resolved against `base_dir`. Throws ValidationError.
std::unique_ptr<Stage> make_stage(std::string_view kind, const nlohmann::json& params,
                                  const std::filesystem::path& base_dir = {});
const std::vector<std::string>& stage_kinds();

// -------------------------------------------------------------- config

struct TokenizerConfig {
  std::string kind = "mixed";  // mixed | vocab
  bool preserve_whitespace = true;
  std::filesystem::path path;  // vocab only

  Tokenizer build() const;
};

struct StageConfig {
  std::string kind;
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  TokenizerConfig tokenizer;
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path output_dir;
  bool strict = false;
  bool continue_on_error = false;
  std::vector<StageConfig> stages;
  std::filesystem::path base_dir;  // relative paths resolve here

  // Unknown keys, unknown stage kinds, duplicate or unsafe stage names, an
  // ingest stage anywhere but first, and missing input files are all
  // ValidationErrors. Without a leading ingest stage the first stage reads
  // the inputs directly.
  static PipelineConfig from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);

  // Canonical form used for the fingerprint: sorted keys, resolved seed,
  // output_dir excluded.
  nlohmann::json canonical() const;
  std::string fingerprint() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

enum class ExitStatus : int { kOk = 0, kValidation = 1, kRuntime = 2, kPartial = 3 };

struct RunOptions {
  unsigned workers = 1;
  std::optional<std::uint64_t> seed_override;
  bool quiet = true;
};

struct RunResult {
  ExitStatus status = ExitStatus::kOk;
  std::string error;
  std::vector<StageManifest> manifests;
};

// Validates everything (building every stage) before writing anything, then
// runs the stages in order. Each stage writes <out>/<name>.jsonl and
// <out>/<name>.manifest.json; the run writes run_summary.json and report.txt.
// On a stage failure the manifests of finished stages stay on disk.
RunResult run_pipeline(PipelineConfig config, const RunOptions& options = {});

// Reads manifests and rejects a set with more than one config fingerprint.
std::vector<StageManifest> join_manifests(const std::vector<std::filesystem::path>& paths);

// Applies a per-document decision vector: an empty reason keeps the
// document. Used by stages and by the single-stage subcommands.
StageOutput apply_decisions(std::vector<Document> docs, std::span<const std::int64_t> tokens,
                            std::span<const std::string_view> reasons, const StageContext& ctx,
                            std::string_view kind);

// Token counts under ctx.tokenizer, computed in parallel.
std::vector<std::int64_t> count_tokens(std::span<const Document> docs, const StageContext& ctx);

// Base manifest with identity fields filled from the context.
StageManifest begin_manifest(const StageContext& ctx, std::string_view kind);

}  // namespace textmill
