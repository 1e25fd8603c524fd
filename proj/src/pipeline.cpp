#include "textmill/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/mixture.hpp"

namespace textmill {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

Tokenizer TokenizerConfig::build() const {
  if (kind == "mixed") return Tokenizer::mixed_script(preserve_whitespace);
  if (kind == "vocab") return Tokenizer::from_vocab_file(path, preserve_whitespace);
  throw ValidationError("unknown tokenizer kind \"" + kind + "\" (expected mixed or vocab)");
}

namespace {

bool safe_name(std::string_view name) {
  if (name.empty() || name.size() > 64) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-';
    if (!ok) return false;
  }
  return name != "run_summary" && name != "report";
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config field \"") + key + "\" has the wrong type");
  }
}

}  // namespace

fs::path PipelineConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("pipeline config must be a JSON object");
  static const std::set<std::string> known = {"seed",   "tokenizer", "inputs",
                                              "output_dir", "strict", "continue_on_error",
                                              "stages"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown config field \"" + key + "\"");
  }
  PipelineConfig c;
  c.base_dir = base_dir;
  c.seed = field<std::uint64_t>(j, "seed", 0);
  c.strict = field<bool>(j, "strict", false);
  c.continue_on_error = field<bool>(j, "continue_on_error", false);
  c.output_dir = field<std::string>(j, "output_dir", "");
  if (c.output_dir.empty()) throw ValidationError("config needs an output_dir");

  if (auto t = j.find("tokenizer"); t != j.end()) {
    if (!t->is_object()) throw ValidationError("\"tokenizer\" must be an object");
    for (const auto& [key, _] : t->items()) {
      if (key != "kind" && key != "preserve_whitespace" && key != "path") {
        throw ValidationError("unknown tokenizer field \"" + key + "\"");
      }
    }
    c.tokenizer.kind = field<std::string>(*t, "kind", "mixed");
    c.tokenizer.preserve_whitespace = field<bool>(*t, "preserve_whitespace", true);
    c.tokenizer.path = field<std::string>(*t, "path", "");
    if (c.tokenizer.kind != "mixed" && c.tokenizer.kind != "vocab") {
      throw ValidationError("unknown tokenizer kind \"" + c.tokenizer.kind +
                            "\" (expected mixed or vocab)");
    }
    if (c.tokenizer.kind == "vocab" && c.tokenizer.path.empty()) {
      throw ValidationError("vocab tokenizer needs a path");
    }
    if (c.tokenizer.kind != "vocab" && !c.tokenizer.path.empty()) {
      throw ValidationError("tokenizer path is only valid for kind \"vocab\"");
    }
  }

  for (const auto& in : field<std::vector<std::string>>(j, "inputs", {})) c.inputs.emplace_back(in);
  if (c.inputs.empty()) throw ValidationError("config declares no inputs");

  auto stages = j.find("stages");
  if (stages == j.end() || !stages->is_array() || stages->empty()) {
    throw ValidationError("config needs a non-empty \"stages\" list");
  }
  std::set<std::string> names;
  for (const auto& s : *stages) {
    if (!s.is_object()) throw ValidationError("each stage must be an object");
    for (const auto& [key, _] : s.items()) {
      if (key != "kind" && key != "name" && key != "params") {
        throw ValidationError("unknown stage field \"" + key + "\"");
      }
    }
    StageConfig sc;
    sc.kind = field<std::string>(s, "kind", "");
    if (sc.kind.empty()) throw ValidationError("stage without a kind");
    if (std::find(stage_kinds().begin(), stage_kinds().end(), sc.kind) == stage_kinds().end()) {
      make_stage(sc.kind, json::object());  // throws with the list of known kinds
    }
    sc.name = field<std::string>(s, "name", sc.kind);
    if (!safe_name(sc.name)) throw ValidationError("bad stage name \"" + sc.name + "\"");
    if (!names.insert(sc.name).second) {
      throw ValidationError("duplicate stage name \"" + sc.name + "\"");
    }
    if (auto p = s.find("params"); p != s.end() && !p->is_null()) {
      if (!p->is_object()) throw ValidationError("stage params must be an object");
      sc.params = *p;
    }
    c.stages.push_back(std::move(sc));
  }
  for (std::size_t i = 1; i < c.stages.size(); ++i) {
    if (c.stages[i].kind == "ingest") throw ValidationError("ingest may only be the first stage");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

json PipelineConfig::canonical() const {
  json j;
  j["seed"] = seed;
  j["strict"] = strict;
  j["continue_on_error"] = continue_on_error;
  j["tokenizer"] = {{"kind", tokenizer.kind},
                    {"preserve_whitespace", tokenizer.preserve_whitespace},
                    {"path", tokenizer.path.string()}};
  j["inputs"] = json::array();
  for (const auto& p : inputs) j["inputs"].push_back(p.string());
  j["stages"] = json::array();
  for (const auto& s : stages) {
    j["stages"].push_back({{"kind", s.kind}, {"name", s.name}, {"params", s.params}});
  }
  return j;
}

std::string PipelineConfig::fingerprint() const { return textmill::fingerprint(canonical().dump()); }

std::vector<StageManifest> join_manifests(const std::vector<fs::path>& paths) {
  std::vector<StageManifest> out;
  for (const auto& p : paths) {
    out.push_back(load_manifest(p));
    if (out.back().config_fingerprint != out.front().config_fingerprint) {
      throw ValidationError("manifest " + p.string() + " has config fingerprint " +
                            out.back().config_fingerprint + ", expected " +
                            out.front().config_fingerprint);
    }
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write error on " + path.string());
}

ordered_json summary_json(const PipelineConfig& config, const std::string& fp,
                          const std::string& tokenizer_fp, const std::string& status,
                          const std::string& error, const std::vector<StageManifest>& manifests) {
  ordered_json j;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["config_fingerprint"] = fp;
  j["seed"] = config.seed;
  j["tokenizer"] = tokenizer_fp;
  j["stages"] = ordered_json::array();
  for (const auto& m : manifests) {
    j["stages"].push_back({{"name", m.stage},
                           {"kind", m.kind},
                           {"input_count", m.totals.input_count},
                           {"kept_count", m.totals.kept_count},
                           {"dropped_count", m.totals.dropped_count},
                           {"emitted_count", m.totals.emitted_count},
                           {"input_tokens", m.totals.input_tokens},
                           {"kept_tokens", m.totals.kept_tokens},
                           {"emitted_tokens", m.totals.emitted_tokens},
                           {"failed_shards", m.failed_shards}});
  }
  if (!manifests.empty()) {
    // Chain and conservation checks over the documents that flowed through.
    bool chained = true;
    std::int64_t dropped = 0;
    bool replicated = false;
    for (std::size_t i = 0; i < manifests.size(); ++i) {
      dropped += manifests[i].totals.dropped_count;
      if (manifests[i].totals.emitted_count != manifests[i].totals.kept_count) replicated = true;
      if (i > 0 && manifests[i].totals.input_count != manifests[i - 1].totals.emitted_count) {
        chained = false;
      }
    }
    const std::int64_t initial = manifests.front().totals.input_count;
    const std::int64_t final_kept = manifests.back().totals.kept_count;
    j["conservation"] = {{"initial_input", initial},
                         {"final_kept", final_kept},
                         {"total_dropped", dropped},
                         {"chained", chained},
                         {"holds", replicated || final_kept + dropped == initial}};
  }
  return j;
}

}  // namespace

RunResult run_pipeline(PipelineConfig config, const RunOptions& options) {
  RunResult result;
  if (options.seed_override) config.seed = *options.seed_override;

  // Validation: nothing is written until every stage has been built.
  std::string fp;
  std::optional<Tokenizer> tokenizer;
  std::vector<std::unique_ptr<Stage>> stages;
  std::vector<fs::path> inputs;
  fs::path out_dir;
  try {
    fp = config.fingerprint();
    TokenizerConfig tc = config.tokenizer;
    if (!tc.path.empty()) tc.path = config.resolve(tc.path);
    tokenizer = tc.build();
    for (const auto& in : config.inputs) {
      const fs::path p = config.resolve(in);
      if (!fs::is_regular_file(p)) throw ValidationError("input not found: " + p.string());
      inputs.push_back(p);
    }
    for (const auto& s : config.stages) stages.push_back(make_stage(s.kind, s.params, config.base_dir));
    out_dir = config.resolve(config.output_dir);
  } catch (const Error& e) {
    result.status = ExitStatus::kValidation;
    result.error = e.what();
    return result;
  }

  const std::string tok_fp = tokenizer->fingerprint();
  auto finish = [&](const std::string& status, const std::string& error) {
    write_text(out_dir / "run_summary.json",
               summary_json(config, fp, tok_fp, status, error, result.manifests).dump(2) + "\n");
  };

  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error& e) {
    result.status = ExitStatus::kRuntime;
    result.error = e.what();
    return result;
  }

  std::vector<Document> last_output;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    StageContext ctx;
    ctx.name = config.stages[i].name;
    ctx.tokenizer = &*tokenizer;
    ctx.seed = config.seed;
    ctx.workers = options.workers;
    ctx.config_fingerprint = fp;
    ctx.inputs = inputs;
    ctx.strict = config.strict;
    ctx.continue_on_error = config.continue_on_error;
    ctx.artifact_dir = out_dir;
    try {
      std::vector<Document> input;
      if (i > 0) {
        input = read_records(out_dir / (config.stages[i - 1].name + ".jsonl"));
      } else if (config.stages[0].kind != "ingest") {
        // No ingest stage: read the inputs as they are, malformed lines abort.
        ReadOptions ro;
        ro.strict = config.strict;
        input = read_corpus(inputs, ro);
        check_unique_ids(input);
      }
      StageOutput out = stages[i]->run(std::move(input), ctx);
      write_records(out_dir / (ctx.name + ".jsonl"), out.docs);
      save_manifest(manifest_path(out_dir, ctx.name), out.manifest);
      result.manifests.push_back(std::move(out.manifest));
      if (i + 1 == stages.size()) last_output = std::move(out.docs);
    } catch (const std::exception& e) {
      result.status = ExitStatus::kRuntime;
      result.error = "stage " + ctx.name + ": " + e.what();
      try {
        finish("failed", result.error);
      } catch (const std::exception&) {
      }
      return result;
    }
    if (!options.quiet) {
      const auto& t = result.manifests.back().totals;
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "[%s] %lld in, %lld kept, %lld dropped (%.1fs)\n", ctx.name.c_str(),
                   static_cast<long long>(t.input_count), static_cast<long long>(t.kept_count),
                   static_cast<long long>(t.dropped_count), secs);
    }
  }

  bool partial = false;
  for (const auto& m : result.manifests) partial = partial || !m.failed_shards.empty();
  result.status = partial ? ExitStatus::kPartial : ExitStatus::kOk;

  try {
    StageContext ctx;
    ctx.tokenizer = &*tokenizer;
    ctx.workers = options.workers;
    const auto tokens = count_tokens(last_output, ctx);
    const CorpusStats stats = corpus_stats(last_output, tokens, result.manifests);
    write_text(out_dir / "report.txt", render_table(stats));
    ordered_json summary = summary_json(config, fp, tok_fp, partial ? "partial" : "ok", "",
                                        result.manifests);
    summary["stats"] = to_json(stats);
    write_text(out_dir / "run_summary.json", summary.dump(2) + "\n");
  } catch (const std::exception& e) {
    result.status = ExitStatus::kRuntime;
    result.error = std::string("report: ") + e.what();
  }
  return result;
}

}  // namespace textmill
