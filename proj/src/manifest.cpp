#include "textmill/manifest.hpp"

#include <fstream>
#include <sstream>

#include "textmill/error.hpp"

namespace textmill {

using nlohmann::json;
using nlohmann::ordered_json;

bool Tally::conserved() const {
  std::int64_t by_reason = 0;
  for (const auto& [_, n] : dropped_by_reason) by_reason += n;
  return kept_count + dropped_count == input_count &&
         kept_tokens + dropped_tokens == input_tokens && by_reason == dropped_count;
}

namespace {

void add_input(Tally& t, std::int64_t tokens) {
  ++t.input_count;
  t.input_tokens += tokens;
}

ordered_json tally_json(const Tally& t) {
  ordered_json j;
  j["input_count"] = t.input_count;
  j["kept_count"] = t.kept_count;
  j["dropped_count"] = t.dropped_count;
  j["input_tokens"] = t.input_tokens;
  j["kept_tokens"] = t.kept_tokens;
  j["dropped_tokens"] = t.dropped_tokens;
  j["emitted_count"] = t.emitted_count;
  j["emitted_tokens"] = t.emitted_tokens;
  j["dropped_by_reason"] = ordered_json::object();
  for (const auto& [k, v] : t.dropped_by_reason) j["dropped_by_reason"][k] = v;
  return j;
}

Tally tally_from_json(const json& j) {
  Tally t;
  t.input_count = j.at("input_count").get<std::int64_t>();
  t.kept_count = j.at("kept_count").get<std::int64_t>();
  t.dropped_count = j.at("dropped_count").get<std::int64_t>();
  t.input_tokens = j.at("input_tokens").get<std::int64_t>();
  t.kept_tokens = j.at("kept_tokens").get<std::int64_t>();
  t.dropped_tokens = j.at("dropped_tokens").get<std::int64_t>();
  t.emitted_count = j.at("emitted_count").get<std::int64_t>();
  t.emitted_tokens = j.at("emitted_tokens").get<std::int64_t>();
  for (const auto& [k, v] : j.at("dropped_by_reason").items()) {
    t.dropped_by_reason[k] = v.get<std::int64_t>();
  }
  return t;
}

}  // namespace

void StageManifest::record_keep(const Document& doc, std::int64_t tokens) {
  for (Tally* t : {&totals, &per_source[doc.source]}) {
    add_input(*t, tokens);
    ++t->kept_count;
    t->kept_tokens += tokens;
    ++t->emitted_count;
    t->emitted_tokens += tokens;
  }
}

void StageManifest::record_drop(const Document& doc, std::int64_t tokens,
                                std::string_view reason) {
  for (Tally* t : {&totals, &per_source[doc.source]}) {
    add_input(*t, tokens);
    ++t->dropped_count;
    t->dropped_tokens += tokens;
    ++t->dropped_by_reason[std::string(reason)];
  }
}

void StageManifest::record_emit(const Document& doc, std::int64_t tokens) {
  for (Tally* t : {&totals, &per_source[doc.source]}) {
    ++t->emitted_count;
    t->emitted_tokens += tokens;
  }
}

bool StageManifest::conserved() const {
  if (!totals.conserved()) return false;
  Tally sum;
  for (const auto& [_, t] : per_source) {
    if (!t.conserved()) return false;
    sum.input_count += t.input_count;
    sum.kept_count += t.kept_count;
    sum.dropped_count += t.dropped_count;
    sum.input_tokens += t.input_tokens;
    sum.kept_tokens += t.kept_tokens;
    sum.dropped_tokens += t.dropped_tokens;
    sum.emitted_count += t.emitted_count;
    sum.emitted_tokens += t.emitted_tokens;
    for (const auto& [k, v] : t.dropped_by_reason) sum.dropped_by_reason[k] += v;
  }
  return sum == totals;
}

ordered_json to_json(const StageManifest& m) {
  ordered_json j;
  j["stage"] = m.stage;
  j["kind"] = m.kind;
  j["config_fingerprint"] = m.config_fingerprint;
  j["tokenizer"] = m.tokenizer;
  j["seed"] = m.seed;
  j["totals"] = tally_json(m.totals);
  j["per_source"] = ordered_json::object();
  for (const auto& [src, t] : m.per_source) j["per_source"][src] = tally_json(t);
  j["failed_shards"] = m.failed_shards;
  return j;
}

StageManifest manifest_from_json(const json& j) {
  try {
    StageManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.kind = j.at("kind").get<std::string>();
    m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    m.tokenizer = j.at("tokenizer").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.totals = tally_from_json(j.at("totals"));
    for (const auto& [src, t] : j.at("per_source").items()) m.per_source[src] = tally_from_json(t);
    m.failed_shards = j.at("failed_shards").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
}

std::string dump_manifest(const StageManifest& m) { return to_json(m).dump(2) + "\n"; }

void save_manifest(const std::filesystem::path& path, const StageManifest& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << dump_manifest(m);
  if (!out) throw IoError("write error on " + path.string());
}

StageManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

std::filesystem::path manifest_path(const std::filesystem::path& dir, std::string_view stage) {
  return dir / (std::string(stage) + ".manifest.json");
}

}  // namespace textmill
