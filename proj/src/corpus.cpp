#include "textmill/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "textmill/error.hpp"
#include "textmill/unicode.hpp"

namespace textmill {

using nlohmann::json;

bool is_valid_source(std::string_view source) {
  static constexpr std::string_view kFixed[] = {"common_crawl", "books", "news", "forums",
                                                "academic"};
  for (auto s : kFixed) {
    if (source == s) return true;
  }
  constexpr std::string_view kCustom = "custom:";
  return source.size() > kCustom.size() && source.substr(0, kCustom.size()) == kCustom;
}

namespace {

const std::string& require_string(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw FormatError(std::string("missing required field \"") + field + "\"");
  if (!it->is_string()) throw FormatError(std::string("field \"") + field + "\" is not a string");
  return it->get_ref<const std::string&>();
}

}  // namespace

Document parse_record(std::string_view line, bool strict) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw FormatError("record is not a JSON object");

  Document doc;
  doc.id = require_string(obj, "id");
  doc.source = require_string(obj, "source");
  doc.text = require_string(obj, "text");
  if (doc.id.empty()) throw FormatError("empty id");
  if (doc.text.empty()) throw FormatError("empty text");
  if (!is_valid_source(doc.source)) throw FormatError("undeclared source tag \"" + doc.source + "\"");

  if (auto it = obj.find("meta"); it != obj.end()) {
    if (!it->is_object()) throw FormatError("field \"meta\" is not an object");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw FormatError("meta value for \"" + k + "\" is not a string");
      doc.meta.emplace(k, v.get<std::string>());
    }
  }
  if (strict) {
    for (const auto& [k, v] : obj.items()) {
      if (k != "id" && k != "source" && k != "text" && k != "meta") {
        throw FormatError("unknown field \"" + k + "\"");
      }
    }
  }
  return doc;
}

std::string serialize_record(const Document& doc) {
  std::string out = "{\"id\":";
  out += json(doc.id).dump();
  out += ",\"source\":";
  out += json(doc.source).dump();
  out += ",\"text\":";
  out += json(doc.text).dump();
  out += ",\"meta\":";
  out += json(doc.meta).dump();
  out += '}';
  return out;
}

std::vector<Document> read_records(const std::filesystem::path& path, const ReadOptions& options,
                                   ReadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::vector<Document> docs;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    const std::size_t lineno = index + 1;
    try {
      if (line.empty()) throw FormatError("blank line");
      Document doc = parse_record(line, options.strict);
      doc.order = {options.shard, index};
      docs.push_back(std::move(doc));
    } catch (const FormatError& e) {
      if (options.policy == MalformedPolicy::kAbort) {
        throw FormatError(path.string() + ": " + e.what(), lineno);
      }
      if (report) report->malformed.push_back({lineno, e.what()});
    }
    ++index;
  }
  if (in.bad()) throw IoError("read error on " + path.string());
  if (report) report->lines += index;
  return docs;
}

std::vector<Document> read_corpus(std::span<const std::filesystem::path> paths,
                                  const ReadOptions& options, ReadReport* report) {
  std::vector<Document> all;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    ReadOptions opts = options;
    opts.shard = static_cast<std::uint32_t>(i);
    auto docs = read_records(paths[i], opts, report);
    all.insert(all.end(), std::make_move_iterator(docs.begin()),
               std::make_move_iterator(docs.end()));
  }
  return all;
}

void write_records(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& doc : docs) {
    out << serialize_record(doc) << '\n';
  }
  if (!out) throw IoError("write error on " + path.string());
}

void check_unique_ids(std::span<const Document> docs) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(docs.size());
  for (const auto& d : docs) {
    if (!seen.insert(d.id).second) throw ValidationError("duplicate document id \"" + d.id + "\"");
  }
}

std::optional<LanguageGuess> detect_language(std::string_view text, double threshold) {
  std::size_t ideographs = 0;
  std::size_t letters = 0;
  for_each_codepoint(text, [&](char32_t cp, std::size_t, std::size_t) {
    switch (classify(cp)) {
      case CharClass::kIdeograph: ++ideographs; break;
      case CharClass::kLetter: ++letters; break;
      default: break;
    }
  });
  const std::size_t denom = ideographs + letters;
  if (denom == 0) return std::nullopt;
  LanguageGuess g;
  g.cjk_ratio = static_cast<double>(ideographs) / static_cast<double>(denom);
  g.tag = g.cjk_ratio >= threshold ? "zh" : "other";
  return g;
}

}  // namespace textmill
