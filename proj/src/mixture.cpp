#include "textmill/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "textmill/error.hpp"
#include "textmill/random.hpp"

namespace textmill {

double MixtureSpec::expected_tokens(const std::string& group) const {
  auto m = multiplier.find(group);
  auto a = available.find(group);
  if (m == multiplier.end() || a == available.end()) return 0.0;
  return m->second * a->second;
}

MixtureSpec compute_mixture(const std::map<std::string, double>& available,
                            const std::map<std::string, double>& target, double total_tokens,
                            std::string dimension) {
  if (!std::isfinite(total_tokens) || total_tokens <= 0.0) {
    throw ValidationError("mixture token budget must be positive");
  }
  if (target.empty()) throw ValidationError("mixture has no target groups");
  double sum = 0.0;
  for (const auto& [g, t] : target) {
    if (!std::isfinite(t) || t < 0.0) throw ValidationError("negative target for group " + g);
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", sum);
    throw ValidationError(std::string("mixture targets sum to ") + buf + ", not 1");
  }
  for (const auto& [g, a] : available) {
    if (!std::isfinite(a) || a < 0.0) throw ValidationError("negative availability for group " + g);
  }

  MixtureSpec spec;
  spec.dimension = std::move(dimension);
  spec.target = target;
  spec.available = available;
  spec.total_tokens = total_tokens;
  for (const auto& [g, t] : target) {
    auto it = available.find(g);
    const double a = it == available.end() ? 0.0 : it->second;
    if (t > 0.0 && a <= 0.0) {
      throw ValidationError("group " + g + " has a positive target but no available tokens");
    }
    spec.multiplier[g] = t > 0.0 ? t * total_tokens / a : 0.0;
  }
  for (const auto& [g, _] : available) spec.multiplier.try_emplace(g, 0.0);
  return spec;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& s, std::size_t lineno) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw FormatError("not a number: \"" + s + "\"", lineno);
  return v;
}

}  // namespace

MixtureSpec parse_mixture_spec(std::string_view text) {
  std::string dimension = "source";
  std::optional<double> total;
  std::map<std::string, double> target, available;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value", lineno);
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key == "dimension") {
      if (value.empty()) throw FormatError("empty dimension", lineno);
      dimension = value;
    } else if (key == "total_tokens") {
      total = parse_number(value, lineno);
    } else if (key.rfind("target.", 0) == 0 && key.size() > 7) {
      if (!target.emplace(key.substr(7), parse_number(value, lineno)).second) {
        throw FormatError("duplicate key " + key, lineno);
      }
    } else if (key.rfind("available.", 0) == 0 && key.size() > 10) {
      if (!available.emplace(key.substr(10), parse_number(value, lineno)).second) {
        throw FormatError("duplicate key " + key, lineno);
      }
    } else {
      throw FormatError("unknown key \"" + key + "\"", lineno);
    }
  }
  if (!total) throw FormatError("mixture spec is missing total_tokens");

  bool complete = true;
  for (const auto& [g, t] : target) {
    if (t > 0.0 && !available.count(g)) complete = false;
  }
  if (complete && !available.empty()) return compute_mixture(available, target, *total, dimension);

  // Availability to be measured later; still validate the targets.
  if (!std::isfinite(*total) || *total <= 0.0) {
    throw ValidationError("mixture token budget must be positive");
  }
  if (target.empty()) throw ValidationError("mixture has no target groups");
  double sum = 0.0;
  for (const auto& [g, t] : target) {
    if (!std::isfinite(t) || t < 0.0) throw ValidationError("negative target for group " + g);
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("mixture targets do not sum to 1");
  MixtureSpec spec;
  spec.dimension = dimension;
  spec.target = target;
  spec.available = available;
  spec.total_tokens = *total;
  return spec;
}

MixtureSpec load_mixture_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_mixture_spec(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_mixture_spec(const MixtureSpec& spec) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "dimension = " << spec.dimension << "\n";
  out << "total_tokens = " << num(spec.total_tokens) << "\n";
  for (const auto& [g, t] : spec.target) out << "target." << g << " = " << num(t) << "\n";
  for (const auto& [g, a] : spec.available) out << "available." << g << " = " << num(a) << "\n";
  for (const auto& [g, m] : spec.multiplier) {
    out << "# multiplier." << g << " = " << num(m) << "\n";
  }
  return out.str();
}

std::string group_of(const Document& doc, std::string_view dimension) {
  if (dimension == "source") return doc.source;
  if (auto it = doc.meta.find(std::string(dimension)); it != doc.meta.end()) return it->second;
  if (dimension == "language") {
    auto guess = detect_language(doc.text);
    return guess ? guess->tag : "indeterminate";
  }
  throw ValidationError("document \"" + doc.id + "\" has no value for mixture dimension \"" +
                        std::string(dimension) + "\"");
}

std::uint32_t replay_count(std::string_view doc_id, double multiplier, std::uint64_t seed) {
  if (!(multiplier > 0.0)) return 0;
  const double whole = std::floor(multiplier);
  const double frac = multiplier - whole;
  const double u = to_unit(counter_draw(seed, doc_id, 0));
  return static_cast<std::uint32_t>(whole) + (u < frac ? 1u : 0u);
}

std::vector<SampledCopy> sample_stream(std::span<const Document> docs,
                                       std::span<const std::int64_t> tokens,
                                       const MixtureSpec& spec, std::uint64_t seed,
                                       std::optional<std::int64_t> budget) {
  if (tokens.size() != docs.size()) throw ValidationError("sample_stream: token count mismatch");
  if (budget && *budget < 0) throw ValidationError("sampling budget must be non-negative");

  std::vector<SampledCopy> copies;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::string g = group_of(docs[i], spec.dimension);
    auto it = spec.multiplier.find(g);
    if (it == spec.multiplier.end()) {
      throw ValidationError("group \"" + g + "\" of document \"" + docs[i].id +
                            "\" is not declared in the mixture");
    }
    const std::uint32_t n = replay_count(docs[i].id, it->second, seed);
    for (std::uint32_t c = 0; c < n; ++c) {
      copies.push_back({i, c});
      total += tokens[i];
    }
  }
  if (!budget || total <= *budget) return copies;

  std::vector<std::pair<std::uint64_t, std::size_t>> priority(copies.size());
  for (std::size_t k = 0; k < copies.size(); ++k) {
    priority[k] = {counter_draw(seed, docs[copies[k].doc].id, 1 + std::uint64_t{copies[k].copy}), k};
  }
  std::sort(priority.begin(), priority.end());
  std::vector<bool> admitted(copies.size(), false);
  std::int64_t used = 0;
  for (const auto& [_, k] : priority) {
    if (used == *budget) break;
    if (used + tokens[copies[k].doc] > *budget) continue;
    admitted[k] = true;
    used += tokens[copies[k].doc];
  }
  std::vector<SampledCopy> out;
  for (std::size_t k = 0; k < copies.size(); ++k) {
    if (admitted[k]) out.push_back(copies[k]);
  }
  return out;
}

// ---------------------------------------------------------------- stats

std::size_t length_bin(std::int64_t tokens) {
  if (tokens < 2) return 0;
  std::size_t b = 0;
  auto v = static_cast<std::uint64_t>(tokens);
  while (v > 1) {
    v >>= 1;
    ++b;
  }
  return std::min(b, kLengthBins - 1);
}

CorpusStats corpus_stats(std::span<const Document> docs, std::span<const std::int64_t> tokens,
                         std::span<const StageManifest> manifests, std::string_view dimension) {
  if (tokens.size() != docs.size()) throw ValidationError("corpus_stats: token count mismatch");
  CorpusStats stats;
  stats.dimension = std::string(dimension);
  for (const auto& m : manifests) {
    if (m.config_fingerprint != manifests.front().config_fingerprint) {
      throw ValidationError("manifests come from different configurations (" +
                            manifests.front().config_fingerprint + " vs " +
                            m.config_fingerprint + ")");
    }
    stats.stages.push_back({m.stage, m.kind, m.totals});
  }
  if (!manifests.empty()) stats.config_fingerprint = manifests.front().config_fingerprint;

  for (std::size_t i = 0; i < docs.size(); ++i) {
    GroupStats& g = stats.groups[group_of(docs[i], dimension)];
    ++g.documents;
    g.tokens += tokens[i];
    ++g.length_histogram[length_bin(tokens[i])];
    if (auto t = docs[i].meta.find("topic"); t != docs[i].meta.end()) ++g.topics[t->second];
    ++stats.documents;
    stats.tokens += tokens[i];
  }
  for (auto& [_, g] : stats.groups) {
    g.proportion = stats.tokens > 0 ? static_cast<double>(g.tokens) / stats.tokens : 0.0;
  }

  // %filtered needs per-source rows, so only for the source dimension.
  const StageManifest* last_filter = nullptr;
  for (const auto& m : manifests) {
    if (m.kind != "balance") last_filter = &m;
  }
  if (dimension == "source" && last_filter != nullptr) {
    const StageManifest& first = manifests.front();
    for (const auto& [src, t0] : first.per_source) {
      if (t0.input_tokens <= 0) continue;
      std::int64_t kept = 0;
      if (auto it = last_filter->per_source.find(src); it != last_filter->per_source.end()) {
        kept = it->second.kept_tokens;
      }
      stats.groups[src].filtered_fraction =
          1.0 - static_cast<double>(kept) / static_cast<double>(t0.input_tokens);
    }
  }
  return stats;
}

nlohmann::ordered_json to_json(const CorpusStats& stats) {
  nlohmann::ordered_json j;
  j["dimension"] = stats.dimension;
  j["config_fingerprint"] = stats.config_fingerprint;
  j["documents"] = stats.documents;
  j["tokens"] = stats.tokens;
  j["groups"] = nlohmann::ordered_json::object();
  for (const auto& [name, g] : stats.groups) {
    nlohmann::ordered_json row;
    row["documents"] = g.documents;
    row["tokens"] = g.tokens;
    row["proportion"] = g.proportion;
    row["filtered_fraction"] =
        g.filtered_fraction ? nlohmann::ordered_json(*g.filtered_fraction) : nullptr;
    row["length_histogram_log2"] = g.length_histogram;
    row["topics"] = g.topics;
    j["groups"][name] = row;
  }
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : stats.stages) {
    nlohmann::ordered_json row;
    row["stage"] = s.stage;
    row["kind"] = s.kind;
    row["input_count"] = s.totals.input_count;
    row["kept_count"] = s.totals.kept_count;
    row["dropped_count"] = s.totals.dropped_count;
    row["input_tokens"] = s.totals.input_tokens;
    row["kept_tokens"] = s.totals.kept_tokens;
    row["emitted_tokens"] = s.totals.emitted_tokens;
    j["stages"].push_back(row);
  }
  return j;
}

namespace {

std::string fmt_tokens(std::int64_t n) {
  char buf[32];
  if (n >= 1'000'000'000) std::snprintf(buf, sizeof buf, "%.2fB", n / 1e9);
  else if (n >= 1'000'000) std::snprintf(buf, sizeof buf, "%.2fM", n / 1e6);
  else if (n >= 10'000) std::snprintf(buf, sizeof buf, "%.1fK", n / 1e3);
  else std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(n));
  return buf;
}

std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

void emit_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()));
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == 0) {
        out << r[c] << std::string(width[c] - r[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - r[c].size(), ' ') << r[c];
      }
    }
    out << '\n';
  }
}

}  // namespace

std::string render_table(const CorpusStats& stats) {
  std::ostringstream out;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({stats.dimension, "%Filtered", "#Remaining Tokens", "Proportion", "#Docs"});
  for (const auto& [name, g] : stats.groups) {
    rows.push_back({name, g.filtered_fraction ? fmt_pct(*g.filtered_fraction) : "-",
                    fmt_tokens(g.tokens), fmt_pct(g.proportion), std::to_string(g.documents)});
  }
  rows.push_back({"total", "", fmt_tokens(stats.tokens), stats.tokens > 0 ? "100.0%" : "0.0%",
                  std::to_string(stats.documents)});
  emit_table(out, rows);

  if (!stats.stages.empty()) {
    out << '\n';
    rows.clear();
    rows.push_back({"stage", "input", "kept", "dropped", "%dropped", "input tokens", "kept tokens"});
    for (const auto& s : stats.stages) {
      const double frac = s.totals.input_count > 0
                              ? static_cast<double>(s.totals.dropped_count) / s.totals.input_count
                              : 0.0;
      rows.push_back({s.stage, std::to_string(s.totals.input_count),
                      std::to_string(s.totals.kept_count), std::to_string(s.totals.dropped_count),
                      fmt_pct(frac), fmt_tokens(s.totals.input_tokens),
                      fmt_tokens(s.totals.kept_tokens)});
    }
    emit_table(out, rows);
  }

  out << "\ndocument length (tokens, log2 bins)\n";
  rows.clear();
  std::size_t max_bin = 0;
  for (const auto& [_, g] : stats.groups) {
    for (std::size_t b = 0; b < kLengthBins; ++b) {
      if (g.length_histogram[b] > 0) max_bin = std::max(max_bin, b);
    }
  }
  std::vector<std::string> header{"bin"};
  for (const auto& [name, _] : stats.groups) header.push_back(name);
  rows.push_back(header);
  for (std::size_t b = 0; b <= max_bin && !stats.groups.empty(); ++b) {
    std::vector<std::string> r{b == 0 ? "<2" : ">=" + std::to_string(std::uint64_t{1} << b)};
    for (const auto& [_, g] : stats.groups) r.push_back(std::to_string(g.length_histogram[b]));
    rows.push_back(std::move(r));
  }
  emit_table(out, rows);
  return out.str();
}

}  // namespace textmill
