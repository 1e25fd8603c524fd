#include "textmill/quality.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/random.hpp"
#include "textmill/unicode.hpp"

namespace textmill {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- rules

void RuleSet::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string(name) + " must be in [0, 1]");
    }
  };
  fraction(max_brace_density, "max_brace_density");
  fraction(max_symbol_ratio, "max_symbol_ratio");
  if (use_min_lines && terminal_punctuation.empty()) {
    throw ValidationError("terminal_punctuation must not be empty when min_lines is enabled");
  }
  for (const auto& phrase : blacklist) {
    if (phrase.empty()) throw ValidationError("blacklist phrases must be non-empty");
  }
}

RuleSet RuleSet::from_json(const json& j) {
  RuleSet r;
  if (!j.is_object()) throw ValidationError("rule set must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "use_blacklist") r.use_blacklist = v.get<bool>();
      else if (key == "blacklist") r.blacklist = v.get<std::vector<std::string>>();
      else if (key == "use_brace_density") r.use_brace_density = v.get<bool>();
      else if (key == "max_brace_density") r.max_brace_density = v.get<double>();
      else if (key == "use_symbol_ratio") r.use_symbol_ratio = v.get<bool>();
      else if (key == "max_symbol_ratio") r.max_symbol_ratio = v.get<double>();
      else if (key == "use_min_tokens") r.use_min_tokens = v.get<bool>();
      else if (key == "min_tokens") r.min_tokens = v.get<std::size_t>();
      else if (key == "use_min_lines") r.use_min_lines = v.get<bool>();
      else if (key == "min_lines") r.min_lines = v.get<std::size_t>();
      else if (key == "terminal_punctuation") r.terminal_punctuation = to_codepoints(v.get<std::string>());
      else throw ValidationError("unknown rule parameter \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad rule parameter: ") + e.what());
  }
  r.validate();
  return r;
}

ordered_json RuleSet::to_json() const {
  ordered_json j;
  j["use_blacklist"] = use_blacklist;
  j["blacklist"] = blacklist;
  j["use_brace_density"] = use_brace_density;
  j["max_brace_density"] = max_brace_density;
  j["use_symbol_ratio"] = use_symbol_ratio;
  j["max_symbol_ratio"] = max_symbol_ratio;
  j["use_min_tokens"] = use_min_tokens;
  j["min_tokens"] = min_tokens;
  j["use_min_lines"] = use_min_lines;
  j["min_lines"] = min_lines;
  j["terminal_punctuation"] = to_utf8(terminal_punctuation);
  return j;
}

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool is_closing_quote(char32_t cp) {
  static constexpr std::u32string_view kClosers = U"\"')]”’」』）》〉】";
  return kClosers.find(cp) != std::u32string_view::npos;
}

std::size_t count_content_lines(std::string_view text, std::u32string_view terminal) {
  std::size_t lines = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::u32string cps = to_codepoints(text.substr(start, end - start));
    std::size_t n = cps.size();
    while (n > 0 && (is_whitespace(cps[n - 1]) || is_closing_quote(cps[n - 1]))) --n;
    if (n > 0 && terminal.find(cps[n - 1]) != std::u32string_view::npos) ++lines;
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::optional<std::string_view> apply_rules(std::string_view text, const RuleSet& rules,
                                            const Tokenizer& tokenizer) {
  if (rules.use_blacklist && !rules.blacklist.empty()) {
    const std::string lowered = ascii_lower(text);
    for (const auto& phrase : rules.blacklist) {
      if (lowered.find(ascii_lower(phrase)) != std::string::npos) return reject::kPlaceholder;
    }
  }

  if (rules.use_brace_density || rules.use_symbol_ratio) {
    std::size_t visible = 0;
    std::size_t braces = 0;
    std::size_t symbols = 0;
    for_each_codepoint(text, [&](char32_t cp, std::size_t, std::size_t) {
      const CharClass cls = classify(cp);
      if (cls == CharClass::kWhitespace) return;
      ++visible;
      if (cp == U'{' || cp == U'}' || cp == U';') ++braces;
      if (cls == CharClass::kPunctuation || cls == CharClass::kSymbol) ++symbols;
    });
    const double denom = visible == 0 ? 1.0 : static_cast<double>(visible);
    if (rules.use_brace_density && static_cast<double>(braces) / denom > rules.max_brace_density) {
      return reject::kCodeLike;
    }
    if (rules.use_symbol_ratio && static_cast<double>(symbols) / denom > rules.max_symbol_ratio) {
      return reject::kSymbolHeavy;
    }
  }

  if (rules.use_min_tokens) {
    std::size_t tokens = 0;
    if (tokenizer.preserve_whitespace()) {
      for (auto tok : tokenizer.split(text)) tokens += Tokenizer::is_whitespace_token(tok) ? 0 : 1;
    } else {
      tokens = tokenizer.count(text);
    }
    if (tokens < rules.min_tokens) return reject::kTooShort;
  }

  if (rules.use_min_lines &&
      count_content_lines(text, rules.terminal_punctuation) < rules.min_lines) {
    return reject::kTooFewLines;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- data

std::vector<QualityExample> read_labeled_examples(const std::filesystem::path& path, bool strict) {
  ReadOptions opts;
  opts.strict = strict;
  std::vector<QualityExample> out;
  for (auto& doc : read_records(path, opts)) {
    auto it = doc.meta.find("label");
    if (it == doc.meta.end()) {
      throw FormatError(path.string() + ": record \"" + doc.id + "\" has no meta.label",
                        doc.order.record + 1);
    }
    if (it->second != "positive" && it->second != "negative") {
      throw FormatError(path.string() + ": label must be positive or negative, got \"" +
                            it->second + "\"",
                        doc.order.record + 1);
    }
    out.push_back({std::move(doc.text), it->second == "positive"});
  }
  return out;
}

void QualityConfig::validate() const {
  if (orders.empty()) throw ValidationError("quality model needs at least one n-gram order");
  for (int n : orders) {
    if (n < 1 || n > 16) throw ValidationError("n-gram orders must be in [1, 16]");
  }
  if (bucket_count == 0) throw ValidationError("bucket_count must be positive");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(l2 >= 0.0)) throw ValidationError("l2 must be non-negative");
  if (!(keep_threshold >= 0.0 && keep_threshold <= 1.0)) {
    throw ValidationError("keep_threshold must be in [0, 1]");
  }
}

QualityConfig QualityConfig::from_json(const json& j) {
  QualityConfig c;
  if (!j.is_object()) throw ValidationError("quality config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "orders") c.orders = v.get<std::vector<int>>();
      else if (key == "bucket_count") c.bucket_count = v.get<std::uint64_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "l2") c.l2 = v.get<double>();
      else if (key == "balance_classes") c.balance_classes = v.get<bool>();
      else if (key == "keep_threshold") c.keep_threshold = v.get<double>();
      else throw ValidationError("unknown quality parameter \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad quality parameter: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- model

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

QualityModel::QualityModel(std::vector<int> orders, std::uint64_t bucket_count,
                           double keep_threshold, std::uint64_t seed)
    : orders_(std::move(orders)),
      weights_(bucket_count, 0.0),
      keep_threshold_(keep_threshold),
      seed_(seed) {
  if (bucket_count == 0) throw ValidationError("bucket_count must be positive");
  if (orders_.empty()) throw ValidationError("quality model needs at least one n-gram order");
}

std::uint64_t QualityModel::bucket_of(std::u32string_view gram) const {
  // Hash of the little-endian UTF-32 bytes.
  std::array<char, 64> bytes{};
  const std::size_t n = std::min<std::size_t>(gram.size(), 16);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < 4; ++i) {
      bytes[4 * k + i] = static_cast<char>((gram[k] >> (8 * i)) & 0xFF);
    }
  }
  return hash64(std::string_view(bytes.data(), 4 * n), seed_) % weights_.size();
}

std::vector<Feature> QualityModel::features(std::string_view text) const {
  std::u32string cps;
  cps.reserve(text.size());
  bool prev_space = false;
  for_each_codepoint(text, [&](char32_t cp, std::size_t, std::size_t) {
    if (is_whitespace(cp)) {
      if (!prev_space) cps.push_back(U' ');
      prev_space = true;
    } else {
      cps.push_back(cp);
      prev_space = false;
    }
  });

  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  const std::u32string_view view(cps);
  for (int n : orders_) {
    const auto order = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + order <= view.size(); ++i) {
      ++counts[bucket_of(view.substr(i, order))];
    }
  }
  std::vector<Feature> feats;
  feats.reserve(counts.size());
  for (const auto& [bucket, c] : counts) {
    feats.push_back({bucket, std::log1p(static_cast<double>(c))});
  }
  std::sort(feats.begin(), feats.end(),
            [](const Feature& a, const Feature& b) { return a.bucket < b.bucket; });
  return feats;
}

double QualityModel::score_features(std::span<const Feature> feats) const {
  double z = bias_;
  for (const auto& f : feats) z += weights_[f.bucket] * f.value;
  return sigmoid(z);
}

double QualityModel::score(std::string_view text) const { return score_features(features(text)); }

namespace {

constexpr char kModelMagic[4] = {'T', 'M', 'Q', 'M'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  // Serialize little-endian regardless of host order.
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError("quality model file is truncated");
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

std::string QualityModel::serialize() const {
  std::string out(kModelMagic, 4);
  put<std::uint32_t>(out, kModelVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(orders_.size()));
  for (int n : orders_) put<std::int32_t>(out, n);
  put<std::uint64_t>(out, weights_.size());
  put<std::uint64_t>(out, seed_);
  put<double>(out, keep_threshold_);
  put<double>(out, bias_);
  for (double w : weights_) put<double>(out, w);
  return out;
}

QualityModel QualityModel::deserialize(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kModelMagic, 4)) {
    throw FormatError("not a quality model file (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kModelVersion) {
    throw FormatError("unsupported quality model version " + std::to_string(version));
  }
  const auto n_orders = take<std::uint32_t>(bytes, pos);
  if (n_orders == 0 || n_orders > 16) throw FormatError("bad n-gram order count");
  std::vector<int> orders;
  for (std::uint32_t i = 0; i < n_orders; ++i) orders.push_back(take<std::int32_t>(bytes, pos));
  const auto buckets = take<std::uint64_t>(bytes, pos);
  const auto seed = take<std::uint64_t>(bytes, pos);
  const auto threshold = take<double>(bytes, pos);
  const auto bias = take<double>(bytes, pos);
  if (buckets == 0 || (bytes.size() - pos) != buckets * sizeof(double)) {
    throw FormatError("quality model weight block size mismatch");
  }
  QualityModel m(std::move(orders), buckets, threshold, seed);
  m.bias_ = bias;
  for (auto& w : m.weights_) w = take<double>(bytes, pos);
  return m;
}

void QualityModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on " + path.string());
}

QualityModel QualityModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

QualityModel train_quality_model(std::span<const QualityExample> examples,
                                 const QualityConfig& config) {
  config.validate();
  if (examples.empty()) throw ValidationError("cannot train a quality model on an empty set");

  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (examples[i].positive ? pos_idx : neg_idx).push_back(i);
  }
  if (pos_idx.empty() || neg_idx.empty()) {
    throw ValidationError("quality training needs both positive and negative examples");
  }

  SplitMix64 rng(config.seed);
  if (config.balance_classes && pos_idx.size() != neg_idx.size()) {
    auto& major = pos_idx.size() > neg_idx.size() ? pos_idx : neg_idx;
    const std::size_t keep = std::min(pos_idx.size(), neg_idx.size());
    shuffle(std::span<std::size_t>(major), rng);
    major.resize(keep);
    std::sort(major.begin(), major.end());
  }
  std::vector<std::size_t> order;
  std::merge(pos_idx.begin(), pos_idx.end(), neg_idx.begin(), neg_idx.end(),
             std::back_inserter(order));

  QualityModel model(config.orders, config.bucket_count, config.keep_threshold, config.seed);
  std::vector<std::vector<Feature>> feats(order.size());
  std::vector<double> labels(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    feats[k] = model.features(examples[order[k]].text);
    labels[k] = examples[order[k]].positive ? 1.0 : 0.0;
  }

  std::vector<std::size_t> perm(order.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double bias = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(perm), rng);
    for (std::size_t k : perm) {
      model.set_bias(bias);
      const double g = model.score_features(feats[k]) - labels[k];
      for (const auto& f : feats[k]) {
        double& w = model.weight(f.bucket);
        w -= config.learning_rate * (g * f.value + config.l2 * w);
      }
      bias -= config.learning_rate * g;
    }
  }
  model.set_bias(bias);
  return model;
}

}  // namespace textmill
