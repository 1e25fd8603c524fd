#include <algorithm>
#include <fstream>
#include <set>

#include "textmill/decontam.hpp"
#include "textmill/dedup.hpp"
#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/mixture.hpp"
#include "textmill/parallel.hpp"
#include "textmill/pipeline.hpp"
#include "textmill/quality.hpp"

namespace textmill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace reject {
inline constexpr std::string_view kMalformed = "malformed";
inline constexpr std::string_view kIndeterminateLanguage = "indeterminate_language";
inline constexpr std::string_view kLanguage = "language";
inline constexpr std::string_view kLowQuality = "low_quality";
inline constexpr std::string_view kNotSampled = "not_sampled";
}  // namespace reject

std::uint64_t StageContext::stage_seed() const { return hash64(name, seed); }

StageManifest begin_manifest(const StageContext& ctx, std::string_view kind) {
  StageManifest m;
  m.stage = ctx.name;
  m.kind = std::string(kind);
  m.config_fingerprint = ctx.config_fingerprint;
  m.tokenizer = ctx.tokenizer->fingerprint();
  m.seed = ctx.seed;
  return m;
}

std::vector<std::int64_t> count_tokens(std::span<const Document> docs, const StageContext& ctx) {
  std::vector<std::int64_t> tokens(docs.size());
  parallel_for(docs.size(), ctx.workers, [&](std::size_t i) {
    tokens[i] = static_cast<std::int64_t>(ctx.tokenizer->count(docs[i].text));
  });
  return tokens;
}

StageOutput apply_decisions(std::vector<Document> docs, std::span<const std::int64_t> tokens,
                            std::span<const std::string_view> reasons, const StageContext& ctx,
                            std::string_view kind) {
  StageOutput out;
  out.manifest = begin_manifest(ctx, kind);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (reasons[i].empty()) {
      out.manifest.record_keep(docs[i], tokens[i]);
      out.docs.push_back(std::move(docs[i]));
    } else {
      out.manifest.record_drop(docs[i], tokens[i], reasons[i]);
    }
  }
  return out;
}

namespace {

// Reads params with type checks; unknown keys are reported by finish().
class Params {
 public:
  Params(const json& j, std::string_view kind) : j_(j), kind_(kind) {
    if (!j_.is_object()) throw ValidationError(std::string(kind_) + ": params must be an object");
  }

  template <typename T>
  std::optional<T> get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    try {
      return it->get<T>();
    } catch (const json::exception&) {
      throw ValidationError(std::string(kind_) + ": parameter \"" + key + "\" has the wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) {
        throw ValidationError(std::string(kind_) + ": unknown parameter \"" + key + "\"");
      }
    }
  }

 private:
  const json& j_;
  std::string_view kind_;
  std::set<std::string> seen_;
};

fs::path existing_file(const fs::path& base, const std::string& p, std::string_view what) {
  fs::path path = fs::path(p).is_absolute() || base.empty() ? fs::path(p) : base / p;
  if (!fs::is_regular_file(path)) {
    throw ValidationError(std::string(what) + " not found: " + path.string());
  }
  return path;
}

std::optional<fs::path> artifact(const StageContext& ctx, std::string_view ext) {
  if (!ctx.artifact_dir) return std::nullopt;
  return *ctx.artifact_dir / (ctx.name + "." + std::string(ext));
}

// ---------------------------------------------------------------- ingest

class IngestStage final : public Stage {
 public:
  IngestStage(const json& j) {
    Params p(j, "ingest");
    threshold_ = p.get<double>("lang_threshold").value_or(kDefaultChineseThreshold);
    if (!(threshold_ > 0.0 && threshold_ <= 1.0)) {
      throw ValidationError("ingest: lang_threshold must be in (0, 1]");
    }
    drop_indeterminate_ = p.get<bool>("drop_indeterminate").value_or(true);
    for (const auto& lang : p.get<std::vector<std::string>>("keep_languages").value_or(
             std::vector<std::string>{})) {
      if (lang != "zh" && lang != "other") {
        throw ValidationError("ingest: keep_languages entries must be \"zh\" or \"other\"");
      }
      keep_.insert(lang);
    }
    p.finish();
  }

  std::string_view kind() const override { return "ingest"; }

  StageOutput run(std::vector<Document>, const StageContext& ctx) const override {
    std::vector<Document> docs;
    std::vector<std::string> failed;
    std::size_t malformed = 0;
    for (std::size_t s = 0; s < ctx.inputs.size(); ++s) {
      ReadOptions ro;
      ro.policy = ctx.strict ? MalformedPolicy::kAbort : MalformedPolicy::kSkip;
      ro.strict = ctx.strict;
      ro.shard = static_cast<std::uint32_t>(s);
      ReadReport report;
      try {
        auto shard = read_records(ctx.inputs[s], ro, &report);
        malformed += report.malformed.size();
        std::move(shard.begin(), shard.end(), std::back_inserter(docs));
      } catch (const Error&) {
        if (!ctx.continue_on_error) throw;
        failed.push_back(ctx.inputs[s].string());
      }
    }
    check_unique_ids(docs);

    std::vector<std::string_view> reasons(docs.size());
    parallel_for(docs.size(), ctx.workers, [&](std::size_t i) {
      Document& d = docs[i];
      std::string lang;
      if (auto it = d.meta.find("language"); it != d.meta.end()) {
        lang = it->second;
      } else if (auto guess = detect_language(d.text, threshold_)) {
        lang = guess->tag;
        d.meta["language"] = lang;
      } else if (drop_indeterminate_) {
        reasons[i] = reject::kIndeterminateLanguage;
        return;
      }
      if (!keep_.empty() && !keep_.count(lang)) reasons[i] = reject::kLanguage;
    });
    const auto tokens = count_tokens(docs, ctx);
    StageOutput out = apply_decisions(std::move(docs), tokens, reasons, ctx, kind());
    Document placeholder;
    placeholder.source = "(malformed)";
    for (std::size_t i = 0; i < malformed; ++i) {
      out.manifest.record_drop(placeholder, 0, reject::kMalformed);
    }
    out.manifest.failed_shards = std::move(failed);
    return out;
  }

 private:
  double threshold_ = kDefaultChineseThreshold;
  bool drop_indeterminate_ = true;
  std::set<std::string> keep_;
};

// ---------------------------------------------------------------- rules

class RulesStage final : public Stage {
 public:
  explicit RulesStage(const json& j) : rules_(RuleSet::from_json(j)) {}
  std::string_view kind() const override { return "rules"; }

  StageOutput run(std::vector<Document> docs, const StageContext& ctx) const override {
    std::vector<std::string_view> reasons(docs.size());
    parallel_for(docs.size(), ctx.workers, [&](std::size_t i) {
      if (auto r = apply_rules(docs[i], rules_, *ctx.tokenizer)) reasons[i] = *r;
    });
    const auto tokens = count_tokens(docs, ctx);
    return apply_decisions(std::move(docs), tokens, reasons, ctx, kind());
  }

 private:
  RuleSet rules_;
};

// ---------------------------------------------------------------- quality

class QualityStage final : public Stage {
 public:
  QualityStage(const json& j, const fs::path& base) {
    if (!j.is_object()) throw ValidationError("quality: params must be an object");
    json rest = j;
    if (auto m = rest.find("model"); m != rest.end()) {
      if (!m->is_string()) throw ValidationError("quality: \"model\" must be a path");
      model_path_ = existing_file(base, m->get<std::string>(), "quality model");
      rest.erase("model");
      if (auto t = rest.find("keep_threshold"); t != rest.end()) {
        if (!t->is_number()) throw ValidationError("quality: keep_threshold must be a number");
        threshold_ = t->get<double>();
        rest.erase("keep_threshold");
      }
      if (!rest.empty()) {
        throw ValidationError("quality: unknown parameter \"" + rest.begin().key() +
                              "\" alongside \"model\"");
      }
      model_ = std::make_shared<QualityModel>(QualityModel::load(*model_path_));
    } else if (auto t = rest.find("train"); t != rest.end()) {
      if (!t->is_string()) throw ValidationError("quality: \"train\" must be a path");
      train_path_ = existing_file(base, t->get<std::string>(), "quality training file");
      rest.erase("train");
      seed_given_ = rest.contains("seed");
      config_ = QualityConfig::from_json(rest);
    } else {
      throw ValidationError("quality: needs either \"model\" or \"train\"");
    }
    if (threshold_ && !(*threshold_ >= 0.0 && *threshold_ < 1.0)) {
      throw ValidationError("quality: keep_threshold must be in [0, 1)");
    }
  }

  std::string_view kind() const override { return "quality"; }

  StageOutput run(std::vector<Document> docs, const StageContext& ctx) const override {
    std::shared_ptr<const QualityModel> model = model_;
    if (!model) {
      QualityConfig cfg = config_;
      if (!seed_given_) cfg.seed = ctx.stage_seed();
      const auto examples = read_labeled_examples(*train_path_, ctx.strict);
      auto trained = std::make_shared<QualityModel>(train_quality_model(examples, cfg));
      if (auto path = artifact(ctx, "model")) trained->save(*path);
      model = trained;
    }
    const double threshold = threshold_.value_or(model->keep_threshold());
    std::vector<std::string_view> reasons(docs.size());
    parallel_for(docs.size(), ctx.workers, [&](std::size_t i) {
      if (!(model->score(docs[i].text) > threshold)) reasons[i] = reject::kLowQuality;
    });
    const auto tokens = count_tokens(docs, ctx);
    return apply_decisions(std::move(docs), tokens, reasons, ctx, kind());
  }

 private:
  std::optional<fs::path> model_path_;
  std::optional<fs::path> train_path_;
  std::shared_ptr<const QualityModel> model_;
  QualityConfig config_;
  bool seed_given_ = false;
  std::optional<double> threshold_;
};

// ---------------------------------------------------------------- dedup

class ExactDedupStage final : public Stage {
 public:
  explicit ExactDedupStage(const json& j) { Params(j, "exact_dedup").finish(); }
  std::string_view kind() const override { return "exact_dedup"; }

  StageOutput run(std::vector<Document> docs, const StageContext& ctx) const override {
    std::vector<std::optional<ExactKey>> keys(docs.size());
    parallel_for(docs.size(), ctx.workers, [&](std::size_t i) { keys[i] = exact_key(docs[i]); });
    std::vector<std::string_view> reasons;
    exact_dedup(docs, keys, &reasons);
    const auto tokens = count_tokens(docs, ctx);
    return apply_decisions(std::move(docs), tokens, reasons, ctx, kind());
  }
};

class NearDedupStage final : public Stage {
 public:
  explicit NearDedupStage(const json& j) {
    Params p(j, "near_dedup");
    radius_ = p.get<int>("radius").value_or(3);
    bands_ = p.get<int>("bands").value_or(4);
    p.finish();
    BandedIndex check(bands_, radius_);
  }
  std::string_view kind() const override { return "near_dedup"; }

  StageOutput run(std::vector<Document> docs, const StageContext& ctx) const override {
    std::vector<std::optional<std::uint64_t>> fps(docs.size());
    parallel_for(docs.size(), ctx.workers, [&](std::size_t i) { fps[i] = simhash(docs[i].text); });

    std::vector<std::string_view> reasons(docs.size());
    std::vector<SimHashSignature> sigs;
    std::vector<std::size_t> sig_doc;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (!fps[i]) {
        reasons[i] = reject::kEmptyAfterNormalize;
        continue;
      }
      sigs.push_back({*fps[i], docs[i].id, docs[i].order});
      sig_doc.push_back(i);
    }
    const NearDedupResult result = near_dedup(sigs, radius_, bands_);
    for (std::size_t r : result.removed) reasons[sig_doc[r]] = reject::kNearDuplicate;
    if (auto path = artifact(ctx, "sigs")) write_signatures(*path, sigs);

    const auto tokens = count_tokens(docs, ctx);
    return apply_decisions(std::move(docs), tokens, reasons, ctx, kind());
  }

 private:
  int radius_ = 3;
  int bands_ = 4;
};

// ---------------------------------------------------------------- decontamination

class DecontamStage final : public Stage {
 public:
  DecontamStage(const json& j, const fs::path& base) {
    Params p(j, "decontaminate");
    if (auto e = p.get<json>("eval")) {
      std::vector<std::string> paths;
      if (e->is_string()) {
        paths.push_back(e->get<std::string>());
      } else if (e->is_array() && std::all_of(e->begin(), e->end(),
                                              [](const json& x) { return x.is_string(); })) {
        paths = e->get<std::vector<std::string>>();
      } else {
        throw ValidationError("decontaminate: \"eval\" must be a path or a list of paths");
      }
      for (const auto& path : paths) eval_.push_back(existing_file(base, path, "eval file"));
    }
    if (auto idx = p.get<std::string>("index")) index_path_ = existing_file(base, *idx, "eval index");
    if (eval_.empty() == !index_path_.has_value()) {
      throw ValidationError("decontaminate: give exactly one of \"eval\" or \"index\"");
    }
    const auto n = p.get<std::int64_t>("n").value_or(static_cast<std::int64_t>(kDefaultWindow));
    if (n < 1) throw ValidationError("decontaminate: n must be >= 1");
    n_ = static_cast<std::size_t>(n);
    semantics_ = parse_match_semantics(p.get<std::string>("semantics").value_or("overlapping"));
    p.finish();
  }
  std::string_view kind() const override { return "decontaminate"; }

  StageOutput run(std::vector<Document> docs, const StageContext& ctx) const override {
    ContaminationIndex index;
    if (index_path_) {
      index = ContaminationIndex::load(*index_path_);
      if (index.tokenizer_fingerprint() != ctx.tokenizer->fingerprint()) {
        throw ValidationError("eval index was built with tokenizer " +
                              index.tokenizer_fingerprint() + ", run uses " +
                              ctx.tokenizer->fingerprint());
      }
    } else {
      ReadOptions ro;
      ro.strict = ctx.strict;
      const auto eval_docs = read_corpus(eval_, ro);
      index = build_eval_index(eval_docs, *ctx.tokenizer, n_, ctx.workers);
      if (auto path = artifact(ctx, "index")) index.save(*path);
    }
    std::vector<std::string_view> reasons(docs.size());
    parallel_for(docs.size(), ctx.workers, [&](std::size_t i) {
      if (check_document(docs[i].text, index, *ctx.tokenizer, semantics_).remove) {
        reasons[i] = reject::kContaminated;
      }
    });
    const auto tokens = count_tokens(docs, ctx);
    return apply_decisions(std::move(docs), tokens, reasons, ctx, kind());
  }

 private:
  std::vector<fs::path> eval_;
  std::optional<fs::path> index_path_;
  std::size_t n_ = kDefaultWindow;
  MatchSemantics semantics_ = MatchSemantics::kOverlapping;
};

// ---------------------------------------------------------------- balance

class BalanceStage final : public Stage {
 public:
  BalanceStage(const json& j, const fs::path& base) {
    Params p(j, "balance");
    if (auto path = p.get<std::string>("mixture")) {
      spec_ = load_mixture_spec(existing_file(base, *path, "mixture spec"));
      for (const char* k : {"dimension", "targets", "total_tokens"}) {
        if (j.contains(k)) {
          throw ValidationError(std::string("balance: \"") + k + "\" conflicts with \"mixture\"");
        }
      }
    } else {
      spec_.dimension = p.get<std::string>("dimension").value_or("source");
      spec_.target = p.get<std::map<std::string, double>>("targets").value_or(
          std::map<std::string, double>{});
      spec_.total_tokens = p.get<double>("total_tokens").value_or(0.0);
      // Validates targets and T; availability comes from the input.
      std::map<std::string, double> dummy;
      for (const auto& [g, _] : spec_.target) dummy[g] = 1.0;
      compute_mixture(dummy, spec_.target, spec_.total_tokens, spec_.dimension);
    }
    budget_ = p.get<std::int64_t>("budget");
    if (budget_ && *budget_ < 0) throw ValidationError("balance: budget must be >= 0");
    p.finish();
  }
  std::string_view kind() const override { return "balance"; }

  StageOutput run(std::vector<Document> docs, const StageContext& ctx) const override {
    const auto tokens = count_tokens(docs, ctx);
    MixtureSpec spec = spec_;
    if (spec.multiplier.empty()) {
      std::map<std::string, double> available;
      for (const auto& [g, _] : spec.target) available[g] = 0.0;
      for (std::size_t i = 0; i < docs.size(); ++i) {
        available[group_of(docs[i], spec.dimension)] += static_cast<double>(tokens[i]);
      }
      spec = compute_mixture(available, spec.target, spec.total_tokens, spec.dimension);
    }
    if (auto path = artifact(ctx, "mixture")) {
      std::ofstream(*path, std::ios::binary) << format_mixture_spec(spec);
    }
    const auto copies = sample_stream(docs, tokens, spec, ctx.stage_seed(), budget_);

    StageOutput out;
    out.manifest = begin_manifest(ctx, kind());
    std::vector<std::uint32_t> n_copies(docs.size(), 0);
    for (const auto& c : copies) ++n_copies[c.doc];
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (n_copies[i] == 0) out.manifest.record_drop(docs[i], tokens[i], reject::kNotSampled);
    }
    for (const auto& c : copies) {
      Document d = docs[c.doc];
      if (c.copy > 0) {
        d.id += "@" + std::to_string(c.copy);
        d.meta["replica"] = std::to_string(c.copy);
      }
      out.docs.push_back(std::move(d));
    }
    // Tally per source document: first emitted copy keeps, the rest emit.
    std::vector<bool> seen(docs.size(), false);
    for (const auto& c : copies) {
      if (!seen[c.doc]) {
        seen[c.doc] = true;
        out.manifest.record_keep(docs[c.doc], tokens[c.doc]);
      } else {
        out.manifest.record_emit(docs[c.doc], tokens[c.doc]);
      }
    }
    return out;
  }

 private:
  MixtureSpec spec_;
  std::optional<std::int64_t> budget_;
};

}  // namespace

const std::vector<std::string>& stage_kinds() {
  static const std::vector<std::string> kinds = {
      "ingest", "rules", "quality", "exact_dedup", "near_dedup", "decontaminate", "balance"};
  return kinds;
}

std::unique_ptr<Stage> make_stage(std::string_view kind, const json& params,
                                  const fs::path& base_dir) {
  const json p = params.is_null() ? json::object() : params;
  if (kind == "ingest") return std::make_unique<IngestStage>(p);
  if (kind == "rules") return std::make_unique<RulesStage>(p);
  if (kind == "quality") return std::make_unique<QualityStage>(p, base_dir);
  if (kind == "exact_dedup") return std::make_unique<ExactDedupStage>(p);
  if (kind == "near_dedup") return std::make_unique<NearDedupStage>(p);
  if (kind == "decontaminate") return std::make_unique<DecontamStage>(p, base_dir);
  if (kind == "balance") return std::make_unique<BalanceStage>(p, base_dir);
  std::string known;
  for (const auto& k : stage_kinds()) known += (known.empty() ? "" : ", ") + k;
  throw ValidationError("unknown stage kind \"" + std::string(kind) + "\" (known: " + known + ")");
}

}  // namespace textmill
