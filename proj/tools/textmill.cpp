// textmill command-line driver.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "textmill/corpus.hpp"
#include "textmill/decontam.hpp"
#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/mixture.hpp"
#include "textmill/oracle.hpp"
#include "textmill/pipeline.hpp"
#include "textmill/probe.hpp"
#include "textmill/promptpack.hpp"
#include "textmill/quality.hpp"
#include "textmill/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace textmill;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  bool strict = false;
  std::string tokenizer = "mixed";
  std::string vocab;
  bool drop_whitespace = false;
};

std::optional<PipelineConfig> load_config(const Globals& g) {
  if (g.config.empty()) return std::nullopt;
  return PipelineConfig::load(g.config);
}

Tokenizer make_tokenizer(const Globals& g, const std::optional<PipelineConfig>& cfg) {
  if (cfg) {
    TokenizerConfig tc = cfg->tokenizer;
    if (!tc.path.empty()) tc.path = cfg->resolve(tc.path);
    return tc.build();
  }
  TokenizerConfig tc;
  tc.kind = g.tokenizer;
  tc.preserve_whitespace = !g.drop_whitespace;
  tc.path = g.vocab;
  if (tc.kind == "vocab" && tc.path.empty()) throw ValidationError("--tokenizer vocab needs --vocab");
  return tc.build();
}

std::uint64_t resolve_seed(const Globals& g, const std::optional<PipelineConfig>& cfg) {
  if (g.seed) return *g.seed;
  return cfg ? cfg->seed : 0;
}

fs::path default_manifest(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".manifest.json");
  return p;
}

// Runs one registered stage outside a full pipeline. With --config, the
// stage parameters, tokenizer, seed and fingerprint come from the first
// stage of the same kind in that config; flags fill in the rest.
struct SingleStage {
  std::string kind;
  std::vector<std::string> inputs;
  std::string output;
  std::string manifest;
  std::string name;
  json params = json::object();
};

int run_single(const Globals& g, SingleStage s) {
  const auto cfg = load_config(g);
  fs::path base;
  if (cfg) {
    base = cfg->base_dir;
    for (const auto& st : cfg->stages) {
      if (st.kind == s.kind) {
        json merged = st.params;
        for (const auto& [k, v] : s.params.items()) merged[k] = v;
        s.params = merged;
        if (s.name.empty()) s.name = st.name;
        break;
      }
    }
  }
  if (s.name.empty()) s.name = s.kind;
  const Tokenizer tokenizer = make_tokenizer(g, cfg);
  const std::uint64_t seed = resolve_seed(g, cfg);
  auto stage = make_stage(s.kind, s.params, base);

  StageContext ctx;
  ctx.name = s.name;
  ctx.tokenizer = &tokenizer;
  ctx.seed = seed;
  ctx.workers = g.workers;
  ctx.strict = g.strict || (cfg && cfg->strict);
  ctx.continue_on_error = cfg && cfg->continue_on_error;
  if (cfg) {
    PipelineConfig c = *cfg;
    c.seed = seed;
    ctx.config_fingerprint = c.fingerprint();
  } else {
    json canon = {{"kind", s.kind}, {"params", s.params}, {"seed", seed},
                  {"tokenizer", tokenizer.fingerprint()}};
    ctx.config_fingerprint = fingerprint(canon.dump());
  }
  const fs::path out = s.output;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ctx.artifact_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");

  std::vector<Document> input;
  if (s.kind == "ingest") {
    for (const auto& p : s.inputs) ctx.inputs.emplace_back(p);
  } else {
    std::vector<fs::path> paths(s.inputs.begin(), s.inputs.end());
    ReadOptions ro;
    ro.strict = ctx.strict;
    input = read_corpus(paths, ro);
  }
  StageOutput result = stage->run(std::move(input), ctx);
  write_records(out, result.docs);
  const fs::path mpath = s.manifest.empty() ? default_manifest(out) : fs::path(s.manifest);
  save_manifest(mpath, result.manifest);
  const auto& t = result.manifest.totals;
  std::fprintf(stderr, "%s: %lld in, %lld kept, %lld dropped, %lld emitted\n", s.name.c_str(),
               static_cast<long long>(t.input_count), static_cast<long long>(t.kept_count),
               static_cast<long long>(t.dropped_count), static_cast<long long>(t.emitted_count));
  return result.manifest.failed_shards.empty() ? 0 : 3;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream in(cmd);
  std::vector<std::string> argv;
  std::string tok;
  while (in >> tok) argv.push_back(tok);
  return argv;
}

// Built-in oracle trained on a corpus, or an external process plus the
// vocabulary it was trained with.
struct OracleHandle {
  Vocabulary vocab;
  std::unique_ptr<GenerationOracle> oracle;
};

OracleHandle open_oracle(const std::vector<std::string>& corpus, std::size_t order,
                         const std::string& command, const std::string& vocab_path,
                         const Tokenizer& tokenizer, bool strict) {
  OracleHandle h;
  if (!command.empty()) {
    if (vocab_path.empty()) throw ValidationError("--oracle-cmd needs --oracle-vocab");
    h.vocab = Vocabulary::load(vocab_path);
    h.oracle = std::make_unique<SubprocessOracle>(split_command(command));
    if (h.oracle->vocab_size() != h.vocab.size()) {
      throw ValidationError("external oracle vocabulary size does not match --oracle-vocab");
    }
    return h;
  }
  if (corpus.empty()) throw ValidationError("need --train corpus or --oracle-cmd");
  std::vector<fs::path> paths(corpus.begin(), corpus.end());
  ReadOptions ro;
  ro.strict = strict;
  const auto docs = read_corpus(paths, ro);
  auto trained = train_ngram_oracle(docs, tokenizer, order);
  h.vocab = std::move(trained.vocab);
  h.oracle = std::make_unique<BackoffNGramOracle>(std::move(trained.oracle));
  return h;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textmill: reproducible text-corpus pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (JSON)");
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_option("--workers", g.workers, "Worker threads; never changes outputs")
      ->check(CLI::Range(1u, 1024u));
  app.add_flag("--strict", g.strict, "Abort on malformed records and unknown fields");
  app.add_option("--tokenizer", g.tokenizer, "mixed | vocab (ignored with --config)")
      ->check(CLI::IsMember({"mixed", "vocab"}));
  app.add_option("--vocab", g.vocab, "Vocabulary file for --tokenizer vocab");
  app.add_flag("--drop-whitespace", g.drop_whitespace, "Do not emit whitespace tokens");

  std::function<int()> action;

  // Single-stage subcommands share input/output flags.
  auto stage_cmd = [&](const char* name, const char* kind, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    auto s = std::make_shared<SingleStage>();
    s->kind = kind;
    sc->add_option("-i,--input", s->inputs, "Input JSONL shard(s)")->required();
    sc->add_option("-o,--output", s->output, "Output JSONL")->required();
    sc->add_option("--manifest", s->manifest, "Manifest path (default: <output>.manifest.json)");
    sc->add_option("--name", s->name, "Stage name recorded in the manifest");
    return std::make_pair(sc, s);
  };

  {
    auto [sc, s] = stage_cmd("ingest", "ingest", "Read shards, tag language, drop malformed");
    auto thr = std::make_shared<std::optional<double>>();
    auto keep = std::make_shared<std::vector<std::string>>();
    sc->add_option("--lang-threshold", *thr, "Ideograph ratio for the zh tag");
    sc->add_option("--keep-language", *keep, "Keep only these tags (zh, other)");
    sc->callback([&, s, thr, keep] {
      action = [&, s, thr, keep] {
        if (*thr) s->params["lang_threshold"] = **thr;
        if (!keep->empty()) s->params["keep_languages"] = *keep;
        return run_single(g, *s);
      };
    });
  }
  {
    auto [sc, s] = stage_cmd("filter-rules", "rules", "Rule-based noise filters");
    auto rules = std::make_shared<std::string>();
    sc->add_option("--rules", *rules, "Rule set JSON");
    sc->callback([&, s, rules] {
      action = [&, s, rules] {
        if (!rules->empty()) s->params = load_json_file(*rules);
        return run_single(g, *s);
      };
    });
  }
  {
    auto* sc = app.add_subcommand("quality-train", "Train the quality classifier");
    auto labeled = std::make_shared<std::string>();
    auto model = std::make_shared<std::string>();
    auto params = std::make_shared<std::string>();
    sc->add_option("--labeled", *labeled, "Labeled JSONL (meta.label)")->required();
    sc->add_option("--model-out", *model, "Model file to write")->required();
    sc->add_option("--params", *params, "Training parameters JSON");
    sc->callback([&, labeled, model, params] {
      action = [&, labeled, model, params] {
        const auto cfg = load_config(g);
        QualityConfig qc = params->empty() ? QualityConfig{} : QualityConfig::from_json(load_json_file(*params));
        qc.seed = g.seed.value_or(qc.seed);
        const auto examples = read_labeled_examples(*labeled, g.strict);
        const QualityModel m = train_quality_model(examples, qc);
        m.save(*model);
        std::size_t correct = 0;
        for (const auto& e : examples) correct += (m.score(e.text) > 0.5) == e.positive;
        std::fprintf(stderr, "trained on %zu examples, training accuracy %.4f\n", examples.size(),
                     examples.empty() ? 0.0 : static_cast<double>(correct) / examples.size());
        return 0;
      };
    });
  }
  {
    auto [sc, s] = stage_cmd("quality-apply", "quality", "Drop documents the classifier rejects");
    auto model = std::make_shared<std::string>();
    auto thr = std::make_shared<std::optional<double>>();
    sc->add_option("--model", *model, "Model file");
    sc->add_option("--threshold", *thr, "Keep when p > threshold");
    sc->callback([&, s, model, thr] {
      action = [&, s, model, thr] {
        if (!model->empty()) s->params["model"] = fs::absolute(*model).string();
        if (*thr) s->params["keep_threshold"] = **thr;
        return run_single(g, *s);
      };
    });
  }
  {
    auto [sc, s] = stage_cmd("dedup-exact", "exact_dedup", "Exact dedup on normalized text");
    sc->callback([&, s] { action = [&, s] { return run_single(g, *s); }; });
  }
  {
    auto [sc, s] = stage_cmd("dedup-near", "near_dedup", "SimHash near-duplicate removal");
    auto radius = std::make_shared<std::optional<int>>();
    auto bands = std::make_shared<std::optional<int>>();
    sc->add_option("--radius", *radius, "Hamming radius k (default 3)");
    sc->add_option("--bands", *bands, "Band count B > k (default 4)");
    sc->callback([&, s, radius, bands] {
      action = [&, s, radius, bands] {
        if (*radius) s->params["radius"] = **radius;
        if (*bands) s->params["bands"] = **bands;
        return run_single(g, *s);
      };
    });
  }
  {
    auto [sc, s] = stage_cmd("decontaminate", "decontaminate", "Remove documents overlapping eval data");
    auto eval = std::make_shared<std::vector<std::string>>();
    auto index = std::make_shared<std::string>();
    auto n = std::make_shared<std::optional<int>>();
    auto semantics = std::make_shared<std::string>();
    sc->add_option("--eval", *eval, "Evaluation JSONL file(s)");
    sc->add_option("--index", *index, "Prebuilt eval index");
    sc->add_option("-n", *n, "Window length (default 17)");
    sc->add_option("--semantics", *semantics, "overlapping | disjoint")
        ->check(CLI::IsMember({"overlapping", "disjoint"}));
    sc->callback([&, s, eval, index, n, semantics] {
      action = [&, s, eval, index, n, semantics] {
        if (!eval->empty()) {
          std::vector<std::string> abs;
          for (const auto& e : *eval) abs.push_back(fs::absolute(e).string());
          s->params["eval"] = abs;
        }
        if (!index->empty()) s->params["index"] = fs::absolute(*index).string();
        if (*n) s->params["n"] = **n;
        if (!semantics->empty()) s->params["semantics"] = *semantics;
        return run_single(g, *s);
      };
    });
  }
  {
    auto [sc, s] = stage_cmd("balance", "balance", "Re-sample to target group proportions");
    auto mixture = std::make_shared<std::string>();
    auto targets = std::make_shared<std::vector<std::string>>();
    auto total = std::make_shared<std::optional<double>>();
    auto budget = std::make_shared<std::optional<std::int64_t>>();
    auto dimension = std::make_shared<std::string>();
    sc->add_option("--mixture", *mixture, "Mixture spec file (key = value)");
    sc->add_option("--target", *targets, "group=proportion (repeatable)");
    sc->add_option("--total-tokens", *total, "Token budget T the targets refer to");
    sc->add_option("--budget", *budget, "Stop after this many emitted tokens");
    sc->add_option("--dimension", *dimension, "source | language | meta key");
    sc->callback([&, s, mixture, targets, total, budget, dimension] {
      action = [&, s, mixture, targets, total, budget, dimension] {
        if (!mixture->empty()) s->params["mixture"] = fs::absolute(*mixture).string();
        for (const auto& t : *targets) {
          const auto eq = t.rfind('=');
          if (eq == std::string::npos || eq == 0) {
            throw ValidationError("--target expects group=proportion, got \"" + t + "\"");
          }
          try {
            s->params["targets"][t.substr(0, eq)] = std::stod(t.substr(eq + 1));
          } catch (const std::logic_error&) {
            throw ValidationError("--target: bad proportion in \"" + t + "\"");
          }
        }
        if (*total) s->params["total_tokens"] = **total;
        if (*budget) s->params["budget"] = **budget;
        if (!dimension->empty()) s->params["dimension"] = *dimension;
        return run_single(g, *s);
      };
    });
  }
  {
    auto* sc = app.add_subcommand("stats", "Corpus statistics joined with stage manifests");
    auto inputs = std::make_shared<std::vector<std::string>>();
    auto manifests = std::make_shared<std::vector<std::string>>();
    auto dimension = std::make_shared<std::string>("source");
    auto json_out = std::make_shared<std::string>();
    sc->add_option("-i,--input", *inputs, "Corpus JSONL shard(s)");
    sc->add_option("-m,--manifest", *manifests, "Stage manifests, in stage order");
    sc->add_option("--dimension", *dimension, "Grouping dimension");
    sc->add_option("--json", *json_out, "Also write machine-readable stats here");
    sc->callback([&, inputs, manifests, dimension, json_out] {
      action = [&, inputs, manifests, dimension, json_out] {
        const auto cfg = load_config(g);
        const Tokenizer tok = make_tokenizer(g, cfg);
        std::vector<fs::path> paths(inputs->begin(), inputs->end());
        ReadOptions ro;
        ro.strict = g.strict;
        const auto docs = read_corpus(paths, ro);
        StageContext ctx;
        ctx.tokenizer = &tok;
        ctx.workers = g.workers;
        const auto tokens = count_tokens(docs, ctx);
        std::vector<fs::path> mp(manifests->begin(), manifests->end());
        const auto ms = join_manifests(mp);
        const CorpusStats stats = corpus_stats(docs, tokens, ms, *dimension);
        std::cout << render_table(stats);
        if (!json_out->empty()) {
          std::ofstream(*json_out, std::ios::binary) << to_json(stats).dump(2) << "\n";
        }
        return 0;
      };
    });
  }
  {
    auto* sc = app.add_subcommand("pack", "Build packed multitask prompt samples");
    struct PackArgs {
      std::string bank, examples, output;
      std::size_t samples = 1000, context = kDefaultContext, cap = kDefaultTaskCap;
      bool without_replacement = false;
      std::vector<std::string> exclude_tasks, exclude_categories;
      std::string separator = "\n";
    };
    auto a = std::make_shared<PackArgs>();
    sc->add_option("--bank", a->bank, "Prompt bank JSONL")->required();
    sc->add_option("--examples", a->examples, "Labeled examples JSONL")->required();
    sc->add_option("-o,--output", a->output, "Packed JSONL (default stdout)");
    sc->add_option("--samples", a->samples, "Number of packed samples");
    sc->add_option("--context", a->context, "Context window in tokens");
    sc->add_option("--cap", a->cap, "Per-task example cap");
    sc->add_flag("--without-replacement", a->without_replacement,
                 "Draw examples without replacement within each pass");
    sc->add_option("--exclude-task", a->exclude_tasks, "Hold out a task");
    sc->add_option("--exclude-category", a->exclude_categories, "Hold out a whole category");
    sc->callback([&, a] {
      action = [&, a] {
        const auto cfg = load_config(g);
        const Tokenizer tok = make_tokenizer(g, cfg);
        const std::uint64_t seed = resolve_seed(g, cfg);
        const PromptBank bank = PromptBank::load(a->bank);
        const auto examples = read_examples(a->examples);
        PoolOptions po;
        po.cap = a->cap;
        po.seed = seed;
        po.exclude_tasks = {a->exclude_tasks.begin(), a->exclude_tasks.end()};
        po.exclude_categories = {a->exclude_categories.begin(), a->exclude_categories.end()};
        const TaskPool pool = build_pool(examples, bank, po);
        PackOptions opt;
        opt.context = a->context;
        opt.samples = a->samples;
        opt.seed = seed;
        opt.separator = a->separator;
        opt.with_replacement = !a->without_replacement;
        std::ofstream file;
        std::ostream& out = open_out(a->output, file);
        const PackStats st = build_packed_stream(
            pool, bank, tok, opt, [&](const PackedSample& s) { out << to_json(s).dump() << '\n'; });
        std::fprintf(stderr, "%zu samples, %zu segments, %zu truncated\n", st.samples,
                     st.segments, st.truncated);
        return 0;
      };
    });
  }
  {
    auto* sc = app.add_subcommand("probe", "Memorization probe with greedy continuation");
    struct ProbeArgs {
      std::vector<std::string> train, held_out;
      std::string output, oracle_cmd, oracle_vocab;
      std::size_t order = BackoffNGramOracle::kDefaultOrder, count = 1000;
      ProbeOptions opt;
    };
    auto a = std::make_shared<ProbeArgs>();
    sc->add_option("--train", a->train, "Oracle training corpus (also the train split)")->required();
    sc->add_option("--held-out", a->held_out, "Held-out corpus")->required();
    sc->add_option("--order", a->order, "Built-in oracle order");
    sc->add_option("--count", a->count, "Documents per split, equal draws per source");
    sc->add_option("--prefix", a->opt.prefix, "Context tokens");
    sc->add_option("--gen", a->opt.gen, "Generated tokens");
    sc->add_option("--match", a->opt.match, "Exact-match threshold");
    sc->add_option("--oracle-cmd", a->oracle_cmd, "External oracle command");
    sc->add_option("--oracle-vocab", a->oracle_vocab, "Vocabulary of the external oracle");
    sc->add_option("-o,--output", a->output, "Report JSON (default stdout)");
    sc->callback([&, a] {
      action = [&, a] {
        const auto cfg = load_config(g);
        const Tokenizer tok = make_tokenizer(g, cfg);
        const std::uint64_t seed = resolve_seed(g, cfg);
        ReadOptions ro;
        ro.strict = g.strict;
        const auto train = read_corpus(std::vector<fs::path>(a->train.begin(), a->train.end()), ro);
        const auto held = read_corpus(std::vector<fs::path>(a->held_out.begin(), a->held_out.end()), ro);
        OracleHandle h = open_oracle(a->train, a->order, a->oracle_cmd, a->oracle_vocab, tok, g.strict);
        std::vector<Document> train_set, held_set;
        for (std::size_t i : sample_probe_set(train, a->count, seed)) train_set.push_back(train[i]);
        for (std::size_t i : sample_probe_set(held, a->count, seed + 1)) held_set.push_back(held[i]);
        auto inputs = make_probe_inputs(train_set, Split::kTrain, train, tok, h.vocab);
        auto more = make_probe_inputs(held_set, Split::kHeldOut, train, tok, h.vocab);
        inputs.insert(inputs.end(), more.begin(), more.end());
        a->opt.workers = g.workers;
        const ProbeReport report = probe_memorization(*h.oracle, inputs, a->opt);
        std::ofstream file;
        open_out(a->output, file) << to_json(report).dump(2) << '\n';
        for (const auto& [split, cell] : report.by_split) {
          std::fprintf(stderr, "%s: %zu/%zu memorized (%.2f%%)\n", split.c_str(), cell.succeeded,
                       cell.probed, 100.0 * cell.rate());
        }
        return 0;
      };
    });
  }
  {
    auto* sc = app.add_subcommand("score", "Perplexity-argmin classification over verbalizers");
    struct ScoreArgs {
      std::vector<std::string> train;
      std::string input, output, oracle_cmd, oracle_vocab;
      std::size_t order = BackoffNGramOracle::kDefaultOrder;
    };
    auto a = std::make_shared<ScoreArgs>();
    sc->add_option("--train", a->train, "Oracle training corpus");
    sc->add_option("--order", a->order, "Built-in oracle order");
    sc->add_option("--oracle-cmd", a->oracle_cmd, "External oracle command");
    sc->add_option("--oracle-vocab", a->oracle_vocab, "Vocabulary of the external oracle");
    sc->add_option("-i,--input", a->input,
                   "JSONL cases: {\"id\",\"prompt\",\"verbalizer\":{label:text}}")
        ->required();
    sc->add_option("-o,--output", a->output, "Predictions JSONL (default stdout)");
    sc->callback([&, a] {
      action = [&, a] {
        const auto cfg = load_config(g);
        const Tokenizer tok = make_tokenizer(g, cfg);
        OracleHandle h = open_oracle(a->train, a->order, a->oracle_cmd, a->oracle_vocab, tok, g.strict);
        std::ifstream in(a->input, std::ios::binary);
        if (!in) throw IoError("cannot open " + a->input);
        std::ofstream file;
        std::ostream& out = open_out(a->output, file);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
          ++lineno;
          if (line.empty()) continue;
          json c;
          try {
            c = json::parse(line);
            const auto verbalizer = c.at("verbalizer").get<std::map<std::string, std::string>>();
            const auto r = perplexity_classify(*h.oracle, c.at("prompt").get<std::string>(),
                                               verbalizer, tok, h.vocab);
            ordered_json o;
            o["id"] = c.value("id", std::to_string(lineno));
            o["label"] = r.label;
            o["perplexity"] = r.perplexity;
            out << o.dump() << '\n';
          } catch (const json::exception& e) {
            throw FormatError(a->input + ": " + e.what(), lineno);
          }
        }
        return 0;
      };
    });
  }
  {
    auto* sc = app.add_subcommand("run", "Run the full pipeline from --config");
    sc->callback([&] {
      action = [&] {
        if (g.config.empty()) throw ValidationError("run needs --config");
        PipelineConfig cfg;
        try {
          cfg = PipelineConfig::load(g.config);
        } catch (const Error& e) {
          std::fprintf(stderr, "validation error: %s\n", e.what());
          return 1;
        }
        if (g.strict) cfg.strict = true;
        RunOptions ro;
        ro.workers = g.workers;
        ro.seed_override = g.seed;
        ro.quiet = false;
        const RunResult r = run_pipeline(cfg, ro);
        if (!r.error.empty()) {
          std::fprintf(stderr, "%s: %s\n",
                       r.status == ExitStatus::kValidation ? "validation error" : "error",
                       r.error.c_str());
        }
        return static_cast<int>(r.status);
      };
    });
  }
  {
    auto* sc = app.add_subcommand("oracle-serve",
                                  "Serve a built-in n-gram oracle over stdin/stdout (JSON lines)");
    auto corpus = std::make_shared<std::vector<std::string>>();
    auto order = std::make_shared<std::size_t>(BackoffNGramOracle::kDefaultOrder);
    auto vocab_out = std::make_shared<std::string>();
    sc->add_option("--corpus", *corpus, "Training corpus")->required();
    sc->add_option("--order", *order, "n-gram order");
    sc->add_option("--vocab-out", *vocab_out, "Write the oracle vocabulary here");
    sc->callback([&, corpus, order, vocab_out] {
      action = [&, corpus, order, vocab_out] {
        const auto cfg = load_config(g);
        const Tokenizer tok = make_tokenizer(g, cfg);
        OracleHandle h = open_oracle(*corpus, *order, "", "", tok, g.strict);
        if (!vocab_out->empty()) h.vocab.save(*vocab_out);
        serve_oracle(*h.oracle, std::cin, std::cout);
        return 0;
      };
    });
  }
  {
    auto* sc = app.add_subcommand("synth", "Write the deterministic sample workspace");
    auto dir = std::make_shared<std::string>();
    auto opt = std::make_shared<SynthOptions>();
    sc->add_option("--dir", *dir, "Target directory")->required();
    sc->add_option("--bytes", opt->total_bytes, "Approximate corpus text bytes");
    sc->add_option("--shards", opt->shards, "Number of corpus shards");
    sc->callback([&, dir, opt] {
      action = [&, dir, opt] {
        if (g.seed) opt->seed = *g.seed;
        const SynthSummary s = write_sample_workspace(*dir, *opt);
        std::fprintf(stderr,
                     "%zu documents, %zu bytes (%zu exact dups, %zu near dups, %zu noise, %zu "
                     "spam, %zu contaminated)\n",
                     s.documents, s.bytes, s.exact_duplicates, s.near_duplicates, s.noise, s.spam,
                     s.contaminated);
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return action ? action() : 0;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
