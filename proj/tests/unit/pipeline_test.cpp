#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "test_support.hpp"
#include "textmill/error.hpp"
#include "textmill/pipeline.hpp"
#include "textmill/synth.hpp"
#include "textmill/unicode.hpp"

namespace textmill {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using textmill::testing::read_file;
using textmill::testing::TempDir;
using textmill::testing::write_file;

std::string para(int seed) {
  static const char32_t* words[] = {U"天气", U"今天", U"我们", U"学习", U"语言", U"模型",
                                    U"数据", U"城市", U"历史", U"文化", U"经济", U"发展"};
  std::u32string s;
  for (int line = 0; line < 3; ++line) {
    for (int w = 0; w < 12; ++w) s += words[(seed * 7 + line * 5 + w * 3 + w * w) % 12];
    s += U"。\n";
  }
  return to_utf8(s);
}

// 12 documents: 2 exact duplicates, 2 rule failures.
void write_toy_corpus(const fs::path& path) {
  std::string out;
  auto rec = [&](const std::string& id, const std::string& src, const std::string& text) {
    Document d;
    d.id = id;
    d.source = src;
    d.text = text;
    out += serialize_record(d) + "\n";
  };
  for (int i = 0; i < 8; ++i) rec("d" + std::to_string(i), i % 2 ? "news" : "books", para(i));
  rec("dup1", "books", para(0));
  rec("dup2", "news", para(1) + " ");
  rec("code", "forums", "int main() { return 0; } {;{;{;\n");
  rec("short", "forums", "太短了。");
  write_file(path, out);
}

json toy_config(const std::vector<std::string>& kinds) {
  json stages = json::array();
  for (const auto& k : kinds) stages.push_back({{"kind", k}});
  return {{"seed", 3}, {"inputs", {"corpus.jsonl"}}, {"output_dir", "out"}, {"stages", stages}};
}

TEST(Config, ParsesAndResolves) {
  TempDir dir;
  const auto c = PipelineConfig::from_json(toy_config({"rules", "exact_dedup"}), dir.path());
  ASSERT_EQ(c.stages.size(), 2u);
  EXPECT_EQ(c.stages[0].name, "rules");
  EXPECT_EQ(c.resolve("x.jsonl"), dir / "x.jsonl");
  EXPECT_EQ(c.tokenizer.kind, "mixed");
}

TEST(Config, RejectsBadConfigs) {
  auto bad = [](json j) { EXPECT_THROW(PipelineConfig::from_json(j), ValidationError) << j; };
  json j = toy_config({"rules"});
  j["extra"] = 1;
  bad(j);
  bad(toy_config({"rules", "ingest"}));
  bad(toy_config({}));
  j = toy_config({"rules", "rules"});
  bad(j);  // duplicate default names
  j = toy_config({"rules"});
  j["stages"][0]["name"] = "../escape";
  bad(j);
  j = toy_config({"rules"});
  j["stages"][0]["name"] = "run_summary";
  bad(j);
  j = toy_config({"rules"});
  j["tokenizer"] = {{"kind", "bpe"}};
  bad(j);
  j = toy_config({"rules"});
  j["tokenizer"] = {{"kind", "mixed"}, {"lowercase", true}};
  bad(j);
  j = toy_config({"rules"});
  j["seed"] = "seven";
  bad(j);
}

TEST(Config, FingerprintIgnoresOutputDirOnly) {
  const auto a = PipelineConfig::from_json(toy_config({"rules"}));
  json other = toy_config({"rules"});
  other["output_dir"] = "elsewhere";
  EXPECT_EQ(a.fingerprint(), PipelineConfig::from_json(other).fingerprint());
  other["seed"] = 4;
  EXPECT_NE(a.fingerprint(), PipelineConfig::from_json(other).fingerprint());
  json reordered = json::parse(R"({"stages":[{"kind":"rules"}],"output_dir":"out",
                                   "inputs":["corpus.jsonl"],"seed":3})");
  EXPECT_EQ(a.fingerprint(), PipelineConfig::from_json(reordered).fingerprint());
}

TEST(Run, ManifestsChain) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  const auto cfg = PipelineConfig::from_json(toy_config({"rules", "exact_dedup"}), dir.path());
  const RunResult r = run_pipeline(cfg);
  ASSERT_EQ(r.status, ExitStatus::kOk) << r.error;
  ASSERT_EQ(r.manifests.size(), 2u);
  EXPECT_EQ(r.manifests[0].totals.input_count, 12);
  EXPECT_EQ(r.manifests[0].totals.dropped_count, 2);
  EXPECT_EQ(r.manifests[1].totals.input_count, r.manifests[0].totals.kept_count);
  EXPECT_EQ(r.manifests[1].totals.input_tokens, r.manifests[0].totals.kept_tokens);
  EXPECT_EQ(r.manifests[1].totals.dropped_count, 2);
  for (const auto& m : r.manifests) EXPECT_TRUE(m.conserved());
  EXPECT_EQ(load_manifest(dir / "out" / "exact_dedup.manifest.json"), r.manifests[1]);

  const json summary = json::parse(read_file(dir / "out" / "run_summary.json"));
  EXPECT_EQ(summary["status"], "ok");
  EXPECT_EQ(summary["conservation"]["holds"], true);
  EXPECT_EQ(summary["config_fingerprint"], cfg.fingerprint());
  EXPECT_TRUE(fs::exists(dir / "out" / "report.txt"));
}

TEST(Run, UnknownStageKindWritesNothing) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  json j = toy_config({"rules"});
  j["stages"].push_back({{"kind", "translate"}});
  EXPECT_THROW(PipelineConfig::from_json(j, dir.path()), ValidationError);
  // Parameter errors are caught before anything is written as well.
  json p = toy_config({"rules", "near_dedup"});
  p["stages"][1]["params"] = {{"radius", 5}, {"bands", 4}};
  const RunResult r = run_pipeline(PipelineConfig::from_json(p, dir.path()));
  EXPECT_EQ(r.status, ExitStatus::kValidation);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Run, RerunGivesIdenticalBytes) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  json j = toy_config({"ingest", "rules", "exact_dedup", "near_dedup"});
  const auto cfg = PipelineConfig::from_json(j, dir.path());
  ASSERT_EQ(run_pipeline(cfg).status, ExitStatus::kOk);
  const std::string first = read_file(dir / "out" / "near_dedup.manifest.json") +
                            read_file(dir / "out" / "near_dedup.jsonl") +
                            read_file(dir / "out" / "run_summary.json");
  RunOptions wide;
  wide.workers = 4;
  ASSERT_EQ(run_pipeline(cfg, wide).status, ExitStatus::kOk);
  const std::string second = read_file(dir / "out" / "near_dedup.manifest.json") +
                             read_file(dir / "out" / "near_dedup.jsonl") +
                             read_file(dir / "out" / "run_summary.json");
  EXPECT_EQ(first, second);
}

TEST(Run, StageFailureIsReported) {
  TempDir dir;
  write_file(dir / "corpus.jsonl", "{bad\n");
  const auto cfg = PipelineConfig::from_json(toy_config({"rules"}), dir.path());
  const RunResult r = run_pipeline(cfg);
  EXPECT_EQ(r.status, ExitStatus::kRuntime);
  EXPECT_EQ(json::parse(read_file(dir / "out" / "run_summary.json"))["status"], "failed");
}

TEST(Run, IngestSkipsMalformedAndRecordsThem) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  write_file(dir / "corpus.jsonl", read_file(dir / "corpus.jsonl") + "{bad\n");
  const auto cfg = PipelineConfig::from_json(toy_config({"ingest"}), dir.path());
  const RunResult r = run_pipeline(cfg);
  ASSERT_EQ(r.status, ExitStatus::kOk) << r.error;
  EXPECT_EQ(r.manifests[0].totals.dropped_by_reason.at("malformed"), 1);
  EXPECT_EQ(r.manifests[0].totals.kept_count, 12);
  EXPECT_TRUE(r.manifests[0].conserved());
}

TEST(Run, ContinueOnErrorIsPartial) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  write_file(dir / "broken.jsonl", "{bad\n");
  json j = toy_config({"ingest", "rules"});
  j["inputs"] = {"corpus.jsonl", "broken.jsonl"};
  j["strict"] = true;
  j["continue_on_error"] = true;
  const RunResult r = run_pipeline(PipelineConfig::from_json(j, dir.path()));
  EXPECT_EQ(r.status, ExitStatus::kPartial);
  ASSERT_EQ(r.manifests[0].failed_shards.size(), 1u);
  j["continue_on_error"] = false;
  EXPECT_EQ(run_pipeline(PipelineConfig::from_json(j, dir.path())).status, ExitStatus::kRuntime);
}

TEST(Run, BalanceReplicatesAndConserves) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  json j = toy_config({"rules", "balance"});
  j["stages"][1]["params"] = {{"targets", {{"books", 0.5}, {"news", 0.5}}},
                              {"total_tokens", 2000}};
  const RunResult r = run_pipeline(PipelineConfig::from_json(j, dir.path()));
  ASSERT_EQ(r.status, ExitStatus::kOk) << r.error;
  const auto& t = r.manifests[1].totals;
  EXPECT_TRUE(r.manifests[1].conserved());
  EXPECT_GE(t.emitted_count, t.kept_count);
  const auto docs = read_records(dir / "out" / "balance.jsonl");
  EXPECT_EQ(static_cast<std::int64_t>(docs.size()), t.emitted_count);
  EXPECT_NO_THROW(check_unique_ids(docs));
  EXPECT_TRUE(fs::exists(dir / "out" / "balance.mixture"));
}

TEST(Manifests, JoinRejectsMixedFingerprints) {
  TempDir dir;
  StageManifest a, b;
  a.stage = "a";
  a.config_fingerprint = "x";
  b.stage = "b";
  b.config_fingerprint = "y";
  save_manifest(dir / "a.json", a);
  save_manifest(dir / "b.json", b);
  EXPECT_THROW(join_manifests({dir / "a.json", dir / "b.json"}), ValidationError);
  EXPECT_EQ(join_manifests({dir / "a.json"}).size(), 1u);
}

TEST(Manifests, TallyConservation) {
  StageManifest m;
  Document d;
  d.source = "news";
  m.record_keep(d, 10);
  m.record_drop(d, 5, "x");
  m.record_emit(d, 10);
  EXPECT_TRUE(m.conserved());
  EXPECT_EQ(m.totals.input_count, 2);
  EXPECT_EQ(m.totals.emitted_count, 2);
  EXPECT_EQ(m.totals.emitted_tokens, 20);
  EXPECT_EQ(manifest_from_json(json::parse(dump_manifest(m))), m);
}

TEST(Filters, NoisyCorpusLosesMoreThanCleanCorpus) {
  TempDir dir;
  SynthOptions opt;
  opt.total_bytes = 3'000'000;
  opt.shards = 1;
  write_sample_workspace(dir.path(), opt);
  std::vector<Document> noisy, clean;
  for (auto& d : read_records(dir / "corpus" / "shard-000.jsonl")) {
    const auto it = d.meta.find("synthetic");
    if (it == d.meta.end()) {
      clean.push_back(std::move(d));
    } else if (it->second == "noise" || it->second == "spam") {
      noisy.push_back(std::move(d));
    }
  }
  ASSERT_FALSE(noisy.empty());
  const Tokenizer tok = Tokenizer::mixed_script();
  StageContext ctx;
  ctx.tokenizer = &tok;
  ctx.name = "q";
  auto rules = make_stage("rules", json::object());
  auto quality = make_stage("quality", {{"train", "quality_labeled.jsonl"}, {"keep_threshold", 0.5}},
                            dir.path());
  auto drop_fraction = [&](std::vector<Document> docs) {
    const double n = static_cast<double>(docs.size());
    auto after_rules = rules->run(std::move(docs), ctx);
    auto after_quality = quality->run(std::move(after_rules.docs), ctx);
    return 1.0 - static_cast<double>(after_quality.docs.size()) / n;
  };
  const double noisy_drop = drop_fraction(noisy);
  const double clean_drop = drop_fraction(clean);
  EXPECT_GT(noisy_drop, clean_drop);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  write_toy_corpus(dir / "corpus.jsonl");
  write_file(dir / "ok.json", toy_config({"rules"}).dump());
  json bad = toy_config({"rules"});
  bad["stages"][0]["params"] = {{"min_tokenz", 3}};
  write_file(dir / "bad.json", bad.dump());
  const std::string cli = TEXTMILL_CLI;
  auto run = [&](const std::string& args) {
    const int rc = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  EXPECT_EQ(run("--config " + (dir / "ok.json").string() + " run"), 0);
  EXPECT_EQ(run("--config " + (dir / "bad.json").string() + " run"), 1);
  EXPECT_EQ(run("--config " + (dir / "missing.json").string() + " run"), 1);
  EXPECT_EQ(run("--no-such-flag run"), 1);
  EXPECT_EQ(run("dedup-exact -i " + (dir / "corpus.jsonl").string() + " -o " +
                (dir / "single" / "d.jsonl").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "single" / "d.manifest.json"));
  EXPECT_EQ(run("dedup-near --radius 4 --bands 4 -i " + (dir / "corpus.jsonl").string() + " -o " +
                (dir / "single" / "n.jsonl").string()),
            1);
  EXPECT_EQ(run("dedup-exact -i " + (dir / "nope.jsonl").string() + " -o " +
                (dir / "single" / "e.jsonl").string()),
            2);
  const std::string balance = "balance -i " + (dir / "corpus.jsonl").string() + " -o " +
                              (dir / "single" / "b.jsonl").string() + " --total-tokens 1000 ";
  EXPECT_EQ(run(balance + "--target books=0.5 --target news=0.3 --target forums=0.2"), 0);
  const auto m = load_manifest(dir / "single" / "b.manifest.json");
  EXPECT_TRUE(m.conserved());
  EXPECT_EQ(m.totals.input_count, 12);
  EXPECT_EQ(run(balance + "--target books=half --target news=0.5"), 1);
  EXPECT_EQ(run(balance + "--target books"), 1);
}

}  // namespace
}  // namespace textmill
