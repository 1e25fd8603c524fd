#include "textmill/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "textmill/corpus.hpp"
#include "textmill/error.hpp"
#include "textmill/unicode.hpp"

namespace textmill {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSpamWords[] = {
    "免费", "下载", "点击", "优惠", "返利", "代理", "加微信", "限时", "秒杀", "赚钱",
    "兼职", "中奖", "领取", "红包", "低价", "包邮", "特价", "注册", "会员", "充值",
    "日赚", "扫码", "福利", "官网", "独家", "爆款", "抢购", "折扣", "私聊", "推广"};

constexpr const char* kTerminals[] = {"。", "。", "。", "。", "！", "？"};

std::string random_word_from(const std::vector<std::string>& words, SplitMix64& gen) {
  return words[static_cast<std::size_t>(uniform_below(gen, words.size()))];
}

double uniform(SplitMix64& gen) { return to_unit(gen()); }

}  // namespace

TextGenerator::TextGenerator(std::uint64_t lexicon_seed, std::size_t lexicon_size) {
  SplitMix64 gen(lexicon_seed);
  words_.reserve(lexicon_size);
  for (std::size_t i = 0; i < lexicon_size; ++i) {
    const std::size_t len = 1 + static_cast<std::size_t>(uniform_below(gen, 3));
    std::string w;
    for (std::size_t k = 0; k < len; ++k) {
      append_utf8(w, static_cast<char32_t>(0x4E00 + uniform_below(gen, 3000)));
    }
    words_.push_back(std::move(w));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < lexicon_size; ++r) {
    total += 1.0 / static_cast<double>(r + 1);
    cdf_.push_back(total);
  }
  for (double& c : cdf_) c /= total;
  for (const char* s : kSpamWords) spam_.emplace_back(s);
  for (std::size_t i = 0; i < 800; ++i) {
    const std::size_t len = 2 + static_cast<std::size_t>(uniform_below(gen, 7));
    std::string w;
    for (std::size_t k = 0; k < len; ++k) w.push_back(static_cast<char>('a' + uniform_below(gen, 26)));
    english_.push_back(std::move(w));
  }
}

std::string TextGenerator::word(SplitMix64& gen) const {
  const double u = uniform(gen);
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()),
                                         words_.size() - 1);
  return words_[idx];
}

std::string TextGenerator::sentence(SplitMix64& gen, std::size_t min_words,
                                    std::size_t max_words) const {
  const std::size_t n = min_words + static_cast<std::size_t>(uniform_below(gen, max_words - min_words + 1));
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += word(gen);
    if (i + 1 < n && i % 7 == 6) s += "，";
  }
  s += kTerminals[uniform_below(gen, std::size(kTerminals))];
  return s;
}

std::string TextGenerator::document(SplitMix64& gen, std::size_t chars) const {
  std::string doc;
  std::size_t produced = 0;
  std::size_t lines = 0;
  while (produced < chars || lines < 3) {
    std::string line;
    const std::size_t sentences = 1 + static_cast<std::size_t>(uniform_below(gen, 4));
    for (std::size_t i = 0; i < sentences; ++i) line += sentence(gen);
    produced += codepoint_count(line);
    if (!doc.empty()) doc += '\n';
    doc += line;
    ++lines;
  }
  return doc;
}

std::string TextGenerator::english_document(SplitMix64& gen, std::size_t words) const {
  std::string doc;
  std::size_t produced = 0;
  std::size_t lines = 0;
  while (produced < words || lines < 3) {
    const std::size_t n = 6 + static_cast<std::size_t>(uniform_below(gen, 12));
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
      std::string w = random_word_from(english_, gen);
      if (i == 0) w[0] = static_cast<char>(w[0] - 'a' + 'A');
      line += (i == 0 ? "" : " ") + w;
    }
    line += '.';
    produced += n;
    if (!doc.empty()) doc += '\n';
    doc += line;
    ++lines;
  }
  return doc;
}

std::string TextGenerator::spam_document(SplitMix64& gen, std::size_t chars) const {
  std::string doc;
  std::size_t produced = 0;
  std::size_t lines = 0;
  while (produced < chars || lines < 3) {
    std::string line;
    const std::size_t n = 8 + static_cast<std::size_t>(uniform_below(gen, 10));
    for (std::size_t i = 0; i < n; ++i) {
      line += random_word_from(spam_, gen);
      if (uniform_below(gen, 4) == 0) line += word(gen);
    }
    line += "！";
    produced += codepoint_count(line);
    if (!doc.empty()) doc += '\n';
    doc += line;
    ++lines;
  }
  return doc;
}

namespace {

struct SourceShape {
  const char* name;
  double weight;      // share of documents' bytes
  std::size_t chars;  // mean length
};

// Availability proportional to the reference corpus statistics.
constexpr SourceShape kSources[] = {
    {"common_crawl", 198.5, 700},
    {"books", 61.9, 3000},
    {"news", 1.91, 900},
    {"forums", 1.0, 350},
    {"academic", 0.39, 1600},
};

std::string noise_document(const TextGenerator& tg, SplitMix64& gen) {
  switch (uniform_below(gen, 4)) {
    case 0:
      return tg.document(gen, 200) + "\nlorem ipsum dolor sit amet。";
    case 1: {
      std::string code;
      for (int i = 0; i < 12; ++i) {
        code += "for (int i = 0; i < n; ++i) { total += v[i]; }\nif (x) { return y; }\n";
      }
      return code;
    }
    case 2: {
      std::string s;
      for (int i = 0; i < 40; ++i) s += tg.word(gen) + "★☆#@%&*~";
      return s + "。\n" + s + "。\n" + s + "。";
    }
    default:
      return tg.sentence(gen, 3, 5);
  }
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write error on " + path.string());
}

// A run of `codepoints` codepoints from `text`, starting at a line start.
std::string passage(const std::string& text, std::size_t codepoints) {
  const auto cps = to_codepoints(text);
  std::u32string out;
  for (char32_t c : cps) {
    if (c == U'\n') continue;
    out.push_back(c);
    if (out.size() == codepoints) break;
  }
  return to_utf8(out);
}

}  // namespace

SynthSummary write_sample_workspace(const fs::path& dir, const SynthOptions& options) {
  if (options.shards == 0) throw ValidationError("synth: shards must be >= 1");
  fs::create_directories(dir / "corpus");
  fs::create_directories(dir / "prompts");
  const TextGenerator tg(options.seed ^ 0x6c657869636f6eULL);
  SplitMix64 gen(options.seed);
  SynthSummary summary;

  // Evaluation set.
  std::vector<std::string> eval_texts;
  {
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < options.eval_docs; ++i) {
      Document d;
      d.id = "eval-" + std::to_string(i);
      d.source = "custom:eval";
      d.text = tg.document(gen, 240);
      eval_texts.push_back(d.text);
      lines.push_back(serialize_record(d));
    }
    write_lines(dir / "eval.jsonl", lines);
  }

  // Corpus.
  double weight_total = 0.0;
  for (const auto& s : kSources) weight_total += s.weight * static_cast<double>(s.chars);
  std::vector<Document> docs;
  std::vector<std::size_t> originals;
  std::size_t bytes = 0;
  std::size_t serial = 0;
  while (bytes < options.total_bytes) {
    // Pick the source so that byte shares follow the weights.
    double u = uniform(gen) * weight_total;
    std::size_t si = 0;
    while (si + 1 < std::size(kSources) &&
           u >= kSources[si].weight * static_cast<double>(kSources[si].chars)) {
      u -= kSources[si].weight * static_cast<double>(kSources[si].chars);
      ++si;
    }
    const SourceShape& src = kSources[si];
    const auto chars = static_cast<std::size_t>(static_cast<double>(src.chars) *
                                                (0.4 + 1.2 * uniform(gen)));
    Document d;
    d.id = std::string(src.name) + "-" + std::to_string(serial++);
    d.source = src.name;

    const double r = uniform(gen);
    double edge = options.exact_dup_rate;
    if (r < edge && !originals.empty()) {
      const Document& o = docs[originals[uniform_below(gen, originals.size())]];
      d.source = o.source;
      d.text = o.text + "\n";
      d.meta["synthetic"] = "exact_duplicate";
      ++summary.exact_duplicates;
    } else if (r < (edge += options.near_dup_rate) && !originals.empty()) {
      const Document& o = docs[originals[uniform_below(gen, originals.size())]];
      d.source = o.source;
      auto cps = to_codepoints(o.text);
      for (char32_t& c : cps) {
        if (c >= 0x4E00 && c < 0x9FA6) {
          c = static_cast<char32_t>(0x4E00 + uniform_below(gen, 3000));
          break;
        }
      }
      d.text = to_utf8(cps);
      d.meta["synthetic"] = "near_duplicate";
      ++summary.near_duplicates;
    } else if (r < (edge += options.noise_rate)) {
      d.text = noise_document(tg, gen);
      d.meta["synthetic"] = "noise";
      ++summary.noise;
    } else if (r < (edge += options.spam_rate)) {
      d.text = tg.spam_document(gen, chars);
      d.meta["synthetic"] = "spam";
      ++summary.spam;
    } else if (r < (edge += options.contaminated_rate) && !eval_texts.empty()) {
      const std::string& e = eval_texts[uniform_below(gen, eval_texts.size())];
      d.text = tg.document(gen, chars / 2) + "\n" + passage(e, 60) + "。\n" + tg.document(gen, chars / 2);
      d.meta["synthetic"] = "contaminated";
      ++summary.contaminated;
    } else if (r < (edge += options.english_rate)) {
      d.text = tg.english_document(gen, chars / 3);
      d.meta["synthetic"] = "english";
    } else {
      d.text = tg.document(gen, chars);
      originals.push_back(docs.size());
    }
    bytes += d.text.size();
    docs.push_back(std::move(d));
  }

  const std::size_t per_shard = (docs.size() + options.shards - 1) / options.shards;
  for (std::size_t s = 0; s < options.shards; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "shard-%03zu.jsonl", s);
    const fs::path path = dir / "corpus" / name;
    std::vector<std::string> lines;
    for (std::size_t i = s * per_shard; i < std::min(docs.size(), (s + 1) * per_shard); ++i) {
      lines.push_back(serialize_record(docs[i]));
    }
    write_lines(path, lines);
    summary.shards.push_back(path);
  }
  summary.documents = docs.size();
  summary.bytes = bytes;

  // Classifier training data.
  {
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < options.quality_examples; ++i) {
      Document d;
      d.id = "q-" + std::to_string(i);
      d.source = "custom:quality";
      const bool positive = i % 2 == 0;
      const auto chars = 200 + static_cast<std::size_t>(uniform_below(gen, 800));
      d.text = positive ? tg.document(gen, chars) : tg.spam_document(gen, chars);
      d.meta["label"] = positive ? "positive" : "negative";
      lines.push_back(serialize_record(d));
    }
    write_lines(dir / "quality_labeled.jsonl", lines);
  }

  // Prompt bank and labeled task data.
  {
    static const char* kCategories[] = {"nli", "sentiment", "topic", "qa", "summarization",
                                        "cloze"};
    std::vector<std::string> bank, examples;
    for (std::size_t t = 0; t < options.prompt_tasks; ++t) {
      const std::string task = "task" + std::to_string(t);
      const std::string category = kCategories[t % std::size(kCategories)];
      const bool classification = t % 2 == 0;
      const char* patterns[] = {"{text}问：这段话的类别是？答：{label}。",
                                "阅读下面的内容：{text}它属于{label}类。",
                                "“{text}”，结论：{label}。"};
      for (int k = 0; k < 3; ++k) {
        nlohmann::ordered_json j;
        j["task"] = task;
        j["category"] = category;
        j["template_id"] = "t" + std::to_string(k);
        j["pattern"] = classification ? patterns[k] : std::string("{text}\n答：{answer}");
        if (classification) {
          j["verbalizer"] = {{"a", "是"}, {"b", "否"}, {"c", "不确定"}};
        } else {
          j["verbalizer"] = nlohmann::ordered_json::object();
          if (k > 0) j["pattern"] = "问题：{text}\n回答" + std::to_string(k) + "：{answer}";
        }
        bank.push_back(j.dump());
      }
      for (std::size_t i = 0; i < options.prompt_examples; ++i) {
        nlohmann::ordered_json j;
        j["task"] = task;
        j["id"] = task + "-" + std::to_string(i);
        j["fields"]["text"] = tg.sentence(gen, 4, 30);
        if (classification) {
          j["fields"]["label"] = std::string(1, static_cast<char>('a' + uniform_below(gen, 3)));
        } else {
          j["fields"]["answer"] = tg.sentence(gen, 2, 10);
        }
        examples.push_back(j.dump());
      }
    }
    write_lines(dir / "prompts" / "bank.jsonl", bank);
    write_lines(dir / "prompts" / "examples.jsonl", examples);
  }

  // Pipeline config.
  {
    nlohmann::ordered_json cfg;
    cfg["seed"] = 7;
    cfg["tokenizer"] = {{"kind", "mixed"}, {"preserve_whitespace", true}};
    cfg["inputs"] = nlohmann::ordered_json::array();
    for (const auto& p : summary.shards) cfg["inputs"].push_back("corpus/" + p.filename().string());
    cfg["output_dir"] = "out";
    cfg["strict"] = false;
    cfg["continue_on_error"] = false;
    cfg["stages"] = nlohmann::ordered_json::array({
        {{"kind", "ingest"}, {"params", {{"lang_threshold", 0.25}}}},
        {{"kind", "rules"}, {"params", nlohmann::ordered_json::object()}},
        {{"kind", "quality"},
         {"params", {{"train", "quality_labeled.jsonl"}, {"keep_threshold", 0.5}}}},
        {{"kind", "exact_dedup"}},
        {{"kind", "near_dedup"}, {"params", {{"radius", 3}, {"bands", 4}}}},
        {{"kind", "decontaminate"}, {"params", {{"eval", "eval.jsonl"}, {"n", 17}}}},
        {{"kind", "balance"},
         {"params",
          {{"dimension", "source"},
           {"targets",
            {{"common_crawl", 0.506},
             {"books", 0.387},
             {"news", 0.067},
             {"forums", 0.035},
             {"academic", 0.005}}},
           {"total_tokens", 10000000}}}},
    });
    std::ofstream(dir / "pipeline.json", std::ios::binary | std::ios::trunc) << cfg.dump(2) << "\n";
  }
  return summary;
}

}  // namespace textmill
