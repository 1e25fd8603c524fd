#include "textmill/promptpack.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "textmill/error.hpp"
#include "textmill/hashing.hpp"
#include "textmill/random.hpp"

namespace textmill {

namespace {

bool is_slot_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Calls literal(text) and slot(name) in order.
template <typename Literal, typename Slot>
void scan_pattern(std::string_view pattern, Literal&& literal, Slot&& slot) {
  std::size_t i = 0;
  std::size_t lit = 0;
  while (i < pattern.size()) {
    const char c = pattern[i];
    if (c == '{' && i + 1 < pattern.size() && pattern[i + 1] == '{') {
      literal(pattern.substr(lit, i + 1 - lit));
      i += 2;
      lit = i;
    } else if (c == '}' && i + 1 < pattern.size() && pattern[i + 1] == '}') {
      literal(pattern.substr(lit, i + 1 - lit));
      i += 2;
      lit = i;
    } else if (c == '{') {
      const auto close = pattern.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw ValidationError("unterminated slot in pattern \"" + std::string(pattern) + "\"");
      }
      const std::string_view name = pattern.substr(i + 1, close - i - 1);
      if (name.empty() || !std::all_of(name.begin(), name.end(), is_slot_char)) {
        throw ValidationError("bad slot name \"{" + std::string(name) + "}\" in pattern");
      }
      literal(pattern.substr(lit, i - lit));
      slot(name);
      i = close + 1;
      lit = i;
    } else if (c == '}') {
      throw ValidationError("unmatched '}' in pattern \"" + std::string(pattern) + "\"");
    } else {
      ++i;
    }
  }
  literal(pattern.substr(lit));
}

}  // namespace

std::vector<std::string> PromptTemplate::slots() const {
  std::vector<std::string> out;
  scan_pattern(
      pattern, [](std::string_view) {},
      [&](std::string_view name) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.emplace_back(name);
      });
  return out;
}

void PromptTemplate::validate() const {
  if (task.empty()) throw ValidationError("prompt template has an empty task");
  if (template_id.empty()) throw ValidationError("prompt template for " + task + " has no id");
  if (pattern.empty()) {
    throw ValidationError("prompt template " + task + "/" + template_id + " has an empty pattern");
  }
  slots();
  std::map<std::string, std::string> seen;
  for (const auto& [label, text] : verbalizer) {
    if (text.empty()) {
      throw ValidationError("template " + task + "/" + template_id + ": label \"" + label +
                            "\" has an empty verbalizer string");
    }
    auto [it, inserted] = seen.emplace(text, label);
    if (!inserted) {
      throw ValidationError("template " + task + "/" + template_id + ": labels \"" + it->second +
                            "\" and \"" + label + "\" share the verbalizer \"" + text + "\"");
    }
  }
}

void PromptBank::add(PromptTemplate tmpl) {
  tmpl.validate();
  auto& list = by_task_[tmpl.task];
  for (const auto& t : list) {
    if (t.template_id == tmpl.template_id) {
      throw ValidationError("duplicate template " + tmpl.task + "/" + tmpl.template_id);
    }
  }
  list.push_back(std::move(tmpl));
}

std::span<const PromptTemplate> PromptBank::templates_for(const std::string& task) const {
  auto it = by_task_.find(task);
  if (it == by_task_.end()) return {};
  return it->second;
}

std::vector<std::string> PromptBank::tasks() const {
  std::vector<std::string> out;
  for (const auto& [task, _] : by_task_) out.push_back(task);
  return out;
}

std::size_t PromptBank::size() const {
  std::size_t n = 0;
  for (const auto& [_, list] : by_task_) n += list.size();
  return n;
}

namespace {

std::string required_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ValidationError(std::string("missing string field \"") + key + "\"");
  }
  return it->get<std::string>();
}

std::map<std::string, std::string> string_map(const nlohmann::json& j, const char* key) {
  std::map<std::string, std::string> out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (!it->is_object()) throw ValidationError(std::string("\"") + key + "\" must be an object");
  for (const auto& [k, v] : it->items()) {
    if (!v.is_string()) {
      throw ValidationError(std::string("\"") + key + "." + k + "\" must be a string");
    }
    out.emplace(k, v.get<std::string>());
  }
  return out;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what(), lineno);
    } catch (const ValidationError& e) {
      throw FormatError(path.string() + ": " + e.what(), lineno);
    }
  }
}

}  // namespace

PromptTemplate parse_template(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("prompt template must be an object");
  PromptTemplate t;
  t.task = required_string(j, "task");
  t.category = j.contains("category") ? required_string(j, "category") : "custom";
  t.template_id = required_string(j, "template_id");
  t.pattern = required_string(j, "pattern");
  t.verbalizer = string_map(j, "verbalizer");
  return t;
}

nlohmann::ordered_json to_json(const PromptTemplate& tmpl) {
  nlohmann::ordered_json j;
  j["task"] = tmpl.task;
  j["category"] = tmpl.category;
  j["template_id"] = tmpl.template_id;
  j["pattern"] = tmpl.pattern;
  j["verbalizer"] = tmpl.verbalizer;
  return j;
}

PromptBank PromptBank::load(const std::filesystem::path& path) {
  PromptBank bank;
  for_each_json_line(path, [&](const nlohmann::json& j) { bank.add(parse_template(j)); });
  return bank;
}

std::vector<LabeledExample> read_examples(const std::filesystem::path& path) {
  std::vector<LabeledExample> out;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("example must be an object");
    LabeledExample ex;
    ex.task = required_string(j, "task");
    ex.id = required_string(j, "id");
    ex.fields = string_map(j, "fields");
    out.push_back(std::move(ex));
  });
  return out;
}

std::string render_prompt(const PromptTemplate& tmpl, const LabeledExample& example) {
  const std::string* verbal_label = nullptr;
  if (!tmpl.verbalizer.empty()) {
    if (auto it = example.fields.find("label"); it != example.fields.end()) {
      auto v = tmpl.verbalizer.find(it->second);
      if (v == tmpl.verbalizer.end()) {
        throw ValidationError("example " + example.id + ": label \"" + it->second +
                              "\" is not in the verbalizer of " + tmpl.task + "/" +
                              tmpl.template_id);
      }
      verbal_label = &v->second;
    }
  }
  std::string out;
  out.reserve(tmpl.pattern.size() * 2);
  scan_pattern(
      tmpl.pattern, [&](std::string_view lit) { out.append(lit); },
      [&](std::string_view name) {
        if (name == "label" && verbal_label != nullptr) {
          out.append(*verbal_label);
          return;
        }
        auto it = example.fields.find(std::string(name));
        if (it == example.fields.end()) {
          throw ValidationError("example " + example.id + " is missing slot \"" +
                                std::string(name) + "\" required by " + tmpl.task + "/" +
                                tmpl.template_id);
        }
        out.append(it->second);
      });
  return out;
}

std::vector<std::size_t> cap_task(std::size_t count, std::size_t cap, std::uint64_t seed,
                                  std::string_view task) {
  if (cap == 0) throw ValidationError("task cap must be >= 1");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count <= cap) return idx;
  // Partial Fisher-Yates: the first `cap` slots are a uniform subset.
  SplitMix64 gen(hash64(task, seed));
  for (std::size_t i = 0; i < cap; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(gen, count - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TaskPool build_pool(std::span<const LabeledExample> examples, const PromptBank& bank,
                    const PoolOptions& options) {
  std::map<std::string, std::vector<const LabeledExample*>> by_task;
  for (const auto& ex : examples) by_task[ex.task].push_back(&ex);

  TaskPool pool;
  for (auto& [task, list] : by_task) {
    if (options.exclude_tasks.count(task)) continue;
    const auto templates = bank.templates_for(task);
    if (templates.empty()) throw ValidationError("task \"" + task + "\" has no prompt template");
    const bool excluded = std::any_of(templates.begin(), templates.end(), [&](const auto& t) {
      return options.exclude_categories.count(t.category) > 0;
    });
    if (excluded) continue;
    std::vector<LabeledExample> kept;
    for (std::size_t i : cap_task(list.size(), options.cap, options.seed, task)) {
      kept.push_back(*list[i]);
    }
    pool.tasks.push_back(task);
    pool.examples.push_back(std::move(kept));
  }
  if (pool.tasks.empty()) throw ValidationError("no tasks left to pack");
  return pool;
}

nlohmann::ordered_json to_json(const PackedSample& sample) {
  nlohmann::ordered_json j;
  j["index"] = sample.index;
  j["tokens"] = sample.tokens;
  j["truncated"] = sample.truncated;
  j["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : sample.segments) {
    nlohmann::ordered_json seg;
    seg["task"] = s.task;
    seg["template_id"] = s.template_id;
    seg["example_id"] = s.example_id;
    seg["span"] = {s.begin, s.end};
    seg["text"] = s.text;
    j["segments"].push_back(std::move(seg));
  }
  return j;
}

PackStats build_packed_stream(const TaskPool& pool, const PromptBank& bank,
                              const Tokenizer& tokenizer, const PackOptions& options,
                              const std::function<void(const PackedSample&)>& sink) {
  if (bank.empty()) throw ValidationError("prompt bank is empty");
  if (pool.tasks.empty()) throw ValidationError("no tasks to pack");
  if (options.context == 0) throw ValidationError("context window must be >= 1");
  if (pool.tasks.size() >= (1u << 16)) throw ValidationError("too many tasks");

  std::vector<std::span<const PromptTemplate>> templates;
  for (std::size_t t = 0; t < pool.tasks.size(); ++t) {
    templates.push_back(bank.templates_for(pool.tasks[t]));
    if (templates.back().empty()) {
      throw ValidationError("task \"" + pool.tasks[t] + "\" has no prompt template");
    }
    if (pool.examples[t].empty()) {
      throw ValidationError("task \"" + pool.tasks[t] + "\" has no examples");
    }
    if (templates.back().size() >= (1u << 16)) throw ValidationError("too many templates");
  }

  SplitMix64 gen(options.seed);
  // Without replacement: a per-task permutation consumed in order and
  // reshuffled once exhausted.
  std::vector<std::vector<std::size_t>> order(pool.tasks.size());
  std::vector<std::size_t> cursor(pool.tasks.size(), 0);
  auto draw_example = [&](std::size_t t) -> std::size_t {
    const std::size_t n = pool.examples[t].size();
    if (options.with_replacement) return static_cast<std::size_t>(uniform_below(gen, n));
    if (cursor[t] == order[t].size()) {
      order[t].resize(n);
      std::iota(order[t].begin(), order[t].end(), std::size_t{0});
      shuffle(std::span<std::size_t>(order[t]), gen);
      cursor[t] = 0;
    }
    return order[t][cursor[t]++];
  };

  std::unordered_map<std::uint64_t, std::size_t> token_cache;

  struct Item {
    std::size_t task, example, tmpl;
    std::string text;
    std::size_t tokens;  // separator included
  };
  auto draw_item = [&]() {
    Item it;
    it.task = static_cast<std::size_t>(uniform_below(gen, pool.tasks.size()));
    it.example = draw_example(it.task);
    it.tmpl = static_cast<std::size_t>(uniform_below(gen, templates[it.task].size()));
    it.text = render_prompt(templates[it.task][it.tmpl], pool.examples[it.task][it.example]);
    const std::uint64_t key = (std::uint64_t{it.task} << 48) | (std::uint64_t{it.tmpl} << 32) |
                              static_cast<std::uint64_t>(it.example);
    auto [cached, inserted] = token_cache.try_emplace(key, 0);
    if (inserted) cached->second = tokenizer.count(it.text) + 1;
    it.tokens = cached->second;
    return it;
  };

  PackStats stats;
  PackedSample current;
  auto emit = [&]() {
    current.index = stats.samples++;
    stats.segments += current.segments.size();
    if (current.truncated) ++stats.truncated;
    for (const auto& s : current.segments) ++stats.segments_per_task[s.task];
    sink(current);
    current = PackedSample{};
  };
  auto append = [&](Item&& it, std::size_t tokens, bool truncated) {
    PackedSegment seg;
    seg.task = pool.tasks[it.task];
    seg.template_id = templates[it.task][it.tmpl].template_id;
    seg.example_id = pool.examples[it.task][it.example].id;
    seg.begin = current.tokens;
    seg.end = current.tokens + tokens;
    seg.text = std::move(it.text);
    current.tokens = seg.end;
    current.truncated = current.truncated || truncated;
    current.segments.push_back(std::move(seg));
  };

  std::optional<Item> pending;
  while (stats.samples < options.samples) {
    Item it = pending ? std::move(*pending) : draw_item();
    pending.reset();
    if (current.tokens + it.tokens <= options.context) {
      append(std::move(it), it.tokens, false);
      continue;
    }
    if (!current.segments.empty()) {
      pending = std::move(it);
      emit();
      continue;
    }
    // Oversized on its own: keep the first `context` tokens, drop the separator.
    const auto toks = tokenizer.split(it.text);
    const std::string_view last = toks[options.context - 1];
    it.text.resize(static_cast<std::size_t>(last.data() + last.size() - it.text.data()));
    append(std::move(it), options.context, true);
    emit();
  }
  return stats;
}

}  // namespace textmill
