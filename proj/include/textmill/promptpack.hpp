#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "textmill/tokenizer.hpp"

namespace textmill {

inline constexpr std::size_t kDefaultContext = 2048;
inline constexpr std::size_t kDefaultTaskCap = 50000;

// Pattern grammar: literal text with {slot} references; "{{" and "}}" are
// literal braces. Slot names are [A-Za-z0-9_]+. The slot "label" is rendered
// through the verbalizer when the template has one.
struct PromptTemplate {
  std::string task;
  std::string category;
  std::string template_id;
  std::string pattern;
  std::map<std::string, std::string> verbalizer;

  // Slot names in order of first appearance. Throws ValidationError on a
  // malformed pattern.
  std::vector<std::string> slots() const;
  void validate() const;
};

struct LabeledExample {
  std::string task;
  std::string id;
  std::map<std::string, std::string> fields;
};

class PromptBank {
 public:
  // Validates the template and (task, template_id) uniqueness.
  void add(PromptTemplate tmpl);

  std::span<const PromptTemplate> templates_for(const std::string& task) const;
  std::vector<std::string> tasks() const;
  std::size_t size() const;
  bool empty() const { return by_task_.empty(); }

  // JSONL, one template per line:
  //   {"task":..,"category":..,"template_id":..,"pattern":..,"verbalizer":{..}}
  static PromptBank load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::vector<PromptTemplate>> by_task_;
};

PromptTemplate parse_template(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PromptTemplate& tmpl);

// JSONL, one example per line: {"task":..,"id":..,"fields":{..}}
std::vector<LabeledExample> read_examples(const std::filesystem::path& path);

// Throws ValidationError naming a missing slot, or for a label outside the
// verbalizer domain.
std::string render_prompt(const PromptTemplate& tmpl, const LabeledExample& example);

// Indices (ascending) of a uniform random subset of size min(count, cap).
// Deterministic in (seed, task). Throws ValidationError for cap == 0.
std::vector<std::size_t> cap_task(std::size_t count, std::size_t cap, std::uint64_t seed,
                                  std::string_view task = {});

struct TaskPool {
  std::vector<std::string> tasks;                    // sorted
  std::vector<std::vector<LabeledExample>> examples;  // parallel to tasks
};

struct PoolOptions {
  std::size_t cap = kDefaultTaskCap;
  std::uint64_t seed = 0;
  std::set<std::string> exclude_tasks;
  std::set<std::string> exclude_categories;
};

// Groups examples by task, drops excluded tasks and categories, and caps each
// task. Throws ValidationError when a task has examples but no template, or
// when nothing remains.
TaskPool build_pool(std::span<const LabeledExample> examples, const PromptBank& bank,
                    const PoolOptions& options);

struct PackedSegment {
  std::string task;
  std::string template_id;
  std::string example_id;
  std::size_t begin = 0;  // token span [begin, end) within the sample,
  std::size_t end = 0;    // separator included
  std::string text;       // rendered text, without separator
};

struct PackedSample {
  std::size_t index = 0;
  std::size_t tokens = 0;
  bool truncated = false;
  std::vector<PackedSegment> segments;
};

nlohmann::ordered_json to_json(const PackedSample& sample);

struct PackOptions {
  std::size_t context = kDefaultContext;
  std::size_t samples = 0;   // number of samples to emit
  std::uint64_t seed = 0;
  std::string separator = "\n";  // counts as exactly one token
  bool with_replacement = true;
};

struct PackStats {
  std::size_t samples = 0;
  std::size_t segments = 0;
  std::size_t truncated = 0;
  std::map<std::string, std::size_t> segments_per_task;
};

// Repeats: sample a task uniformly, an example uniformly from its pool, a
// template uniformly, render it, and append it with one separator token.
// An item that would overflow the context closes the current sample and
// starts the next one; an item longer than the context on its own is cut to
// exactly `context` tokens and flagged.
PackStats build_packed_stream(const TaskPool& pool, const PromptBank& bank,
                              const Tokenizer& tokenizer, const PackOptions& options,
                              const std::function<void(const PackedSample&)>& sink);

}  // namespace textmill
