#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ifteval::providers {
class Client;
}

namespace ifteval::corpus {

enum class AnswerKind { LabelSet, Span, FreeText, StructuredJson, IntegerScale };

std::string_view answer_kind_name(AnswerKind kind);
AnswerKind answer_kind_from_name(std::string_view name);

// One registered task: its instruction string, the shape of a valid answer,
// and which scorers make sense for it by default.
struct TaskSpec {
  std::string task_id;
  std::string instruction_text;
  AnswerKind answer_kind = AnswerKind::FreeText;
  std::vector<std::string> label_vocabulary;  // non-empty iff LabelSet
  std::vector<std::string> default_scorer_ids;
};

enum class Split { Train, Val, Test };

std::string_view split_name(Split split);
Split split_from_name(std::string_view name);

struct TaskSample {
  std::string sample_id;
  std::string task_id;
  std::string category;      // taxonomy tag or benchmark-task tag
  std::string input_text;
  nlohmann::json reference;  // string, or object for structured tasks
  Split split = Split::Train;

  // String references verbatim; structured references as compact JSON.
  std::string reference_text() const;
};

class TaskRegistry {
 public:
  void add(TaskSpec spec);
  bool contains(std::string_view task_id) const;
  const TaskSpec& get(std::string_view task_id) const;
  std::vector<std::string> task_ids() const;  // sorted

  static TaskRegistry load(const std::filesystem::path& path);
  // The seven benchmark tasks with their canonical instruction prompts.
  static TaskRegistry builtin();

 private:
  std::map<std::string, TaskSpec, std::less<>> specs_;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<TaskSample> samples);  // rejects duplicate ids

  std::span<const TaskSample> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const TaskSample* find(std::string_view sample_id) const;

  Corpus with_split(Split split) const;
  Corpus with_task(std::string_view task_id) const;
  std::vector<std::string> sample_ids() const;

 private:
  std::vector<TaskSample> samples_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// JSONL, one object per line with fields
// sample_id/task_id/category/input/reference/split. Parse and schema errors
// name the offending line.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

TaskSample sample_from_json(const nlohmann::json& record, int line_number);
nlohmann::json sample_to_json(const TaskSample& sample);

// instruction + "\n\n" + input, byte-stable.
std::string render_prompt(const TaskSample& sample, const TaskSpec& spec);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

enum class SplitMode { PerCategory, Global };

struct SplitResult {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Deterministic partition: floor each quota, then hand the leftover units to
// the largest fractional remainders (ties resolved train, val, test).
std::array<std::size_t, 3> allocate_split_sizes(std::size_t n,
                                                const SplitRatios& ratios);

SplitResult split_corpus(const Corpus& corpus, const SplitRatios& ratios,
                         std::uint64_t seed,
                         SplitMode mode = SplitMode::PerCategory);

inline constexpr std::array<std::string_view, 13> kCategoryNames = {
    "Classify",       "Code",    "Answer from Context",
    "Create",         "Extract", "Logic",
    "Answer from Memory", "Summarize from Memory", "Rewrite",
    "Write",          "Summarize", "Translate",
    "Other"};

bool is_category_name(std::string_view name);
// Maps free-form tagger output onto the closed set; nullopt when nothing
// matches.
std::optional<std::string> match_category(std::string_view response);

struct CategoryTag {
  enum class Source { Human, LlmTagger };
  std::string category_name;
  Source source = Source::LlmTagger;
  std::string confidence_note;
};

// The tagging prompt is ours and versioned here; {instruction} is the slot.
extern const std::string_view kCategoryTaggingTemplate;

std::string render_tagging_prompt(std::string_view instruction);

// One tag per instruction, in input order. Out-of-taxonomy answers become
// Other with the raw response kept as the confidence note.
std::vector<CategoryTag> tag_categories(std::span<const std::string> instructions,
                                        providers::Client& judge,
                                        const std::string& model_id,
                                        int parallelism = 1);

// Fraction of tags matching the given human labels.
double tag_agreement(std::span<const CategoryTag> tags,
                     std::span<const std::string> human_labels);

// Pre-tagging heuristic for label-set tasks: the unique vocabulary label
// whose lexeme occurs in the output, or nullopt when zero or several
// distinct labels occur.
std::optional<std::string> normalize_label(std::string_view raw_output,
                                           const TaskSpec& spec);

}  // namespace ifteval::corpus
