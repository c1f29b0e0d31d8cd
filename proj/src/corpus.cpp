#include "ifteval/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "ifteval/errors.hpp"
#include "ifteval/hashing.hpp"
#include "ifteval/providers.hpp"
#include "ifteval/random.hpp"
#include "ifteval/text.hpp"

namespace ifteval::corpus {

std::string_view answer_kind_name(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::LabelSet: return "label-set";
    case AnswerKind::Span: return "span";
    case AnswerKind::FreeText: return "free-text";
    case AnswerKind::StructuredJson: return "structured-json";
    case AnswerKind::IntegerScale: return "integer-scale";
  }
  throw ContractError("unknown answer kind");
}

AnswerKind answer_kind_from_name(std::string_view name) {
  if (name == "label-set") return AnswerKind::LabelSet;
  if (name == "span") return AnswerKind::Span;
  if (name == "free-text") return AnswerKind::FreeText;
  if (name == "structured-json") return AnswerKind::StructuredJson;
  if (name == "integer-scale") return AnswerKind::IntegerScale;
  throw ContractError("unknown answer kind '" + std::string(name) + "'");
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw ContractError("unknown split");
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ContractError("unknown split '" + std::string(name) + "'");
}

std::string TaskSample::reference_text() const {
  if (reference.is_string()) return reference.get<std::string>();
  return reference.dump();
}

// ---------------------------------------------------------------------------
// TaskRegistry
// ---------------------------------------------------------------------------

void TaskRegistry::add(TaskSpec spec) {
  if (spec.task_id.empty()) throw ContractError("task_id must be non-empty");
  if (spec.instruction_text.empty()) {
    throw ContractError("instruction_text must be non-empty for task '" +
                        spec.task_id + "'");
  }
  const bool has_vocab = !spec.label_vocabulary.empty();
  if ((spec.answer_kind == AnswerKind::LabelSet) != has_vocab) {
    throw ContractError("label_vocabulary must be non-empty exactly for "
                        "label-set tasks; violated by '" + spec.task_id + "'");
  }
  if (specs_.count(spec.task_id) != 0) {
    throw ContractError("duplicate task_id '" + spec.task_id + "' in registry");
  }
  specs_.emplace(spec.task_id, std::move(spec));
}

bool TaskRegistry::contains(std::string_view task_id) const {
  return specs_.find(task_id) != specs_.end();
}

const TaskSpec& TaskRegistry::get(std::string_view task_id) const {
  auto it = specs_.find(task_id);
  if (it == specs_.end()) {
    throw ContractError("task '" + std::string(task_id) + "' not in registry");
  }
  return it->second;
}

std::vector<std::string> TaskRegistry::task_ids() const {
  std::vector<std::string> ids;
  ids.reserve(specs_.size());
  for (const auto& [id, spec] : specs_) ids.push_back(id);
  return ids;
}

TaskRegistry TaskRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open task registry " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("task registry parse error in " + path.string() +
                        ": " + e.what());
  }
  if (!doc.contains("tasks") || !doc["tasks"].is_array()) {
    throw ContractError("task registry " + path.string() +
                        " must contain a 'tasks' array");
  }
  TaskRegistry registry;
  for (const auto& entry : doc["tasks"]) {
    TaskSpec spec;
    if (!entry.contains("task_id") || !entry["task_id"].is_string()) {
      throw ContractError("registry entry missing string field 'task_id'");
    }
    spec.task_id = entry["task_id"].get<std::string>();
    if (!entry.contains("instruction") || !entry["instruction"].is_string()) {
      throw ContractError("registry task '" + spec.task_id +
                          "' missing string field 'instruction'");
    }
    spec.instruction_text = entry["instruction"].get<std::string>();
    spec.answer_kind =
        answer_kind_from_name(entry.value("answer_kind", "free-text"));
    if (entry.contains("labels")) {
      spec.label_vocabulary = entry["labels"].get<std::vector<std::string>>();
    }
    if (entry.contains("default_scorers")) {
      spec.default_scorer_ids =
          entry["default_scorers"].get<std::vector<std::string>>();
    }
    registry.add(std::move(spec));
  }
  return registry;
}

TaskRegistry TaskRegistry::builtin() {
  TaskRegistry registry;
  registry.add({"mnli",
                "Classify the following relationship between the Hypothesis "
                "sentence and the Premise sentence, as either Entailment, "
                "Contradiction or Neutral.",
                AnswerKind::LabelSet,
                {"entailment", "contradiction", "neutral"},
                {"exact_match", "rouge1"}});
  registry.add({"qnli",
                "Classify whether the given context contains enough "
                "information to answer the question (answerable) or not "
                "(unanswerable).",
                AnswerKind::LabelSet,
                {"answerable", "unanswerable"},
                {"exact_match", "rouge1"}});
  registry.add({"stsb",
                "Give an integer score between 1 and 5, describing how "
                "similar sentence1 and sentence2 are. 5 means they are very "
                "similar, 1 means they are nothing alike.",
                AnswerKind::IntegerScale,
                {},
                {"exact_match"}});
  registry.add({"sst2",
                "Classify the following sentence as negative or positive.",
                AnswerKind::LabelSet,
                {"negative", "positive"},
                {"exact_match", "rouge1"}});
  registry.add({"conll",
                "Extract locations, persons, and organizations from the "
                "text. The output should be formatted as a JSON object with "
                "three keys: LOC (locations), PER (persons), and ORG "
                "(organizations). Each key should have a value that is a "
                "list of strings. If the text contains no entities of a "
                "given type, the corresponding list should be empty.",
                AnswerKind::StructuredJson,
                {},
                {"structured_match"}});
  registry.add({"squadv2",
                "Answer the question depending on the context. You must only "
                "answer with one excerpt from the text.",
                AnswerKind::Span,
                {},
                {"span_f1"}});
  registry.add({"xsum",
                "Summarize the following article in a few words.",
                AnswerKind::FreeText,
                {},
                {"rouge1", "rougeL"}});
  return registry;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<TaskSample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    auto [it, inserted] = index_.emplace(samples_[i].sample_id, i);
    if (!inserted) {
      throw ContractError("duplicate sample_id '" + samples_[i].sample_id +
                          "'");
    }
  }
}

const TaskSample* Corpus::find(std::string_view sample_id) const {
  auto it = index_.find(sample_id);
  return it == index_.end() ? nullptr : &samples_[it->second];
}

Corpus Corpus::with_split(Split split) const {
  std::vector<TaskSample> kept;
  for (const TaskSample& s : samples_) {
    if (s.split == split) kept.push_back(s);
  }
  return Corpus(std::move(kept));
}

Corpus Corpus::with_task(std::string_view task_id) const {
  std::vector<TaskSample> kept;
  for (const TaskSample& s : samples_) {
    if (s.task_id == task_id) kept.push_back(s);
  }
  return Corpus(std::move(kept));
}

std::vector<std::string> Corpus::sample_ids() const {
  std::vector<std::string> ids;
  ids.reserve(samples_.size());
  for (const TaskSample& s : samples_) ids.push_back(s.sample_id);
  return ids;
}

TaskSample sample_from_json(const nlohmann::json& record, int line_number) {
  auto fail = [line_number](const std::string& what) -> ContractError {
    return ContractError("corpus schema error at line " +
                         std::to_string(line_number) + ": " + what);
  };
  if (!record.is_object()) throw fail("line is not a JSON object");

  auto require_string = [&](const char* field) -> std::string {
    if (!record.contains(field)) {
      throw fail("missing field '" + std::string(field) + "'");
    }
    if (!record[field].is_string()) {
      throw fail("field '" + std::string(field) + "' must be a string");
    }
    return record[field].get<std::string>();
  };

  TaskSample sample;
  sample.sample_id = require_string("sample_id");
  sample.task_id = require_string("task_id");
  sample.category = require_string("category");
  sample.input_text = require_string("input");
  if (!record.contains("reference")) throw fail("missing field 'reference'");
  if (!record["reference"].is_string() && !record["reference"].is_object()) {
    throw fail("field 'reference' must be a string or an object");
  }
  sample.reference = record["reference"];
  try {
    sample.split = split_from_name(require_string("split"));
  } catch (const ContractError&) {
    throw fail("field 'split' must be one of train/val/test");
  }
  return sample;
}

nlohmann::json sample_to_json(const TaskSample& sample) {
  return nlohmann::json{{"sample_id", sample.sample_id},
                        {"task_id", sample.task_id},
                        {"category", sample.category},
                        {"input", sample.input_text},
                        {"reference", sample.reference},
                        {"split", std::string(split_name(sample.split))}};
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open corpus file " + path.string());

  std::vector<TaskSample> samples;
  std::set<std::string, std::less<>> seen_ids;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("corpus parse error at line " +
                          std::to_string(line_number) + ": " + e.what());
    }
    TaskSample sample = sample_from_json(record, line_number);
    if (!seen_ids.insert(sample.sample_id).second) {
      throw ContractError("duplicate sample_id '" + sample.sample_id +
                          "' at line " + std::to_string(line_number));
    }
    samples.push_back(std::move(sample));
  }
  return Corpus(std::move(samples));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write corpus file " + path.string());
  for (const TaskSample& sample : corpus.samples()) {
    out << sample_to_json(sample).dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Prompt rendering and splits
// ---------------------------------------------------------------------------

std::string render_prompt(const TaskSample& sample, const TaskSpec& spec) {
  if (sample.task_id != spec.task_id) {
    throw ContractError("render_prompt: sample task '" + sample.task_id +
                        "' does not match spec task '" + spec.task_id + "'");
  }
  return spec.instruction_text + "\n\n" + sample.input_text;
}

std::array<std::size_t, 3> allocate_split_sizes(std::size_t n,
                                                const SplitRatios& ratios) {
  const double rs[3] = {ratios.train, ratios.val, ratios.test};
  std::array<std::size_t, 3> sizes{};
  double fracs[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = static_cast<double>(n) * rs[i];
    sizes[static_cast<std::size_t>(i)] =
        static_cast<std::size_t>(std::floor(quota));
    fracs[i] = quota - std::floor(quota);
    assigned += sizes[static_cast<std::size_t>(i)];
  }
  // Leftover units go to the largest fractional remainders; ties resolve in
  // bucket order so train is favored.
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return fracs[a] > fracs[b]; });
  for (std::size_t u = 0; assigned < n; ++u, ++assigned) {
    sizes[static_cast<std::size_t>(order[u % 3])] += 1;
  }
  return sizes;
}

namespace {

void validate_ratios(const SplitRatios& ratios) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw ContractError("split ratios must be non-negative");
  }
  double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("split ratios must sum to 1 (got " +
                        std::to_string(sum) + ")");
  }
}

void split_group(std::vector<TaskSample> group, const SplitRatios& ratios,
                 std::uint64_t seed, std::vector<TaskSample>* train,
                 std::vector<TaskSample>* val, std::vector<TaskSample>* test) {
  std::sort(group.begin(), group.end(),
            [](const TaskSample& a, const TaskSample& b) {
              return a.sample_id < b.sample_id;
            });
  std::mt19937_64 gen(seed);
  rng::shuffle(group, gen);
  auto sizes = allocate_split_sizes(group.size(), ratios);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) train->push_back(group[pos++]);
  for (std::size_t i = 0; i < sizes[1]; ++i) val->push_back(group[pos++]);
  for (std::size_t i = 0; i < sizes[2]; ++i) test->push_back(group[pos++]);
}

}  // namespace

SplitResult split_corpus(const Corpus& corpus, const SplitRatios& ratios,
                         std::uint64_t seed, SplitMode mode) {
  validate_ratios(ratios);
  if (corpus.empty()) throw ContractError("cannot split an empty corpus");

  std::vector<TaskSample> train, val, test;
  if (mode == SplitMode::Global) {
    std::vector<TaskSample> all(corpus.samples().begin(),
                                corpus.samples().end());
    split_group(std::move(all), ratios, seed, &train, &val, &test);
  } else {
    std::map<std::string, std::vector<TaskSample>> groups;
    for (const TaskSample& s : corpus.samples()) {
      groups[s.category].push_back(s);
    }
    for (auto& [category, group] : groups) {
      std::uint64_t group_seed =
          hashing::fnv1a(category, hashing::fnv1a_u64(seed));
      split_group(std::move(group), ratios, group_seed, &train, &val, &test);
    }
  }
  // New split labels reflect the assignment.
  for (TaskSample& s : train) s.split = Split::Train;
  for (TaskSample& s : val) s.split = Split::Val;
  for (TaskSample& s : test) s.split = Split::Test;
  return SplitResult{Corpus(std::move(train)), Corpus(std::move(val)),
                     Corpus(std::move(test))};
}

// ---------------------------------------------------------------------------
// Category tagging
// ---------------------------------------------------------------------------

bool is_category_name(std::string_view name) {
  return std::find(kCategoryNames.begin(), kCategoryNames.end(), name) !=
         kCategoryNames.end();
}

std::optional<std::string> match_category(std::string_view response) {
  std::string norm = text::normalize(response);
  for (std::string_view name : kCategoryNames) {
    if (text::normalize(name) == norm) return std::string(name);
  }
  return std::nullopt;
}

const std::string_view kCategoryTaggingTemplate =
    "Classify the following instruction into exactly one of these "
    "categories:\n"
    "Classify, Code, Answer from Context, Create, Extract, Logic, Answer "
    "from Memory, Summarize from Memory, Rewrite, Write, Summarize, "
    "Translate, Other\n"
    "\n"
    "Answer with the category name only.\n"
    "\n"
    "Instruction:\n"
    "{instruction}";

std::string render_tagging_prompt(std::string_view instruction) {
  return text::fill_placeholder(std::string(kCategoryTaggingTemplate),
                                "{instruction}", instruction);
}

std::vector<CategoryTag> tag_categories(
    std::span<const std::string> instructions, providers::Client& judge,
    const std::string& model_id, int parallelism) {
  std::vector<CategoryTag> tags(instructions.size());
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto tag_one = [&](std::size_t i) {
    providers::ChatRequest req;
    req.model_id = model_id;
    req.messages.push_back(
        {"user", render_tagging_prompt(instructions[i])});
    req.temperature = 0.0;
    std::string response = judge.chat_complete(req);
    if (auto name = match_category(response)) {
      tags[i] = CategoryTag{*name, CategoryTag::Source::LlmTagger, ""};
    } else {
      tags[i] = CategoryTag{"Other", CategoryTag::Source::LlmTagger,
                            "tagger response: " + response};
    }
  };

  const auto count = static_cast<std::int64_t>(instructions.size());
#ifdef _OPENMP
  if (parallelism > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(parallelism)
    for (std::int64_t i = 0; i < count; ++i) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        tag_one(static_cast<std::size_t>(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    }
    if (failure) std::rethrow_exception(failure);
    return tags;
  }
#else
  (void)parallelism;
#endif
  for (std::int64_t i = 0; i < count; ++i) tag_one(static_cast<std::size_t>(i));
  return tags;
}

double tag_agreement(std::span<const CategoryTag> tags,
                     std::span<const std::string> human_labels) {
  if (tags.size() != human_labels.size()) {
    throw ContractError("tag_agreement: size mismatch");
  }
  if (tags.empty()) throw ContractError("tag_agreement: empty input");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].category_name == human_labels[i]) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(tags.size());
}

// ---------------------------------------------------------------------------
// Label normalization heuristics
// ---------------------------------------------------------------------------

std::optional<std::string> normalize_label(std::string_view raw_output,
                                           const TaskSpec& spec) {
  if (spec.answer_kind != AnswerKind::LabelSet) {
    throw ContractError("normalize_label requires a label-set task, got '" +
                        spec.task_id + "'");
  }
  const std::vector<std::string> tokens = text::tokenize(raw_output);

  struct Candidate {
    const std::string* canonical;
    std::vector<std::string> lexemes;
  };
  std::vector<Candidate> candidates;
  for (const std::string& label : spec.label_vocabulary) {
    candidates.push_back({&label, text::tokenize(label)});
  }
  // Longest lexeme first so multi-word labels claim their tokens before any
  // shorter label contained in them gets a chance.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.lexemes.size() != b.lexemes.size()) {
                       return a.lexemes.size() > b.lexemes.size();
                     }
                     return a.canonical->size() > b.canonical->size();
                   });

  std::vector<bool> consumed(tokens.size(), false);
  std::vector<const std::string*> found;
  for (const Candidate& cand : candidates) {
    if (cand.lexemes.empty()) continue;
    bool matched = false;
    for (std::size_t start = 0;
         start + cand.lexemes.size() <= tokens.size(); ++start) {
      bool fits = true;
      for (std::size_t k = 0; k < cand.lexemes.size(); ++k) {
        if (consumed[start + k] || tokens[start + k] != cand.lexemes[k]) {
          fits = false;
          break;
        }
      }
      if (fits) {
        matched = true;
        for (std::size_t k = 0; k < cand.lexemes.size(); ++k) {
          consumed[start + k] = true;
        }
      }
    }
    if (matched) found.push_back(cand.canonical);
  }
  if (found.size() == 1) return *found.front();
  return std::nullopt;
}

}  // namespace ifteval::corpus
