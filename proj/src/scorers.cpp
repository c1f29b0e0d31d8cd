#include "ifteval/scorers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "ifteval/errors.hpp"
#include "ifteval/providers.hpp"
#include "ifteval/text.hpp"

namespace ifteval::scorers {

nlohmann::json score_record_to_json(const ScoreRecord& record) {
  nlohmann::json doc{{"sample_id", record.sample_id},
                     {"model_id", record.model_id},
                     {"scorer_id", record.scorer_id}};
  if (record.value) doc["value"] = *record.value;
  if (!record.raw.empty()) doc["raw"] = record.raw;
  if (!record.error.empty()) doc["error"] = record.error;
  return doc;
}

ScoreRecord score_record_from_json(const nlohmann::json& doc) {
  ScoreRecord record;
  try {
    record.sample_id = doc.at("sample_id").get<std::string>();
    record.model_id = doc.at("model_id").get<std::string>();
    record.scorer_id = doc.at("scorer_id").get<std::string>();
    if (doc.contains("value")) record.value = doc["value"].get<double>();
    record.raw = doc.value("raw", "");
    record.error = doc.value("error", "");
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed score record: ") + e.what());
  }
  return record;
}

// ---------------------------------------------------------------------------
// Lexical metrics
// ---------------------------------------------------------------------------

double exact_match(std::string_view pred, std::string_view ref) {
  return text::normalize(pred) == text::normalize(ref) ? 1.0 : 0.0;
}

namespace {

// Clipped unigram-overlap F1 over token multisets.
double unigram_overlap_f1(const std::vector<std::string>& pred,
                          const std::vector<std::string>& ref) {
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;

  std::unordered_map<std::string, int> ref_counts;
  for (const std::string& tok : ref) ++ref_counts[tok];
  int matches = 0;
  for (const std::string& tok : pred) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end() && it->second > 0) {
      ++matches;
      --it->second;
    }
  }
  if (matches == 0) return 0.0;
  const double p = static_cast<double>(matches) / static_cast<double>(pred.size());
  const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                     : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

}  // namespace

double rouge1_f(std::string_view pred, std::string_view ref) {
  return unigram_overlap_f1(text::tokenize(pred), text::tokenize(ref));
}

double rougeL_f(std::string_view pred, std::string_view ref) {
  const auto pred_tokens = text::tokenize(pred);
  const auto ref_tokens = text::tokenize(ref);
  if (pred_tokens.empty() && ref_tokens.empty()) return 1.0;
  if (pred_tokens.empty() || ref_tokens.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(pred_tokens, ref_tokens));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(pred_tokens.size());
  const double r = lcs / static_cast<double>(ref_tokens.size());
  return 2.0 * p * r / (p + r);
}

double span_f1(std::string_view pred, std::string_view ref) {
  // Same token-multiset overlap as ROUGE-1 under this tokenizer; kept as its
  // own scorer id because extractive-QA configs reference it by name.
  return unigram_overlap_f1(text::tokenize(pred), text::tokenize(ref));
}

// ---------------------------------------------------------------------------
// Structured match
// ---------------------------------------------------------------------------

std::optional<nlohmann::json> extract_first_json_object(std::string_view text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    if (text[start] != '{') continue;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
        if (depth == 0) {
          const auto candidate = text.substr(start, i - start + 1);
          nlohmann::json parsed = nlohmann::json::parse(
              candidate, /*cb=*/nullptr, /*allow_exceptions=*/false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;  // balanced but unparseable; try the next '{'
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

std::multiset<std::string> normalized_string_set(const nlohmann::json& value) {
  std::multiset<std::string> out;
  if (value.is_string()) {
    out.insert(text::normalize(value.get<std::string>()));
    return out;
  }
  if (value.is_array()) {
    for (const auto& item : value) {
      out.insert(text::normalize(item.is_string() ? item.get<std::string>()
                                                  : item.dump()));
    }
  }
  return out;
}

}  // namespace

double structured_match(std::string_view pred, const nlohmann::json& ref,
                        std::string* raw_flag) {
  if (!ref.is_object()) {
    throw ContractError("structured_match reference must be a JSON object");
  }
  auto parsed = extract_first_json_object(pred);
  if (!parsed) {
    if (raw_flag) *raw_flag = "unparseable";
    return 0.0;
  }
  for (const auto& [key, ref_value] : ref.items()) {
    const auto ref_set = normalized_string_set(ref_value);
    const auto pred_set = parsed->contains(key)
                              ? normalized_string_set((*parsed)[key])
                              : std::multiset<std::string>{};
    if (ref_set != pred_set) return 0.0;
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// LLM judge
// ---------------------------------------------------------------------------

namespace {

// Pairwise grading prompt. The wording is frozen, typos and all; any edit
// here invalidates the golden file.
constexpr std::string_view kJudgeTemplate =
    "You are a helpful assistant that helps evaluate the quality of two "
    "responses to a prompt.\n"
    "\n"
    "Answer by awarding a score between 0 and 10 to each response, where 0 "
    "means the response is completely inappropriate and 10 means the "
    "response is very good.\n"
    "A response that is acceptable should never be awarded less than 6 out "
    "of 10.\n"
    "\n"
    "Answer base on the following criteria:\n"
    "1. Is the response grammatically correct?\n"
    "2. Is the response semantically correct?\n"
    "3. Is the response coherent?\n"
    "4. Is the response relevant to the prompt?\n"
    "\n"
    "Output format (csv):\n"
    "<score1 from 0 to 10>,<score2 from 0 to 10>\n"
    "\n"
    "Rate the responses to the following instruction.\n"
    "{prompt}\n"
    "\n"
    "Response 1: \n"
    "{response1}\n"
    "\n"
    "\n"
    "Response 2: \n"
    "{response2}\n"
    "\n"
    "Output:";

std::optional<int> parse_bounded_int(std::string_view part) {
  std::size_t begin = 0, end = part.size();
  while (begin < end &&
         std::isspace(static_cast<unsigned char>(part[begin]))) {
    ++begin;
  }
  while (end > begin &&
         std::isspace(static_cast<unsigned char>(part[end - 1]))) {
    --end;
  }
  if (begin == end) return std::nullopt;
  std::size_t pos = begin;
  if (part[pos] == '+' || part[pos] == '-') ++pos;
  if (pos == end) return std::nullopt;
  long value = 0;
  for (; pos < end; ++pos) {
    if (!std::isdigit(static_cast<unsigned char>(part[pos]))) {
      return std::nullopt;
    }
    value = value * 10 + (part[pos] - '0');
    if (value > 1000) return std::nullopt;
  }
  if (part[begin] == '-') value = -value;
  return static_cast<int>(value);
}

}  // namespace

std::string assemble_judge_prompt(std::string_view prompt,
                                  std::string_view response1,
                                  std::string_view response2) {
  std::string out(kJudgeTemplate);
  out = text::fill_placeholder(std::move(out), "{prompt}", prompt);
  out = text::fill_placeholder(std::move(out), "{response1}", response1);
  out = text::fill_placeholder(std::move(out), "{response2}", response2);
  return out;
}

JudgeVerdict parse_judge_csv(std::string_view raw) {
  JudgeVerdict verdict;
  verdict.raw_text = std::string(raw);

  const std::size_t comma = raw.find(',');
  if (comma == std::string_view::npos) return verdict;
  if (raw.find(',', comma + 1) != std::string_view::npos) return verdict;

  const auto first = parse_bounded_int(raw.substr(0, comma));
  const auto second = parse_bounded_int(raw.substr(comma + 1));
  if (!first || !second) return verdict;
  if (*first < 0 || *first > 10 || *second < 0 || *second > 10) {
    return verdict;
  }
  verdict.score_pred = *first;
  verdict.score_ref = *second;
  verdict.conforming = true;
  return verdict;
}

JudgeVerdict llm_judge(const std::string& prompt, const std::string& pred,
                       const std::string& ref, providers::Client& judge,
                       const std::string& model_id) {
  providers::ChatRequest request;
  request.model_id = model_id;
  request.messages.push_back(
      {"user", assemble_judge_prompt(prompt, pred, ref)});
  request.temperature = 0.0;

  JudgeVerdict verdict = parse_judge_csv(judge.chat_complete(request));
  if (verdict.conforming) return verdict;
  // One re-ask; the salt keys a fresh cache entry for the same bytes.
  return parse_judge_csv(
      judge.chat_complete(request, {.cache_salt = "judge-retry-1"}));
}

double judge_to_score(const JudgeVerdict& verdict) {
  if (!verdict.conforming) {
    throw ContractError(
        "judge_to_score requires a conforming verdict; sample is excluded");
  }
  return static_cast<double>(verdict.score_pred) / 10.0;
}

double soft_rm(double s_pred, double s_ref) {
  if (!std::isfinite(s_pred) || !std::isfinite(s_ref)) {
    throw ContractError("soft_rm requires finite raw scores");
  }
  const double d = s_pred - s_ref;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Provider-backed scorers
// ---------------------------------------------------------------------------

double embed_cosine(const std::string& pred, const std::string& ref,
                    providers::Client& embedder, const std::string& model_id) {
  const auto vectors = embedder.embed({pred, ref}, model_id);
  double dot = 0.0;
  for (std::size_t i = 0; i < vectors[0].size(); ++i) {
    dot += vectors[0][i] * vectors[1][i];
  }
  return std::clamp(dot, 0.0, 1.0);
}

RmScoreTable RmScoreTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open rm scores file " + path.string());
  RmScoreTable table;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
      const auto id = doc.at("sample_id").get<std::string>();
      const auto pair = std::make_pair(doc.at("s_pred").get<double>(),
                                       doc.at("s_ref").get<double>());
      if (!table.scores_.emplace(id, pair).second) {
        throw ContractError("duplicate rm score for sample '" + id + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("rm scores error at line " +
                          std::to_string(line_number) + ": " + e.what());
    }
  }
  return table;
}

std::optional<std::pair<double, double>> RmScoreTable::find(
    std::string_view sample_id) const {
  auto it = scores_.find(sample_id);
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Scorer registry
// ---------------------------------------------------------------------------

namespace {

ScoreRecord base_record(const corpus::TaskSample& sample,
                        const harness::Generation& gen,
                        const std::string& scorer_id) {
  ScoreRecord record;
  record.sample_id = sample.sample_id;
  record.model_id = gen.model_id;
  record.scorer_id = scorer_id;
  return record;
}

class LexicalScorer : public Scorer {
 public:
  using Fn = double (*)(std::string_view, std::string_view);
  LexicalScorer(std::string id, Fn fn) : id_(std::move(id)), fn_(fn) {}

  std::string id() const override { return id_; }

  ScoreRecord score(const corpus::TaskSample& sample,
                    const corpus::TaskSpec& /*spec*/,
                    const harness::Generation& gen) const override {
    ScoreRecord record = base_record(sample, gen, id_);
    record.value = fn_(gen.output_text, sample.reference_text());
    return record;
  }

 private:
  std::string id_;
  Fn fn_;
};

class StructuredMatchScorer : public Scorer {
 public:
  std::string id() const override { return "structured_match"; }

  ScoreRecord score(const corpus::TaskSample& sample,
                    const corpus::TaskSpec& /*spec*/,
                    const harness::Generation& gen) const override {
    ScoreRecord record = base_record(sample, gen, id());
    if (!sample.reference.is_object()) {
      throw ContractError("structured_match needs an object reference for '" +
                          sample.sample_id + "'");
    }
    std::string flag;
    record.value = structured_match(gen.output_text, sample.reference, &flag);
    record.raw = flag;
    return record;
  }
};

class EmbedCosineScorer : public Scorer {
 public:
  EmbedCosineScorer(providers::Client* client, std::string model)
      : client_(client), model_(std::move(model)) {}

  std::string id() const override { return "embed_cosine"; }

  ScoreRecord score(const corpus::TaskSample& sample,
                    const corpus::TaskSpec& /*spec*/,
                    const harness::Generation& gen) const override {
    ScoreRecord record = base_record(sample, gen, id());
    record.value =
        embed_cosine(gen.output_text, sample.reference_text(), *client_,
                     model_);
    return record;
  }

 private:
  providers::Client* client_;
  std::string model_;
};

class LlmJudgeScorer : public Scorer {
 public:
  LlmJudgeScorer(providers::Client* client, std::string model)
      : client_(client), model_(std::move(model)) {}

  std::string id() const override { return "llm_judge"; }

  ScoreRecord score(const corpus::TaskSample& sample,
                    const corpus::TaskSpec& spec,
                    const harness::Generation& gen) const override {
    ScoreRecord record = base_record(sample, gen, id());
    const std::string prompt = corpus::render_prompt(sample, spec);
    const JudgeVerdict verdict = llm_judge(prompt, gen.output_text,
                                           sample.reference_text(), *client_,
                                           model_);
    record.raw = verdict.raw_text;
    if (verdict.conforming) {
      record.value = judge_to_score(verdict);
    } else {
      record.error = "judge_non_conforming";
    }
    return record;
  }

 private:
  providers::Client* client_;
  std::string model_;
};

class SoftRmScorer : public Scorer {
 public:
  explicit SoftRmScorer(const RmScoreTable* table) : table_(table) {}

  std::string id() const override { return "soft_rm"; }

  ScoreRecord score(const corpus::TaskSample& sample,
                    const corpus::TaskSpec& /*spec*/,
                    const harness::Generation& gen) const override {
    ScoreRecord record = base_record(sample, gen, id());
    const auto raw_scores = table_->find(sample.sample_id);
    if (!raw_scores) {
      record.error = "no rm scores for sample";
      return record;
    }
    record.value = soft_rm(raw_scores->first, raw_scores->second);
    record.raw = "s_pred=" + std::to_string(raw_scores->first) +
                 " s_ref=" + std::to_string(raw_scores->second);
    return record;
  }

 private:
  const RmScoreTable* table_;
};

const std::vector<std::string> kScorerNames = {
    "exact_match", "rouge1",       "rougeL",    "span_f1",
    "structured_match", "embed_cosine", "llm_judge", "soft_rm"};

}  // namespace

bool is_known_scorer(std::string_view name) {
  return std::find(kScorerNames.begin(), kScorerNames.end(), name) !=
         kScorerNames.end();
}

std::vector<std::string> known_scorers() { return kScorerNames; }

std::unique_ptr<Scorer> make_scorer(std::string_view name,
                                    const ScorerDeps& deps) {
  if (name == "exact_match") {
    return std::make_unique<LexicalScorer>(
        "exact_match",
        +[](std::string_view p, std::string_view r) {
          return exact_match(p, r);
        });
  }
  if (name == "rouge1") {
    return std::make_unique<LexicalScorer>(
        "rouge1",
        +[](std::string_view p, std::string_view r) { return rouge1_f(p, r); });
  }
  if (name == "rougeL") {
    return std::make_unique<LexicalScorer>(
        "rougeL",
        +[](std::string_view p, std::string_view r) { return rougeL_f(p, r); });
  }
  if (name == "span_f1") {
    return std::make_unique<LexicalScorer>(
        "span_f1",
        +[](std::string_view p, std::string_view r) { return span_f1(p, r); });
  }
  if (name == "structured_match") {
    return std::make_unique<StructuredMatchScorer>();
  }
  if (name == "embed_cosine") {
    if (deps.embedder == nullptr) {
      throw ValidationError("embed_cosine needs an embedding provider");
    }
    return std::make_unique<EmbedCosineScorer>(deps.embedder,
                                               deps.embed_model);
  }
  if (name == "llm_judge") {
    if (deps.judge == nullptr) {
      throw ValidationError("llm_judge needs a judge provider");
    }
    return std::make_unique<LlmJudgeScorer>(deps.judge, deps.judge_model);
  }
  if (name == "soft_rm") {
    if (deps.rm_scores == nullptr) {
      throw ValidationError("soft_rm needs a raw reward-model score file");
    }
    return std::make_unique<SoftRmScorer>(deps.rm_scores);
  }
  throw ValidationError("unknown scorer '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Batch scoring
// ---------------------------------------------------------------------------

std::vector<ScoreRecord> score_batch(std::span<const harness::Generation> gens,
                                     const corpus::Corpus& corpus,
                                     const corpus::TaskRegistry& registry,
                                     const Scorer& scorer, int parallelism) {
  if (parallelism < 1) throw ContractError("parallelism must be >= 1");

  std::vector<ScoreRecord> records(gens.size());
  auto score_one = [&](std::size_t i) {
    const harness::Generation& gen = gens[i];
    ScoreRecord record;
    record.sample_id = gen.sample_id;
    record.model_id = gen.model_id;
    record.scorer_id = scorer.id();
    try {
      if (!gen.error.empty()) {
        record.error = "generation_failed: " + gen.error;
      } else {
        const corpus::TaskSample* sample = corpus.find(gen.sample_id);
        if (sample == nullptr) {
          record.error = "unknown sample '" + gen.sample_id + "'";
        } else {
          record = scorer.score(*sample, registry.get(sample->task_id), gen);
          if (record.value &&
              (!std::isfinite(*record.value) || *record.value < 0.0 ||
               *record.value > 1.0)) {
            record.error = "scorer produced out-of-range value";
            record.value.reset();
          }
        }
      }
    } catch (const std::exception& e) {
      record.value.reset();
      record.error = e.what();
    }
    records[i] = std::move(record);
  };

  const auto count = static_cast<std::int64_t>(gens.size());
#ifdef _OPENMP
  if (parallelism > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(parallelism)
    for (std::int64_t i = 0; i < count; ++i) {
      score_one(static_cast<std::size_t>(i));
    }
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      score_one(static_cast<std::size_t>(i));
    }
  }
#else
  (void)parallelism;
  for (std::int64_t i = 0; i < count; ++i) {
    score_one(static_cast<std::size_t>(i));
  }
#endif

  std::stable_sort(records.begin(), records.end(),
                   [](const ScoreRecord& a, const ScoreRecord& b) {
                     if (a.sample_id != b.sample_id) {
                       return a.sample_id < b.sample_id;
                     }
                     return a.model_id < b.model_id;
                   });
  return records;
}

}  // namespace ifteval::scorers
