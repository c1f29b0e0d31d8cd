#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ifteval/corpus.hpp"
#include "ifteval/generation.hpp"

namespace ifteval::providers {
class Client;
}

namespace ifteval::scorers {

// One (sample, model, scorer) measurement. value is in [0,1] when present;
// a non-empty error means this sample could not be scored (or the judge
// verdict was excluded) and value is absent.
struct ScoreRecord {
  std::string sample_id;
  std::string model_id;
  std::string scorer_id;
  std::optional<double> value;
  std::string raw;    // unscaled payload, kept verbatim (judge CSV, flags)
  std::string error;
};

nlohmann::json score_record_to_json(const ScoreRecord& record);
ScoreRecord score_record_from_json(const nlohmann::json& doc);

// --- reference-based lexical metrics --------------------------------------

double exact_match(std::string_view pred, std::string_view ref);
double rouge1_f(std::string_view pred, std::string_view ref);
double rougeL_f(std::string_view pred, std::string_view ref);
double span_f1(std::string_view pred, std::string_view ref);

// Entity-set comparison for structured extraction outputs. The first
// balanced JSON object found in pred is compared key-by-key against ref with
// set semantics over normalized strings. Unparseable predictions score 0 and
// flag raw as "unparseable".
double structured_match(std::string_view pred, const nlohmann::json& ref,
                        std::string* raw_flag = nullptr);

// First balanced {...} block in text that parses as a JSON object.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

// --- provider-backed scorers -----------------------------------------------

double embed_cosine(const std::string& pred, const std::string& ref,
                    providers::Client& embedder, const std::string& model_id);

struct JudgeVerdict {
  int score_pred = 0;
  int score_ref = 0;
  bool conforming = false;
  std::string raw_text;
};

// The pairwise grading prompt; byte-stable for fixed inputs.
std::string assemble_judge_prompt(std::string_view prompt,
                                  std::string_view response1,
                                  std::string_view response2);

// Accepts exactly two comma-separated integers, each in [0,10].
JudgeVerdict parse_judge_csv(std::string_view raw);

// Grades pred (Response 1) against ref (Response 2). A non-conforming reply
// triggers exactly one re-ask before giving up.
JudgeVerdict llm_judge(const std::string& prompt, const std::string& pred,
                       const std::string& ref, providers::Client& judge,
                       const std::string& model_id);

// score_pred / 10. Requires a conforming verdict.
double judge_to_score(const JudgeVerdict& verdict);

// Logistic combination of raw reward-model scores, overflow-safe.
double soft_rm(double s_pred, double s_ref);

// Raw reward-model scores imported from a pre-scored JSONL file
// ({"sample_id", "s_pred", "s_ref"} per line).
class RmScoreTable {
 public:
  static RmScoreTable load(const std::filesystem::path& path);
  std::optional<std::pair<double, double>> find(
      std::string_view sample_id) const;

 private:
  std::map<std::string, std::pair<double, double>, std::less<>> scores_;
};

// --- batch interface --------------------------------------------------------

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string id() const = 0;
  // Throws on per-sample failure; score_batch converts that into an error
  // record.
  virtual ScoreRecord score(const corpus::TaskSample& sample,
                            const corpus::TaskSpec& spec,
                            const harness::Generation& gen) const = 0;
};

struct ScorerDeps {
  providers::Client* judge = nullptr;
  std::string judge_model;
  providers::Client* embedder = nullptr;
  std::string embed_model;
  const RmScoreTable* rm_scores = nullptr;
};

// Registry names: exact_match, rouge1, rougeL, span_f1, structured_match,
// embed_cosine, llm_judge, soft_rm.
bool is_known_scorer(std::string_view name);
std::vector<std::string> known_scorers();
std::unique_ptr<Scorer> make_scorer(std::string_view name,
                                    const ScorerDeps& deps);

// One record per generation, output sorted by sample_id regardless of
// completion order. parallelism == 1 is the serial reference path; larger
// values fan out across OpenMP threads with identical results.
std::vector<ScoreRecord> score_batch(std::span<const harness::Generation> gens,
                                     const corpus::Corpus& corpus,
                                     const corpus::TaskRegistry& registry,
                                     const Scorer& scorer, int parallelism);

}  // namespace ifteval::scorers
