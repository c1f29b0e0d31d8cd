#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifteval/corpus.hpp"
#include "ifteval/generation.hpp"
#include "ifteval/metaeval.hpp"
#include "ifteval/providers.hpp"
#include "ifteval/scorers.hpp"

namespace ifteval::harness {

struct ProviderConfig {
  std::string kind = "stub";  // stub | http
  std::string base_url;
  std::string cache_dir;  // in-memory cache when empty
  std::string stub_rules;
  int max_retries = 2;
  int initial_delay_ms = 200;
  double backoff_factor = 2.0;
  int max_in_flight = 8;
};

struct RunConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path registry_path;  // builtin registry when empty
  std::vector<std::string> scorer_ids;
  ProviderConfig provider;
  std::string generation_model = "model-under-test";
  std::string judge_model = "judge";
  std::string embed_model = "embedder";
  int parallelism = 1;
  std::filesystem::path out_dir;
  std::uint64_t root_seed = 0;
  bool offline = false;
  std::optional<std::filesystem::path> human_scores_path;
  std::optional<std::filesystem::path> tfa_scores_path;
  std::optional<std::filesystem::path> rm_scores_path;
  double generation_temperature = 0.0;
  std::optional<int> max_tokens;

  // Relative paths are resolved against the config file's directory.
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
  nlohmann::json to_json() const;
  std::string config_hash() const;
};

// Owns the transport, cache, and client built from a provider config. The
// stub pointer is non-null only for stub providers.
struct ProviderBundle {
  std::shared_ptr<providers::Backend> backend;
  std::shared_ptr<providers::CacheStore> cache;
  std::unique_ptr<providers::Client> client;
  providers::StubBackend* stub = nullptr;
};

ProviderBundle build_provider(const ProviderConfig& config);

// One generation per test-split sample, ordered by sample_id. Per-sample
// transport failures are recorded on the generation; the batch continues.
std::vector<Generation> generate(const corpus::Corpus& test_corpus,
                                 const corpus::TaskRegistry& registry,
                                 providers::Client& client,
                                 const RunConfig& config);

void write_generations(std::span<const Generation> gens,
                       const std::filesystem::path& path);
std::vector<Generation> load_generations(const std::filesystem::path& path);

void write_scores(std::span<const scorers::ScoreRecord> records,
                  const std::filesystem::path& path);
std::vector<scorers::ScoreRecord> load_scores(
    const std::filesystem::path& path);

// Valued records joined to their task via the corpus.
std::vector<metaeval::ScoredSample> to_scored_samples(
    std::span<const scorers::ScoreRecord> records,
    const corpus::Corpus& corpus);

// Dense table over the union of scored samples; absent (sample, scorer)
// measurements stay unset.
metaeval::ScoreTable build_score_table(
    std::span<const scorers::ScoreRecord> records,
    std::span<const std::string> scorer_ids);

// Per-scorer zero-shot / format-trained score sets for TFA, imported from a
// pre-scored JSONL file with a "group" field.
struct TfaInput {
  std::vector<metaeval::ScoredSample> zero_shot;
  std::vector<metaeval::ScoredSample> format_trained;
};
std::map<std::string, TfaInput> load_tfa_scores(
    const std::filesystem::path& path);

// Report writers shared by the pipeline and the metaeval subcommand. Each
// emits <name>.json and <name>.csv under reports_dir via atomic rename.
void write_correlation_report_files(
    const std::filesystem::path& reports_dir, const std::string& name,
    const std::vector<metaeval::CorrelationReport>& reports);
void write_tfa_report_files(const std::filesystem::path& reports_dir,
                            const std::vector<metaeval::TfaReport>& reports);
void write_matrix_report_files(const std::filesystem::path& reports_dir,
                               const metaeval::MatrixReport& report);
void write_category_report_files(
    const std::filesystem::path& reports_dir,
    const std::map<std::string, std::map<std::string, double>>& means,
    std::span<const std::string> scorer_ids);

// ingest -> generate -> score -> metaeval -> report. Emits
// generations.jsonl, scores.jsonl, reports/*.{csv,json}, and manifest.json
// under out_dir; returns out_dir. Offline runs pin the clock so artifacts
// are byte-stable.
std::filesystem::path run_pipeline(const RunConfig& config);

// Prompt body for one task's failure review.
std::string assemble_error_analysis_prompt(
    const std::string& task_label,
    std::span<const std::pair<const corpus::TaskSample*, const Generation*>>
        failures);

// Selects the k lowest-scoring samples per task (score ascending, sample_id
// tie-break) and asks the judge for a failure-pattern review.
std::string error_analysis(std::span<const scorers::ScoreRecord> records,
                           std::span<const Generation> gens,
                           const corpus::Corpus& corpus, int k,
                           providers::Client& judge,
                           const std::string& judge_model);

}  // namespace ifteval::harness
