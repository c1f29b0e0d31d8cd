#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ifteval::metaeval {

// Average ranks (ties get the mean of the rank positions they cover).
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation: Pearson correlation of average-assigned ranks.
// Requires equal lengths >= 2 and a non-constant vector on each side.
double spearman(std::span<const double> x, std::span<const double> y);

struct HumanJudgment {
  std::string sample_id;
  std::string annotator_id;  // empty when single-annotator
  double value = 0.0;        // in [0,1]; binary for classification tasks
};

std::vector<HumanJudgment> load_human_judgments(
    const std::filesystem::path& path);

// Mean over annotators per sample. Rejects duplicate (sample, annotator)
// pairs and out-of-range values.
std::map<std::string, double> mean_by_sample(
    std::span<const HumanJudgment> judgments);

// Mean pairwise Spearman correlation between annotators over their shared
// samples.
double inter_annotator_rho(std::span<const HumanJudgment> judgments);

// One joined measurement ready for correlation.
struct ScoredSample {
  std::string sample_id;
  std::string task_id;
  double value = 0.0;
};

struct TaskCorrelation {
  double rho = 0.0;
  std::size_t n = 0;
};

struct CorrelationReport {
  std::string scope;  // "CIT" | "CAT"
  std::string scorer_id;
  std::map<std::string, TaskCorrelation> per_task;  // CIT cells
  std::optional<double> mean_rho;                   // unweighted mean of cells
  std::optional<double> pooled_rho;                 // CAT
  std::size_t pooled_n = 0;
  std::vector<std::string> warnings;  // omitted tasks, with reasons
};

// Per-task correlation against human judgment, averaged across tasks. Tasks
// with fewer than two joined points, or with a constant side, are omitted
// with a warning. A scored sample without a human value is a contract error.
CorrelationReport cit(std::span<const ScoredSample> scores,
                      const std::map<std::string, double>& humans,
                      const std::string& scorer_id);

// Pooled correlation over all tasks mixed together, no per-task
// normalization; tests whether the scoring scale is absolute across tasks.
// Requires at least two distinct tasks after the join.
CorrelationReport cat(std::span<const ScoredSample> scores,
                      const std::map<std::string, double>& humans,
                      const std::string& scorer_id);

struct TfaReport {
  std::string scorer_id;
  std::map<std::string, double> per_task_pct;
  double mean_pct = 0.0;
  std::vector<std::string> warnings;
};

// Relative mean improvement, in percent, between zero-shot scores and
// format-trained scores. With several tasks present the improvement is
// computed per task and averaged equally; set pooled to collapse everything
// into two global means instead.
TfaReport tfa(std::span<const ScoredSample> zero_shot,
              std::span<const ScoredSample> format_trained,
              const std::string& scorer_id, bool pooled = false);

// Dense sample-by-scorer value table; absent cells are unset optionals.
struct ScoreTable {
  std::vector<std::string> scorer_ids;   // columns
  std::vector<std::string> sample_ids;   // rows
  std::vector<std::vector<std::optional<double>>> values;  // [row][col]

  std::optional<std::size_t> column_of(std::string_view scorer_id) const;
};

struct MatrixReport {
  std::vector<std::string> scorer_ids;
  // rho[i][j]; unset when the pair has <2 joined points or a constant side.
  std::vector<std::vector<std::optional<double>>> rho;
  std::vector<std::vector<std::size_t>> n;
  std::vector<std::string> warnings;
};

// Pairwise Spearman between scorer columns; symmetric with unit diagonal.
// parallelism == 1 is the serial reference path; larger values use OpenMP
// with identical output.
MatrixReport scorer_matrix(const ScoreTable& table, int parallelism = 1);

// Arithmetic mean per (category, scorer); empty categories are omitted.
// Keyed category -> scorer -> mean.
std::map<std::string, std::map<std::string, double>> category_means(
    const ScoreTable& table,
    const std::map<std::string, std::string>& sample_category);

}  // namespace ifteval::metaeval
