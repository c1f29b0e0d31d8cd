#include "ifteval/metaeval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ifteval/errors.hpp"

namespace ifteval::metaeval {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });

  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share the mean 1-based rank.
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ContractError("spearman requires equal-length vectors");
  }
  if (x.size() < 2) {
    throw ContractError("spearman requires at least two points");
  }
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(),
                       [&](double value) { return value == v.front(); });
  };
  if (constant(x) || constant(y)) {
    throw UndefinedCorrelationError(
        "spearman undefined on a constant vector");
  }

  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean_rx =
      std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double mean_ry =
      std::accumulate(ry.begin(), ry.end(), 0.0) / n;

  double cov = 0.0, var_x = 0.0, var_y = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean_rx;
    const double dy = ry[i] - mean_ry;
    cov += dx * dy;
    var_x += dx * dx;
    var_y += dy * dy;
  }
  return cov / std::sqrt(var_x * var_y);
}

// ---------------------------------------------------------------------------
// Human judgments
// ---------------------------------------------------------------------------

std::vector<HumanJudgment> load_human_judgments(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ContractError("cannot open human scores file " + path.string());
  }
  std::vector<HumanJudgment> judgments;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      HumanJudgment judgment;
      judgment.sample_id = doc.at("sample_id").get<std::string>();
      judgment.annotator_id = doc.value("annotator_id", "");
      judgment.value = doc.at("value").get<double>();
      judgments.push_back(std::move(judgment));
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("human scores error at line " +
                          std::to_string(line_number) + ": " + e.what());
    }
  }
  return judgments;
}

std::map<std::string, double> mean_by_sample(
    std::span<const HumanJudgment> judgments) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::set<std::pair<std::string, std::string>> seen;
  for (const HumanJudgment& judgment : judgments) {
    if (judgment.value < 0.0 || judgment.value > 1.0 ||
        !std::isfinite(judgment.value)) {
      throw ContractError("human judgment for '" + judgment.sample_id +
                          "' outside [0,1]");
    }
    if (!seen.emplace(judgment.sample_id, judgment.annotator_id).second) {
      throw ContractError("duplicate human judgment for sample '" +
                          judgment.sample_id + "' annotator '" +
                          judgment.annotator_id + "'");
    }
    auto& [sum, count] = sums[judgment.sample_id];
    sum += judgment.value;
    ++count;
  }
  std::map<std::string, double> means;
  for (const auto& [sample_id, acc] : sums) {
    means[sample_id] = acc.first / static_cast<double>(acc.second);
  }
  return means;
}

double inter_annotator_rho(std::span<const HumanJudgment> judgments) {
  std::map<std::string, std::map<std::string, double>> by_annotator;
  for (const HumanJudgment& judgment : judgments) {
    by_annotator[judgment.annotator_id][judgment.sample_id] = judgment.value;
  }
  if (by_annotator.size() < 2) {
    throw ContractError("inter_annotator_rho needs at least two annotators");
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (auto a = by_annotator.begin(); a != by_annotator.end(); ++a) {
    for (auto b = std::next(a); b != by_annotator.end(); ++b) {
      std::vector<double> va, vb;
      for (const auto& [sample_id, value] : a->second) {
        auto it = b->second.find(sample_id);
        if (it != b->second.end()) {
          va.push_back(value);
          vb.push_back(it->second);
        }
      }
      if (va.size() < 2) continue;
      try {
        sum += spearman(va, vb);
        ++pairs;
      } catch (const UndefinedCorrelationError&) {
        // skip degenerate pairs
      }
    }
  }
  if (pairs == 0) {
    throw ContractError("no annotator pair shares enough samples");
  }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// CIT / CAT / TFA
// ---------------------------------------------------------------------------

namespace {

struct JoinedTask {
  std::vector<double> scores;
  std::vector<double> humans;
};

std::map<std::string, JoinedTask> join_by_task(
    std::span<const ScoredSample> scores,
    const std::map<std::string, double>& humans) {
  std::map<std::string, JoinedTask> tasks;
  for (const ScoredSample& scored : scores) {
    auto it = humans.find(scored.sample_id);
    if (it == humans.end()) {
      throw ContractError("no human judgment for scored sample '" +
                          scored.sample_id + "'");
    }
    JoinedTask& task = tasks[scored.task_id];
    task.scores.push_back(scored.value);
    task.humans.push_back(it->second);
  }
  return tasks;
}

}  // namespace

CorrelationReport cit(std::span<const ScoredSample> scores,
                      const std::map<std::string, double>& humans,
                      const std::string& scorer_id) {
  CorrelationReport report;
  report.scope = "CIT";
  report.scorer_id = scorer_id;

  double sum = 0.0;
  std::size_t cells = 0;
  for (const auto& [task_id, joined] : join_by_task(scores, humans)) {
    if (joined.scores.size() < 2) {
      report.warnings.push_back("task '" + task_id +
                                "' omitted: fewer than 2 joined points");
      continue;
    }
    try {
      const double rho = spearman(joined.scores, joined.humans);
      report.per_task[task_id] = {rho, joined.scores.size()};
      sum += rho;
      ++cells;
    } catch (const UndefinedCorrelationError&) {
      report.warnings.push_back("task '" + task_id +
                                "' omitted: undefined correlation "
                                "(constant values)");
    }
  }
  if (cells > 0) report.mean_rho = sum / static_cast<double>(cells);
  return report;
}

CorrelationReport cat(std::span<const ScoredSample> scores,
                      const std::map<std::string, double>& humans,
                      const std::string& scorer_id) {
  CorrelationReport report;
  report.scope = "CAT";
  report.scorer_id = scorer_id;

  const auto tasks = join_by_task(scores, humans);
  if (tasks.size() < 2) {
    throw ContractError("CAT requires samples from at least two tasks");
  }
  std::vector<double> pooled_scores, pooled_humans;
  for (const auto& [task_id, joined] : tasks) {
    pooled_scores.insert(pooled_scores.end(), joined.scores.begin(),
                         joined.scores.end());
    pooled_humans.insert(pooled_humans.end(), joined.humans.begin(),
                         joined.humans.end());
  }
  report.pooled_rho = spearman(pooled_scores, pooled_humans);
  report.pooled_n = pooled_scores.size();
  return report;
}

namespace {

std::map<std::string, std::pair<double, std::size_t>> mean_by_task(
    std::span<const ScoredSample> scores) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const ScoredSample& scored : scores) {
    auto& [sum, count] = sums[scored.task_id];
    sum += scored.value;
    ++count;
  }
  for (auto& [task_id, acc] : sums) {
    acc.first /= static_cast<double>(acc.second);
  }
  return sums;
}

double relative_improvement_pct(double zero_shot_mean, double trained_mean) {
  if (zero_shot_mean == 0.0) {
    throw ContractError(
        "TFA undefined: zero-shot mean is zero (division domain)");
  }
  return 100.0 * (trained_mean - zero_shot_mean) / zero_shot_mean;
}

}  // namespace

TfaReport tfa(std::span<const ScoredSample> zero_shot,
              std::span<const ScoredSample> format_trained,
              const std::string& scorer_id, bool pooled) {
  if (zero_shot.empty() || format_trained.empty()) {
    throw ContractError("TFA requires non-empty score sets on both sides");
  }
  TfaReport report;
  report.scorer_id = scorer_id;

  if (pooled) {
    auto mean = [](std::span<const ScoredSample> scores) {
      double sum = 0.0;
      for (const ScoredSample& s : scores) sum += s.value;
      return sum / static_cast<double>(scores.size());
    };
    report.mean_pct =
        relative_improvement_pct(mean(zero_shot), mean(format_trained));
    return report;
  }

  const auto zero_means = mean_by_task(zero_shot);
  const auto trained_means = mean_by_task(format_trained);
  double sum = 0.0;
  std::size_t cells = 0;
  for (const auto& [task_id, zero_acc] : zero_means) {
    auto it = trained_means.find(task_id);
    if (it == trained_means.end()) {
      report.warnings.push_back("task '" + task_id +
                                "' omitted: no format-trained scores");
      continue;
    }
    const double pct =
        relative_improvement_pct(zero_acc.first, it->second.first);
    report.per_task_pct[task_id] = pct;
    sum += pct;
    ++cells;
  }
  for (const auto& [task_id, acc] : trained_means) {
    if (zero_means.find(task_id) == zero_means.end()) {
      report.warnings.push_back("task '" + task_id +
                                "' omitted: no zero-shot scores");
    }
  }
  if (cells == 0) {
    throw ContractError("TFA: no task present on both sides");
  }
  report.mean_pct = sum / static_cast<double>(cells);
  return report;
}

// ---------------------------------------------------------------------------
// Scorer matrix and category means
// ---------------------------------------------------------------------------

std::optional<std::size_t> ScoreTable::column_of(
    std::string_view scorer_id) const {
  for (std::size_t i = 0; i < scorer_ids.size(); ++i) {
    if (scorer_ids[i] == scorer_id) return i;
  }
  return std::nullopt;
}

MatrixReport scorer_matrix(const ScoreTable& table, int parallelism) {
  const std::size_t k = table.scorer_ids.size();
  if (k < 2) throw ContractError("scorer_matrix requires at least 2 scorers");
  if (table.sample_ids.size() < 2) {
    throw ContractError("scorer_matrix requires at least 2 samples");
  }
  if (parallelism < 1) throw ContractError("parallelism must be >= 1");

  MatrixReport report;
  report.scorer_ids = table.scorer_ids;
  report.rho.assign(k, std::vector<std::optional<double>>(k));
  report.n.assign(k, std::vector<std::size_t>(k, 0));

  struct Cell {
    std::size_t i, j;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < k; ++i) {
    report.rho[i][i] = 1.0;
    report.n[i][i] = table.sample_ids.size();
    for (std::size_t j = i + 1; j < k; ++j) cells.push_back({i, j});
  }
  // One warning slot per cell so parallel workers never share a vector.
  std::vector<std::string> warnings(cells.size());

  auto compute_cell = [&](std::size_t index) {
    const Cell& cell = cells[index];
    std::vector<double> a, b;
    for (std::size_t row = 0; row < table.sample_ids.size(); ++row) {
      const auto& va = table.values[row][cell.i];
      const auto& vb = table.values[row][cell.j];
      if (va && vb) {
        a.push_back(*va);
        b.push_back(*vb);
      }
    }
    report.n[cell.i][cell.j] = report.n[cell.j][cell.i] = a.size();
    const std::string pair_name =
        table.scorer_ids[cell.i] + "/" + table.scorer_ids[cell.j];
    if (a.size() < 2) {
      warnings[index] =
          "pair " + pair_name + " omitted: fewer than 2 joined points";
      return;
    }
    try {
      const double rho = spearman(a, b);
      report.rho[cell.i][cell.j] = report.rho[cell.j][cell.i] = rho;
    } catch (const UndefinedCorrelationError&) {
      warnings[index] = "pair " + pair_name + " omitted: undefined correlation";
    }
  };

  const auto cell_count = static_cast<std::int64_t>(cells.size());
#ifdef _OPENMP
  if (parallelism > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(parallelism)
    for (std::int64_t c = 0; c < cell_count; ++c) {
      compute_cell(static_cast<std::size_t>(c));
    }
  } else {
    for (std::int64_t c = 0; c < cell_count; ++c) {
      compute_cell(static_cast<std::size_t>(c));
    }
  }
#else
  (void)parallelism;
  for (std::int64_t c = 0; c < cell_count; ++c) {
    compute_cell(static_cast<std::size_t>(c));
  }
#endif

  for (const std::string& warning : warnings) {
    if (!warning.empty()) report.warnings.push_back(warning);
  }
  return report;
}

std::map<std::string, std::map<std::string, double>> category_means(
    const ScoreTable& table,
    const std::map<std::string, std::string>& sample_category) {
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>>
      sums;
  for (std::size_t row = 0; row < table.sample_ids.size(); ++row) {
    const auto category = sample_category.find(table.sample_ids[row]);
    if (category == sample_category.end()) {
      throw ContractError("sample '" + table.sample_ids[row] +
                          "' has no category tag");
    }
    for (std::size_t col = 0; col < table.scorer_ids.size(); ++col) {
      if (!table.values[row][col]) continue;
      auto& [sum, count] = sums[category->second][table.scorer_ids[col]];
      sum += *table.values[row][col];
      ++count;
    }
  }
  std::map<std::string, std::map<std::string, double>> means;
  for (const auto& [category, per_scorer] : sums) {
    for (const auto& [scorer_id, acc] : per_scorer) {
      means[category][scorer_id] = acc.first / static_cast<double>(acc.second);
    }
  }
  return means;
}

}  // namespace ifteval::metaeval
