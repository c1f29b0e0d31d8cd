#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ifteval/errors.hpp"
#include "ifteval/metaeval.hpp"
#include "ifteval/random.hpp"
#include "oracles.hpp"

using namespace ifteval;
using metaeval::ScoredSample;

namespace {

std::vector<ScoredSample> make_scored(const std::string& task,
                                      const std::vector<double>& values,
                                      int id_offset = 0) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back({task + "-" + std::to_string(i + id_offset), task,
                   values[i]});
  }
  return out;
}

std::map<std::string, double> humans_for(const std::vector<ScoredSample>& s,
                                         const std::vector<double>& values) {
  std::map<std::string, double> humans;
  for (std::size_t i = 0; i < s.size(); ++i) humans[s[i].sample_id] = values[i];
  return humans;
}

}  // namespace

TEST_CASE("average ranks handle ties with mean rank") {
  const std::vector<double> v = {1, 2, 2, 4};
  const auto ranks = metaeval::average_ranks(v);
  CHECK(ranks == std::vector<double>{1.0, 2.5, 2.5, 4.0});
}

TEST_CASE("spearman on monotone and reversed sequences") {
  CHECK(metaeval::spearman(std::vector<double>{1, 2, 3},
                           std::vector<double>{10, 20, 30}) ==
        doctest::Approx(1.0));
  CHECK(metaeval::spearman(std::vector<double>{1, 2, 3},
                           std::vector<double>{3, 2, 1}) ==
        doctest::Approx(-1.0));
}

TEST_CASE("spearman tie fixture matches the definitional oracle") {
  const std::vector<double> x = {1, 2, 2, 4};
  const std::vector<double> y = {1, 3, 2, 4};
  const double rho = metaeval::spearman(x, y);
  CHECK(std::abs(rho - oracles::spearman(x, y)) < 1e-12);
  CHECK(rho == doctest::Approx(0.9486832980505138).epsilon(1e-9));
}

TEST_CASE("spearman rejects degenerate inputs") {
  CHECK_THROWS_AS(metaeval::spearman(std::vector<double>{1, 1, 1},
                                     std::vector<double>{1, 2, 3}),
                  UndefinedCorrelationError);
  CHECK_THROWS_AS(metaeval::spearman(std::vector<double>{1, 2},
                                     std::vector<double>{1, 2, 3}),
                  ContractError);
  CHECK_THROWS_AS(metaeval::spearman(std::vector<double>{1},
                                     std::vector<double>{2}),
                  ContractError);
}

TEST_CASE("spearman is invariant under strictly increasing transforms") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng::bounded(gen, 30);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng::bounded(gen, 12));  // ties likely
      y[i] = static_cast<double>(rng::bounded(gen, 12));
    }
    bool x_const = std::all_of(x.begin(), x.end(),
                               [&](double v) { return v == x[0]; });
    bool y_const = std::all_of(y.begin(), y.end(),
                               [&](double v) { return v == y[0]; });
    if (x_const || y_const) continue;

    const double rho = metaeval::spearman(x, y);
    const double a = 0.5 + rng::uniform01(gen);
    std::vector<double> tx(n);
    for (std::size_t i = 0; i < n; ++i) tx[i] = a * x[i] + x[i] * x[i] * x[i];
    CHECK(std::abs(metaeval::spearman(tx, y) - rho) < 1e-12);
  }
}

TEST_CASE("spearman is symmetric") {
  const std::vector<double> x = {0.3, 0.8, 0.8, 0.1, 0.5};
  const std::vector<double> y = {1, 0, 1, 0, 1};
  CHECK(metaeval::spearman(x, y) == doctest::Approx(metaeval::spearman(y, x)));
}

TEST_CASE("cit: perfect agreement on two tasks") {
  auto a = make_scored("mnli", {0.1, 0.5, 0.9});
  auto b = make_scored("sst2", {0.2, 0.4, 0.6});
  std::vector<ScoredSample> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::map<std::string, double> humans;
  for (const auto& s : all) humans[s.sample_id] = s.value;

  const auto report = metaeval::cit(all, humans, "metric");
  CHECK(report.per_task.size() == 2);
  CHECK(report.per_task.at("mnli").rho == doctest::Approx(1.0));
  CHECK(report.per_task.at("sst2").rho == doctest::Approx(1.0));
  CHECK(*report.mean_rho == doctest::Approx(1.0));
}

TEST_CASE("cit: anti-ordered task reports -1") {
  auto scores = make_scored("mnli", {0.9, 0.5, 0.1});
  const auto humans = humans_for(scores, {0.0, 0.5, 1.0});
  const auto report = metaeval::cit(scores, humans, "metric");
  CHECK(report.per_task.at("mnli").rho == doctest::Approx(-1.0));
}

TEST_CASE("cit: mean of two oracle rho values") {
  const std::vector<double> s1 = {0.2, 0.9, 0.4, 0.7};
  const std::vector<double> h1 = {0.0, 1.0, 1.0, 0.0};
  const std::vector<double> s2 = {0.1, 0.3, 0.8};
  const std::vector<double> h2 = {0.0, 1.0, 1.0};
  auto a = make_scored("mnli", s1);
  auto b = make_scored("sst2", s2);
  std::vector<ScoredSample> all(a);
  all.insert(all.end(), b.begin(), b.end());
  auto humans = humans_for(a, h1);
  auto more = humans_for(b, h2);
  humans.insert(more.begin(), more.end());

  const auto report = metaeval::cit(all, humans, "metric");
  const double expected =
      (oracles::spearman(s1, h1) + oracles::spearman(s2, h2)) / 2.0;
  CHECK(std::abs(*report.mean_rho - expected) < 1e-12);
}

TEST_CASE("cit: tiny or constant tasks are omitted with a warning") {
  auto a = make_scored("mnli", {0.2, 0.8, 0.5});
  auto tiny = make_scored("sst2", {0.4});
  auto flat = make_scored("conll", {0.5, 0.5, 0.5});
  std::vector<ScoredSample> all(a);
  all.insert(all.end(), tiny.begin(), tiny.end());
  all.insert(all.end(), flat.begin(), flat.end());
  std::map<std::string, double> humans;
  int i = 0;
  for (const auto& s : all) humans[s.sample_id] = (i++ % 2) ? 1.0 : 0.0;
  humans[a[0].sample_id] = 0.0;
  humans[a[1].sample_id] = 1.0;
  humans[a[2].sample_id] = 1.0;

  const auto report = metaeval::cit(all, humans, "metric");
  CHECK(report.per_task.count("mnli") == 1);
  CHECK(report.per_task.count("sst2") == 0);
  CHECK(report.per_task.count("conll") == 0);
  CHECK(report.warnings.size() == 2);
}

TEST_CASE("cit: missing human value is a contract error") {
  auto scores = make_scored("mnli", {0.2, 0.8});
  std::map<std::string, double> humans{{scores[0].sample_id, 1.0}};
  CHECK_THROWS_AS(metaeval::cit(scores, humans, "m"), ContractError);
}

TEST_CASE("cat: metric equal to human is 1, single task rejected") {
  auto a = make_scored("mnli", {0.1, 0.9, 0.4});
  auto b = make_scored("sst2", {0.3, 0.6, 0.8});
  std::vector<ScoredSample> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::map<std::string, double> humans;
  for (const auto& s : all) humans[s.sample_id] = s.value;

  const auto report = metaeval::cat(all, humans, "metric");
  CHECK(*report.pooled_rho == doctest::Approx(1.0));
  CHECK(report.pooled_n == 6);

  std::map<std::string, double> humans_a;
  for (const auto& s : a) humans_a[s.sample_id] = s.value;
  CHECK_THROWS_AS(metaeval::cat(a, humans_a, "metric"), ContractError);
}

TEST_CASE("cat < cit on the two-task shifted-scale fixture") {
  // Both tasks perfectly ordered internally, but task B's score band for
  // incorrect answers sits above task A's band for correct ones.
  auto a = make_scored("taskA", {0.1, 0.1, 0.4, 0.4});
  auto b = make_scored("taskB", {0.5, 0.5, 0.6, 0.6});
  const std::vector<double> binary = {0, 0, 1, 1};
  auto humans = humans_for(a, binary);
  auto more = humans_for(b, binary);
  humans.insert(more.begin(), more.end());

  std::vector<ScoredSample> all(a);
  all.insert(all.end(), b.begin(), b.end());

  const auto per_task = metaeval::cit(all, humans, "metric");
  CHECK(per_task.per_task.at("taskA").rho == doctest::Approx(1.0));
  CHECK(per_task.per_task.at("taskB").rho == doctest::Approx(1.0));

  const auto pooled = metaeval::cat(all, humans, "metric");
  std::vector<double> pooled_scores, pooled_humans;
  for (const auto& s : all) {
    pooled_scores.push_back(s.value);
    pooled_humans.push_back(humans.at(s.sample_id));
  }
  const double expected = oracles::spearman(pooled_scores, pooled_humans);
  CHECK(std::abs(*pooled.pooled_rho - expected) < 1e-12);
  CHECK(*pooled.pooled_rho ==
        doctest::Approx(0.4472135954999579).epsilon(1e-12));
  CHECK(*pooled.pooled_rho < *per_task.mean_rho);
}

TEST_CASE("cat equals the per-task rho when pooling a single task's data") {
  auto a = make_scored("mnli", {0.2, 0.9, 0.4, 0.7});
  const auto humans = humans_for(a, {0.0, 1.0, 1.0, 0.0});
  const auto report = metaeval::cit(a, humans, "metric");
  std::vector<double> s, h;
  for (const auto& scored : a) {
    s.push_back(scored.value);
    h.push_back(humans.at(scored.sample_id));
  }
  CHECK(report.per_task.at("mnli").rho ==
        doctest::Approx(metaeval::spearman(s, h)));
}

TEST_CASE("tfa: equal means give zero percent") {
  auto zero = make_scored("mnli", {0.4, 0.6});
  auto trained = make_scored("mnli", {0.5, 0.5}, 100);
  const auto report = metaeval::tfa(zero, trained, "metric");
  CHECK(report.mean_pct == doctest::Approx(0.0));
}

TEST_CASE("tfa: 0.40 to 0.60 is +50 percent") {
  auto zero = make_scored("mnli", {0.3, 0.5});
  auto trained = make_scored("mnli", {0.55, 0.65}, 100);
  const auto report = metaeval::tfa(zero, trained, "metric");
  CHECK(report.mean_pct == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("tfa: per-task ratio 1.12 averages to +12 percent") {
  std::vector<ScoredSample> zero, trained;
  auto add = [](std::vector<ScoredSample>& dst, const std::string& task,
                std::vector<double> values, int offset) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      dst.push_back({task + "-" + std::to_string(i + offset), task,
                     values[i]});
    }
  };
  add(zero, "mnli", {0.4, 0.6}, 0);
  add(zero, "qnli", {0.2, 0.3}, 0);
  add(zero, "sst2", {0.35, 0.45}, 0);
  add(trained, "mnli", {0.52, 0.6}, 100);
  add(trained, "qnli", {0.26, 0.3}, 100);
  add(trained, "sst2", {0.448, 0.448}, 100);

  const auto report = metaeval::tfa(zero, trained, "human");
  CHECK(report.per_task_pct.size() == 3);
  CHECK(std::abs(report.mean_pct - 12.0) < 0.1);  // within 0.1 pp
}

TEST_CASE("tfa: zero baseline is a division-domain error") {
  auto zero = make_scored("mnli", {0.0, 0.0});
  auto trained = make_scored("mnli", {0.5, 0.6}, 100);
  CHECK_THROWS_AS(metaeval::tfa(zero, trained, "m"), ContractError);
}

TEST_CASE("tfa is invariant under a common positive scale") {
  auto zero = make_scored("mnli", {0.2, 0.4});
  auto trained = make_scored("mnli", {0.3, 0.5}, 100);
  const double base = metaeval::tfa(zero, trained, "m").mean_pct;
  for (auto& s : zero) s.value *= 0.5;
  for (auto& s : trained) s.value *= 0.5;
  const double scaled = metaeval::tfa(zero, trained, "m").mean_pct;
  CHECK(base == doctest::Approx(scaled).epsilon(1e-9));
}

TEST_CASE("tfa pooled variant collapses tasks into global means") {
  std::vector<ScoredSample> zero = make_scored("a", {0.2, 0.4});
  auto more = make_scored("b", {0.4, 0.6});
  zero.insert(zero.end(), more.begin(), more.end());
  std::vector<ScoredSample> trained = make_scored("a", {0.4, 0.6}, 100);
  auto more_t = make_scored("b", {0.6, 0.8}, 100);
  trained.insert(trained.end(), more_t.begin(), more_t.end());
  const auto pooled = metaeval::tfa(zero, trained, "m", /*pooled=*/true);
  // global means 0.4 -> 0.6
  CHECK(pooled.mean_pct == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("scorer_matrix: duplicate and negated columns") {
  metaeval::ScoreTable table;
  table.scorer_ids = {"a", "a_dup", "neg"};
  const std::vector<double> base = {0.1, 0.7, 0.3, 0.9, 0.5};
  for (std::size_t i = 0; i < base.size(); ++i) {
    table.sample_ids.push_back("s" + std::to_string(i));
    table.values.push_back({base[i], base[i], 1.0 - base[i]});
  }
  const auto report = metaeval::scorer_matrix(table);
  CHECK(*report.rho[0][0] == doctest::Approx(1.0));
  CHECK(*report.rho[0][1] == doctest::Approx(1.0));
  CHECK(*report.rho[0][2] == doctest::Approx(-1.0));
  CHECK(*report.rho[1][2] == doctest::Approx(-1.0));
  CHECK(*report.rho[2][0] == *report.rho[0][2]);
}

TEST_CASE("scorer_matrix: three-scorer fixture matches per-pair oracle") {
  metaeval::ScoreTable table;
  table.scorer_ids = {"x", "y", "z"};
  const std::vector<std::vector<double>> cols = {
      {0.1, 0.5, 0.9, 0.2, 0.7, 0.7},
      {0.3, 0.3, 0.8, 0.1, 0.9, 0.6},
      {0.9, 0.2, 0.4, 0.8, 0.1, 0.5}};
  for (std::size_t i = 0; i < cols[0].size(); ++i) {
    table.sample_ids.push_back("s" + std::to_string(i));
    table.values.push_back({cols[0][i], cols[1][i], cols[2][i]});
  }
  const auto report = metaeval::scorer_matrix(table);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const double expected =
          a == b ? 1.0 : oracles::spearman(cols[a], cols[b]);
      REQUIRE(report.rho[a][b].has_value());
      CHECK(std::abs(*report.rho[a][b] - expected) < 1e-12);
    }
  }
}

TEST_CASE("scorer_matrix: serial and parallel paths agree") {
  std::mt19937_64 gen(11);
  metaeval::ScoreTable table;
  for (int c = 0; c < 6; ++c) {
    table.scorer_ids.push_back("scorer" + std::to_string(c));
  }
  for (int r = 0; r < 40; ++r) {
    table.sample_ids.push_back("s" + std::to_string(r));
    std::vector<std::optional<double>> row;
    for (int c = 0; c < 6; ++c) row.emplace_back(rng::uniform01(gen));
    table.values.push_back(std::move(row));
  }
  const auto serial = metaeval::scorer_matrix(table, 1);
  const auto parallel = metaeval::scorer_matrix(table, 8);
  CHECK(serial.rho == parallel.rho);
  CHECK(serial.n == parallel.n);
}

TEST_CASE("scorer_matrix rejects undersized tables") {
  metaeval::ScoreTable table;
  table.scorer_ids = {"only"};
  table.sample_ids = {"s0", "s1"};
  table.values = {{0.1}, {0.2}};
  CHECK_THROWS_AS(metaeval::scorer_matrix(table), ContractError);
}

TEST_CASE("category_means basics and permutation invariance") {
  metaeval::ScoreTable table;
  table.scorer_ids = {"m"};
  table.sample_ids = {"s0", "s1", "s2", "s3"};
  table.values = {{0.5}, {0.5}, {0.0}, {1.0}};
  const std::map<std::string, std::string> cats{
      {"s0", "Write"}, {"s1", "Write"}, {"s2", "Code"}, {"s3", "Code"}};

  const auto means = metaeval::category_means(table, cats);
  CHECK(means.at("Write").at("m") == doctest::Approx(0.5));
  CHECK(means.at("Code").at("m") == doctest::Approx(0.5));

  metaeval::ScoreTable shuffled;
  shuffled.scorer_ids = table.scorer_ids;
  shuffled.sample_ids = {"s3", "s0", "s2", "s1"};
  shuffled.values = {{1.0}, {0.5}, {0.0}, {0.5}};
  CHECK(metaeval::category_means(shuffled, cats) == means);
}

TEST_CASE("mean_by_sample aggregates annotators and rejects duplicates") {
  std::vector<metaeval::HumanJudgment> judgments = {
      {"s0", "a", 1.0}, {"s0", "b", 0.0}, {"s1", "a", 1.0}};
  const auto means = metaeval::mean_by_sample(judgments);
  CHECK(means.at("s0") == doctest::Approx(0.5));
  CHECK(means.at("s1") == doctest::Approx(1.0));

  judgments.push_back({"s0", "a", 1.0});
  CHECK_THROWS_AS(metaeval::mean_by_sample(judgments), ContractError);

  std::vector<metaeval::HumanJudgment> bad = {{"s0", "a", 1.5}};
  CHECK_THROWS_AS(metaeval::mean_by_sample(bad), ContractError);
}

TEST_CASE("inter_annotator_rho averages pairwise correlations") {
  std::vector<metaeval::HumanJudgment> judgments;
  const std::vector<double> a = {0.1, 0.4, 0.8, 0.6};
  const std::vector<double> b = {0.2, 0.5, 0.9, 0.4};
  for (std::size_t i = 0; i < a.size(); ++i) {
    judgments.push_back({"s" + std::to_string(i), "ann-a", a[i]});
    judgments.push_back({"s" + std::to_string(i), "ann-b", b[i]});
  }
  const double expected = oracles::spearman(a, b);
  CHECK(std::abs(metaeval::inter_annotator_rho(judgments) - expected) < 1e-12);

  std::vector<metaeval::HumanJudgment> solo = {{"s0", "a", 0.5}};
  CHECK_THROWS_AS(metaeval::inter_annotator_rho(solo), ContractError);
}
