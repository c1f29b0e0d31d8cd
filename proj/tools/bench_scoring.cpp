// Compares the serial reference paths against the OpenMP paths for the two
// data-parallel kernels: batch lexical scoring and the pairwise scorer
// correlation matrix.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ifteval/corpus.hpp"
#include "ifteval/metaeval.hpp"
#include "ifteval/random.hpp"
#include "ifteval/scorers.hpp"

using namespace ifteval;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

std::string random_sentence(std::mt19937_64& gen, int words) {
  static const std::vector<std::string> vocab = {
      "the",   "model", "answers", "question", "with", "a",     "short",
      "span",  "from",  "context", "because",  "this", "task",  "is",
      "about", "exact", "tokens",  "and",      "long", "chains"};
  std::string out;
  for (int i = 0; i < words; ++i) {
    if (!out.empty()) out += ' ';
    out += vocab[rng::bounded(gen, vocab.size())];
  }
  return out;
}

struct Workload {
  corpus::Corpus corpus;
  corpus::TaskRegistry registry;
  std::vector<harness::Generation> gens;
};

Workload make_workload(std::size_t samples, int words) {
  std::mt19937_64 gen(1234);
  std::vector<corpus::TaskSample> task_samples;
  std::vector<harness::Generation> gens;
  for (std::size_t i = 0; i < samples; ++i) {
    corpus::TaskSample sample;
    sample.sample_id = "bench-" + std::to_string(i);
    sample.task_id = "xsum";
    sample.category = "Summarize";
    sample.input_text = random_sentence(gen, words);
    sample.reference = random_sentence(gen, words);
    sample.split = corpus::Split::Test;
    task_samples.push_back(sample);

    harness::Generation generation;
    generation.sample_id = sample.sample_id;
    generation.model_id = "bench-model";
    generation.output_text = random_sentence(gen, words);
    gens.push_back(std::move(generation));
  }
  return {corpus::Corpus(std::move(task_samples)),
          corpus::TaskRegistry::builtin(), std::move(gens)};
}

metaeval::ScoreTable make_table(std::size_t rows, std::size_t cols) {
  std::mt19937_64 gen(99);
  metaeval::ScoreTable table;
  for (std::size_t c = 0; c < cols; ++c) {
    table.scorer_ids.push_back("scorer-" + std::to_string(c));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    table.sample_ids.push_back("row-" + std::to_string(r));
    std::vector<std::optional<double>> row(cols);
    for (std::size_t c = 0; c < cols; ++c) row[c] = rng::uniform01(gen);
    table.values.push_back(std::move(row));
  }
  return table;
}

}  // namespace

int main() {
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("ifteval benchmark (max threads: %d)\n\n", threads);

  {
    const auto workload = make_workload(20000, 24);
    const auto scorer = scorers::make_scorer("rougeL", {});
    std::printf("score_batch rougeL, %zu samples x %d tokens\n",
                workload.gens.size(), 24);

    const auto t_serial = std::chrono::steady_clock::now();
    const auto serial = scorers::score_batch(
        workload.gens, workload.corpus, workload.registry, *scorer, 1);
    const double serial_s = seconds_since(t_serial);
    std::printf("  serial   : %8.3f s\n", serial_s);

    const auto t_parallel = std::chrono::steady_clock::now();
    const auto parallel = scorers::score_batch(
        workload.gens, workload.corpus, workload.registry, *scorer, threads);
    const double parallel_s = seconds_since(t_parallel);
    std::printf("  openmp   : %8.3f s  (speedup %.2fx, outputs %s)\n\n",
                parallel_s, serial_s / parallel_s,
                serial.size() == parallel.size() &&
                        std::equal(serial.begin(), serial.end(),
                                   parallel.begin(),
                                   [](const auto& a, const auto& b) {
                                     return a.sample_id == b.sample_id &&
                                            a.value == b.value;
                                   })
                    ? "identical"
                    : "DIFFER");
  }

  {
    const auto table = make_table(4000, 24);
    std::printf("scorer_matrix, %zu samples x %zu scorers\n",
                table.sample_ids.size(), table.scorer_ids.size());

    const auto t_serial = std::chrono::steady_clock::now();
    const auto serial = metaeval::scorer_matrix(table, 1);
    const double serial_s = seconds_since(t_serial);
    std::printf("  serial   : %8.3f s\n", serial_s);

    const auto t_parallel = std::chrono::steady_clock::now();
    const auto parallel = metaeval::scorer_matrix(table, threads);
    const double parallel_s = seconds_since(t_parallel);
    bool same = serial.rho == parallel.rho;
    std::printf("  openmp   : %8.3f s  (speedup %.2fx, outputs %s)\n",
                parallel_s, serial_s / parallel_s,
                same ? "identical" : "DIFFER");
  }
  return 0;
}
