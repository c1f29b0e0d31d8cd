#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "ifteval/corpus.hpp"
#include "ifteval/errors.hpp"
#include "ifteval/harness.hpp"
#include "ifteval/metaeval.hpp"
#include "ifteval/mixture.hpp"
#include "ifteval/providers.hpp"
#include "ifteval/scorers.hpp"

namespace {

using namespace ifteval;

int cmd_ingest(const std::string& corpus_path, const std::string& registry_path,
               const std::string& out_path) {
  const auto registry = registry_path.empty()
                            ? corpus::TaskRegistry::builtin()
                            : corpus::TaskRegistry::load(registry_path);
  const auto loaded = corpus::load_corpus(corpus_path);

  std::map<std::string, std::size_t> per_task;
  std::map<std::string, std::size_t> per_split;
  for (const corpus::TaskSample& sample : loaded.samples()) {
    if (!registry.contains(sample.task_id)) {
      throw ContractError("sample '" + sample.sample_id +
                          "' references unregistered task '" + sample.task_id +
                          "'");
    }
    ++per_task[sample.task_id];
    ++per_split[std::string(corpus::split_name(sample.split))];
  }
  std::cout << "loaded " << loaded.size() << " samples\n";
  for (const auto& [task, count] : per_task) {
    std::cout << "  task " << task << ": " << count << "\n";
  }
  for (const auto& [split, count] : per_split) {
    std::cout << "  split " << split << ": " << count << "\n";
  }
  if (!out_path.empty()) {
    corpus::save_corpus(loaded, out_path);
    std::cout << "wrote normalized corpus to " << out_path << "\n";
  }
  return 0;
}

int cmd_mix(const std::string& protocol_name,
            const std::vector<std::string>& tasks, const std::vector<int>& ns,
            int repeats, std::uint64_t root_seed, const std::string& out_dir,
            const std::string& base_corpus, const std::string& target_corpus,
            const std::string& synthetic_corpus,
            const std::string& human_corpus) {
  const auto protocol = mixture::protocol_from_name(protocol_name);

  corpus::Corpus base, target, synthetic, human;
  if (protocol == mixture::Protocol::S1Inject) {
    if (base_corpus.empty() || target_corpus.empty()) {
      throw ValidationError("s1 mixtures need --base-corpus and --target-corpus");
    }
    base = corpus::load_corpus(base_corpus);
    target = corpus::load_corpus(target_corpus);
  } else if (protocol == mixture::Protocol::S2Solo) {
    if (target_corpus.empty()) {
      throw ValidationError("s2 mixtures need --target-corpus");
    }
    target = corpus::load_corpus(target_corpus);
  } else if (protocol == mixture::Protocol::CurriculumSPlusH) {
    if (synthetic_corpus.empty() || human_corpus.empty()) {
      throw ValidationError(
          "curriculum mixtures need --synthetic-corpus and --human-corpus");
    }
    synthetic = corpus::load_corpus(synthetic_corpus);
    human = corpus::load_corpus(human_corpus);
  } else {
    throw ValidationError("mix supports protocols s1-inject, s2-solo, "
                          "curriculum-s+h");
  }

  const auto specs =
      mixture::enumerate_grid(tasks, ns, repeats, root_seed, protocol);
  std::filesystem::create_directories(out_dir);
  for (const mixture::MixtureSpec& spec : specs) {
    mixture::MixtureManifest manifest;
    switch (protocol) {
      case mixture::Protocol::S1Inject:
        manifest = mixture::build_s1_mixture(base, target, spec);
        break;
      case mixture::Protocol::S2Solo:
        manifest = mixture::build_s2_set(target, spec);
        break;
      default:
        manifest = mixture::build_curriculum(synthetic, human, spec);
        break;
    }
    const auto name = "mixture_" + spec.target_task + "_n" +
                      std::to_string(spec.n_target) + "_r" +
                      std::to_string(spec.repeat_index) + ".json";
    manifest.save(std::filesystem::path(out_dir) / name);
  }
  std::cout << "wrote " << specs.size() << " manifests to " << out_dir << "\n";
  return 0;
}

int cmd_generate(const std::string& config_path) {
  auto config = harness::RunConfig::load(config_path);
  config.validate();
  auto bundle = harness::build_provider(config.provider);
  const auto registry = config.registry_path.empty()
                            ? corpus::TaskRegistry::builtin()
                            : corpus::TaskRegistry::load(config.registry_path);
  const auto loaded = corpus::load_corpus(config.corpus_path);
  const auto test = loaded.with_split(corpus::Split::Test);
  const auto gens = harness::generate(test, registry, *bundle.client, config);

  std::filesystem::create_directories(config.out_dir);
  harness::write_generations(gens, config.out_dir / "generations.jsonl");

  std::size_t errors = 0;
  for (const auto& gen : gens) {
    if (!gen.error.empty()) ++errors;
  }
  std::cout << "generated " << gens.size() << " responses (" << errors
            << " errors) -> " << (config.out_dir / "generations.jsonl").string()
            << "\n";
  if (!gens.empty() && errors == gens.size()) {
    throw TransportError("every generation failed; provider unreachable?");
  }
  return 0;
}

int cmd_score(const std::string& config_path,
              const std::string& generations_path) {
  auto config = harness::RunConfig::load(config_path);
  config.validate();
  auto bundle = harness::build_provider(config.provider);
  const auto registry = config.registry_path.empty()
                            ? corpus::TaskRegistry::builtin()
                            : corpus::TaskRegistry::load(config.registry_path);
  const auto loaded = corpus::load_corpus(config.corpus_path);
  const auto gens = harness::load_generations(
      generations_path.empty() ? config.out_dir / "generations.jsonl"
                               : std::filesystem::path(generations_path));

  std::optional<scorers::RmScoreTable> rm_table;
  if (config.rm_scores_path) {
    rm_table = scorers::RmScoreTable::load(*config.rm_scores_path);
  }
  scorers::ScorerDeps deps;
  deps.judge = bundle.client.get();
  deps.judge_model = config.judge_model;
  deps.embedder = bundle.client.get();
  deps.embed_model = config.embed_model;
  deps.rm_scores = rm_table ? &*rm_table : nullptr;

  std::vector<scorers::ScoreRecord> records;
  for (const std::string& scorer_id : config.scorer_ids) {
    const auto scorer = scorers::make_scorer(scorer_id, deps);
    auto batch = scorers::score_batch(gens, loaded, registry, *scorer,
                                      config.parallelism);
    records.insert(records.end(), batch.begin(), batch.end());
  }
  harness::write_scores(records, config.out_dir / "scores.jsonl");
  std::cout << "wrote " << records.size() << " score records -> "
            << (config.out_dir / "scores.jsonl").string() << "\n";
  return 0;
}

int cmd_metaeval(const std::string& scope, const std::string& scores_path,
                 const std::string& corpus_path, const std::string& humans_path,
                 const std::string& tfa_path, const std::string& out_dir) {
  const auto records = harness::load_scores(scores_path);
  std::filesystem::path reports_dir(out_dir);
  std::filesystem::create_directories(reports_dir);

  std::vector<std::string> scorer_ids;
  for (const auto& record : records) {
    if (std::find(scorer_ids.begin(), scorer_ids.end(), record.scorer_id) ==
        scorer_ids.end()) {
      scorer_ids.push_back(record.scorer_id);
    }
  }

  if (scope == "cit" || scope == "cat") {
    if (corpus_path.empty() || humans_path.empty()) {
      throw ValidationError("scope " + scope +
                            " needs --corpus and --humans");
    }
    const auto loaded = corpus::load_corpus(corpus_path);
    const auto humans = metaeval::mean_by_sample(
        metaeval::load_human_judgments(humans_path));
    std::vector<metaeval::CorrelationReport> reports;
    for (const std::string& scorer_id : scorer_ids) {
      std::vector<scorers::ScoreRecord> subset;
      for (const auto& record : records) {
        if (record.scorer_id == scorer_id) subset.push_back(record);
      }
      const auto scored = harness::to_scored_samples(subset, loaded);
      if (scope == "cit") {
        reports.push_back(metaeval::cit(scored, humans, scorer_id));
      } else {
        try {
          reports.push_back(metaeval::cat(scored, humans, scorer_id));
        } catch (const ContractError& e) {
          metaeval::CorrelationReport degenerate;
          degenerate.scope = "CAT";
          degenerate.scorer_id = scorer_id;
          degenerate.warnings.push_back(e.what());
          reports.push_back(std::move(degenerate));
        }
      }
    }
    harness::write_correlation_report_files(reports_dir, scope, reports);
  } else if (scope == "tfa") {
    if (tfa_path.empty()) throw ValidationError("scope tfa needs --tfa-scores");
    std::vector<metaeval::TfaReport> reports;
    for (const auto& [scorer_id, input] : harness::load_tfa_scores(tfa_path)) {
      reports.push_back(
          metaeval::tfa(input.zero_shot, input.format_trained, scorer_id));
    }
    harness::write_tfa_report_files(reports_dir, reports);
  } else if (scope == "matrix") {
    const auto table = harness::build_score_table(records, scorer_ids);
    harness::write_matrix_report_files(reports_dir,
                                       metaeval::scorer_matrix(table));
  } else if (scope == "categories") {
    if (corpus_path.empty()) {
      throw ValidationError("scope categories needs --corpus");
    }
    const auto loaded = corpus::load_corpus(corpus_path);
    std::map<std::string, std::string> categories;
    for (const corpus::TaskSample& sample : loaded.samples()) {
      categories[sample.sample_id] = sample.category;
    }
    const auto table = harness::build_score_table(records, scorer_ids);
    harness::write_category_report_files(
        reports_dir, metaeval::category_means(table, categories), scorer_ids);
  } else {
    throw ValidationError("unknown scope '" + scope + "'");
  }
  std::cout << "wrote " << scope << " report to " << out_dir << "\n";
  return 0;
}

int cmd_analyze(const std::string& config_path, int k) {
  auto config = harness::RunConfig::load(config_path);
  config.validate();
  auto bundle = harness::build_provider(config.provider);
  const auto loaded = corpus::load_corpus(config.corpus_path);
  const auto gens =
      harness::load_generations(config.out_dir / "generations.jsonl");
  const auto records = harness::load_scores(config.out_dir / "scores.jsonl");

  const std::string report = harness::error_analysis(
      records, gens, loaded, k, *bundle.client, config.judge_model);
  const auto out_path = config.out_dir / "error_analysis.md";
  std::ofstream out(out_path);
  out << report;
  std::cout << report << "\nwrote " << out_path.string() << "\n";
  return 0;
}

int cmd_run(const std::string& config_path) {
  const auto config = harness::RunConfig::load(config_path);
  const auto out_dir = harness::run_pipeline(config);
  std::cout << "run complete: " << out_dir.string() << "\n";
  for (const char* name :
       {"generations.jsonl", "scores.jsonl", "manifest.json"}) {
    std::cout << "  " << (out_dir / name).string() << "\n";
  }
  for (const char* name : {"cit", "cat", "tfa", "matrix", "categories"}) {
    std::cout << "  " << (out_dir / "reports" / (std::string(name) + ".json")).string()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation harness for instruction-tuned generative models"};
  app.require_subcommand(1);

  std::string corpus_path, registry_path, out_path;
  auto* ingest =
      app.add_subcommand("ingest", "Load and validate a JSONL corpus");
  ingest->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  ingest->add_option("--registry", registry_path,
                     "Task registry JSON (builtin if omitted)");
  ingest->add_option("--out", out_path, "Write the normalized corpus here");

  std::string protocol = "s1-inject";
  std::vector<std::string> mix_tasks;
  std::vector<int> mix_ns;
  int repeats = 1;
  std::uint64_t root_seed = 0;
  std::string mix_out_dir = "mixtures";
  std::string base_corpus, target_corpus, synthetic_corpus, human_corpus;
  auto* mix = app.add_subcommand(
      "mix", "Build deterministic experiment-grid mixture manifests");
  mix->add_option("--protocol", protocol, "s1-inject | s2-solo | curriculum-s+h");
  mix->add_option("--task", mix_tasks, "Target task id(s)")->required();
  mix->add_option("--n", mix_ns, "Injected sample count(s)")->required();
  mix->add_option("--repeats", repeats, "Sampling repeats per cell");
  mix->add_option("--root-seed", root_seed, "Root seed for per-cell seeds");
  mix->add_option("--out-dir", mix_out_dir, "Manifest output directory");
  mix->add_option("--base-corpus", base_corpus, "Base instruction corpus (s1)");
  mix->add_option("--target-corpus", target_corpus, "Target task corpus");
  mix->add_option("--synthetic-corpus", synthetic_corpus,
                  "Synthetic corpus (curriculum)");
  mix->add_option("--human-corpus", human_corpus, "Human corpus (curriculum)");

  std::string config_path;
  auto* generate = app.add_subcommand(
      "generate", "Run the evaluated model over the test split");
  generate->add_option("--config", config_path, "Run config JSON")->required();

  std::string generations_path;
  auto* score =
      app.add_subcommand("score", "Score generations with configured scorers");
  score->add_option("--config", config_path, "Run config JSON")->required();
  score->add_option("--generations", generations_path,
                    "Generations JSONL (defaults to out_dir/generations.jsonl)");

  std::string scope, scores_path, humans_path, tfa_path;
  std::string metaeval_corpus, metaeval_out = "reports";
  auto* metaeval_cmd =
      app.add_subcommand("metaeval", "Compute CIT/CAT/TFA/matrix/categories");
  metaeval_cmd->add_option("--scope", scope, "cit|cat|tfa|matrix|categories")
      ->required();
  metaeval_cmd->add_option("--scores", scores_path, "Scores JSONL")->required();
  metaeval_cmd->add_option("--corpus", metaeval_corpus,
                           "Corpus JSONL (task/category join)");
  metaeval_cmd->add_option("--humans", humans_path, "Human judgments JSONL");
  metaeval_cmd->add_option("--tfa-scores", tfa_path,
                           "Grouped zero-shot/format-trained scores JSONL");
  metaeval_cmd->add_option("--out-dir", metaeval_out, "Report directory");

  int k = 3;
  auto* analyze = app.add_subcommand(
      "analyze", "Automatic error analysis of the lowest-scoring samples");
  analyze->add_option("--config", config_path, "Run config JSON")->required();
  analyze->add_option("--k", k, "Failures per task to review");

  auto* run = app.add_subcommand("run", "Full pipeline end to end");
  run->add_option("--config", config_path, "Run config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*ingest) return cmd_ingest(corpus_path, registry_path, out_path);
    if (*mix) {
      return cmd_mix(protocol, mix_tasks, mix_ns, repeats, root_seed,
                     mix_out_dir, base_corpus, target_corpus, synthetic_corpus,
                     human_corpus);
    }
    if (*generate) return cmd_generate(config_path);
    if (*score) return cmd_score(config_path, generations_path);
    if (*metaeval_cmd) {
      return cmd_metaeval(scope, scores_path, metaeval_corpus, humans_path,
                          tfa_path, metaeval_out);
    }
    if (*analyze) return cmd_analyze(config_path, k);
    if (*run) return cmd_run(config_path);
  } catch (const ifteval::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
