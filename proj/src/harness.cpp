#include "ifteval/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ifteval/clock.hpp"
#include "ifteval/errors.hpp"
#include "ifteval/hashing.hpp"
#include "ifteval/text.hpp"

namespace ifteval::harness {

nlohmann::json generation_to_json(const Generation& gen) {
  nlohmann::json doc{{"sample_id", gen.sample_id},
                     {"model_id", gen.model_id},
                     {"output", gen.output_text},
                     {"temperature", gen.decoding.temperature},
                     {"provider_ref", gen.provider_ref},
                     {"timestamp", gen.timestamp}};
  if (gen.decoding.max_tokens) doc["max_tokens"] = *gen.decoding.max_tokens;
  if (!gen.error.empty()) doc["error"] = gen.error;
  return doc;
}

Generation generation_from_json(const nlohmann::json& doc) {
  Generation gen;
  try {
    gen.sample_id = doc.at("sample_id").get<std::string>();
    gen.model_id = doc.at("model_id").get<std::string>();
    gen.output_text = doc.value("output", "");
    gen.decoding.temperature = doc.value("temperature", 0.0);
    if (doc.contains("max_tokens")) {
      gen.decoding.max_tokens = doc["max_tokens"].get<int>();
    }
    gen.provider_ref = doc.value("provider_ref", "");
    gen.timestamp = doc.value("timestamp", "");
    gen.error = doc.value("error", "");
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed generation record: ") +
                        e.what());
  }
  return gen;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

namespace {

std::filesystem::path resolve_relative(const std::filesystem::path& base,
                                       const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_absolute()) return p;
  return base / p;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config parse error in " + path.string() + ": " +
                          e.what());
  }

  const std::filesystem::path base = path.parent_path();
  RunConfig config;
  try {
    config.corpus_path =
        resolve_relative(base, doc.at("corpus").get<std::string>());
    if (doc.contains("registry")) {
      config.registry_path =
          resolve_relative(base, doc["registry"].get<std::string>());
    }
    config.scorer_ids = doc.at("scorers").get<std::vector<std::string>>();
    config.generation_model =
        doc.value("generation_model", config.generation_model);
    config.judge_model = doc.value("judge_model", config.judge_model);
    config.embed_model = doc.value("embed_model", config.embed_model);
    config.parallelism = doc.value("parallelism", 1);
    config.out_dir = resolve_relative(base, doc.at("out_dir").get<std::string>());
    config.root_seed = doc.value("root_seed", std::uint64_t{0});
    config.offline = doc.value("offline", false);
    if (doc.contains("human_scores")) {
      config.human_scores_path =
          resolve_relative(base, doc["human_scores"].get<std::string>());
    }
    if (doc.contains("tfa_scores")) {
      config.tfa_scores_path =
          resolve_relative(base, doc["tfa_scores"].get<std::string>());
    }
    if (doc.contains("rm_scores")) {
      config.rm_scores_path =
          resolve_relative(base, doc["rm_scores"].get<std::string>());
    }
    if (doc.contains("generation")) {
      const auto& gen = doc["generation"];
      config.generation_temperature = gen.value("temperature", 0.0);
      if (gen.contains("max_tokens")) {
        config.max_tokens = gen["max_tokens"].get<int>();
      }
    }
    if (doc.contains("provider")) {
      const auto& provider = doc["provider"];
      config.provider.kind = provider.value("kind", "stub");
      config.provider.base_url = provider.value("base_url", "");
      if (provider.contains("cache_dir")) {
        config.provider.cache_dir =
            resolve_relative(base, provider["cache_dir"].get<std::string>())
                .string();
      }
      if (provider.contains("stub_rules")) {
        config.provider.stub_rules =
            resolve_relative(base, provider["stub_rules"].get<std::string>())
                .string();
      }
      config.provider.max_retries = provider.value("max_retries", 2);
      config.provider.initial_delay_ms =
          provider.value("initial_delay_ms", 200);
      config.provider.backoff_factor = provider.value("backoff_factor", 2.0);
      config.provider.max_in_flight = provider.value("max_in_flight", 8);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config field error in " + path.string() + ": " +
                          e.what());
  }
  return config;
}

void RunConfig::validate() const {
  if (!std::filesystem::exists(corpus_path)) {
    throw ValidationError("corpus file does not exist: " +
                          corpus_path.string());
  }
  if (!registry_path.empty() && !std::filesystem::exists(registry_path)) {
    throw ValidationError("registry file does not exist: " +
                          registry_path.string());
  }
  if (scorer_ids.empty()) {
    throw ValidationError("config lists no scorers");
  }
  for (const std::string& id : scorer_ids) {
    if (!scorers::is_known_scorer(id)) {
      throw ValidationError("unknown scorer '" + id + "'");
    }
  }
  if (std::find(scorer_ids.begin(), scorer_ids.end(), "soft_rm") !=
          scorer_ids.end() &&
      !rm_scores_path) {
    throw ValidationError("scorer soft_rm requires rm_scores in the config");
  }
  if (parallelism < 1) throw ValidationError("parallelism must be >= 1");
  if (out_dir.empty()) throw ValidationError("out_dir must be set");
  if (provider.kind != "stub" && provider.kind != "http") {
    throw ValidationError("provider kind must be stub or http");
  }
  if (offline && provider.kind != "stub") {
    throw ValidationError("offline mode requires the stub provider");
  }
  auto check_optional = [](const std::optional<std::filesystem::path>& p,
                           const char* what) {
    if (p && !std::filesystem::exists(*p)) {
      throw ValidationError(std::string(what) + " file does not exist: " +
                            p->string());
    }
  };
  check_optional(human_scores_path, "human_scores");
  check_optional(tfa_scores_path, "tfa_scores");
  check_optional(rm_scores_path, "rm_scores");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json doc{{"corpus", corpus_path.string()},
                     {"scorers", scorer_ids},
                     {"generation_model", generation_model},
                     {"judge_model", judge_model},
                     {"embed_model", embed_model},
                     {"parallelism", parallelism},
                     {"out_dir", out_dir.string()},
                     {"root_seed", root_seed},
                     {"offline", offline},
                     {"generation",
                      {{"temperature", generation_temperature}}},
                     {"provider",
                      {{"kind", provider.kind},
                       {"base_url", provider.base_url},
                       {"cache_dir", provider.cache_dir},
                       {"stub_rules", provider.stub_rules},
                       {"max_retries", provider.max_retries},
                       {"initial_delay_ms", provider.initial_delay_ms},
                       {"backoff_factor", provider.backoff_factor},
                       {"max_in_flight", provider.max_in_flight}}}};
  if (!registry_path.empty()) doc["registry"] = registry_path.string();
  if (max_tokens) doc["generation"]["max_tokens"] = *max_tokens;
  if (human_scores_path) doc["human_scores"] = human_scores_path->string();
  if (tfa_scores_path) doc["tfa_scores"] = tfa_scores_path->string();
  if (rm_scores_path) doc["rm_scores"] = rm_scores_path->string();
  return doc;
}

std::string RunConfig::config_hash() const {
  return hashing::sha256_hex(to_json().dump());
}

ProviderBundle build_provider(const ProviderConfig& config) {
  ProviderBundle bundle;
  if (config.kind == "stub") {
    auto stub = std::make_shared<providers::StubBackend>();
    if (!config.stub_rules.empty()) stub->load_rules(config.stub_rules);
    bundle.stub = stub.get();
    bundle.backend = std::move(stub);
  } else if (config.kind == "http") {
    providers::RetryPolicy policy;
    policy.max_retries = config.max_retries;
    policy.initial_delay = std::chrono::milliseconds(config.initial_delay_ms);
    policy.backoff_factor = config.backoff_factor;
    bundle.backend =
        std::make_shared<providers::HttpBackend>(config.base_url, policy);
  } else {
    throw ValidationError("provider kind must be stub or http");
  }
  if (config.cache_dir.empty()) {
    bundle.cache = std::make_shared<providers::MemoryCacheStore>();
  } else {
    bundle.cache = std::make_shared<providers::DiskCacheStore>(
        std::filesystem::path(config.cache_dir));
  }
  bundle.client = std::make_unique<providers::Client>(
      bundle.backend, bundle.cache, config.max_in_flight);
  return bundle;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

std::vector<Generation> generate(const corpus::Corpus& test_corpus,
                                 const corpus::TaskRegistry& registry,
                                 providers::Client& client,
                                 const RunConfig& config) {
  std::vector<const corpus::TaskSample*> samples;
  for (const corpus::TaskSample& sample : test_corpus.samples()) {
    samples.push_back(&sample);
  }
  std::sort(samples.begin(), samples.end(),
            [](const corpus::TaskSample* a, const corpus::TaskSample* b) {
              return a->sample_id < b->sample_id;
            });

  std::vector<Generation> gens(samples.size());
  auto generate_one = [&](std::size_t i) {
    const corpus::TaskSample& sample = *samples[i];
    Generation gen;
    gen.sample_id = sample.sample_id;
    gen.model_id = config.generation_model;
    gen.decoding.temperature = config.generation_temperature;
    gen.decoding.max_tokens = config.max_tokens;
    gen.provider_ref = config.provider.kind;
    gen.timestamp = now_iso8601();
    try {
      providers::ChatRequest request;
      request.model_id = config.generation_model;
      request.messages.push_back(
          {"user",
           corpus::render_prompt(sample, registry.get(sample.task_id))});
      request.temperature = config.generation_temperature;
      request.max_tokens = config.max_tokens;
      gen.output_text = client.chat_complete(request);
    } catch (const std::exception& e) {
      gen.error = e.what();
    }
    gens[i] = std::move(gen);
  };

  const auto count = static_cast<std::int64_t>(samples.size());
#ifdef _OPENMP
  if (config.parallelism > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(config.parallelism)
    for (std::int64_t i = 0; i < count; ++i) {
      generate_one(static_cast<std::size_t>(i));
    }
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      generate_one(static_cast<std::size_t>(i));
    }
  }
#else
  for (std::int64_t i = 0; i < count; ++i) {
    generate_one(static_cast<std::size_t>(i));
  }
#endif
  return gens;
}

// ---------------------------------------------------------------------------
// JSONL artifacts
// ---------------------------------------------------------------------------

namespace {

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ContractError("cannot write " + path.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

template <typename Record, typename ToJson>
std::string to_jsonl(std::span<const Record> records, ToJson to_json) {
  std::string out;
  for (const Record& record : records) {
    out += to_json(record).dump();
    out += '\n';
  }
  return out;
}

template <typename Record, typename FromJson>
std::vector<Record> load_jsonl(const std::filesystem::path& path,
                               FromJson from_json, const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw ContractError(std::string("cannot open ") + what + " file " +
                        path.string());
  }
  std::vector<Record> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ContractError(std::string(what) + " parse error at line " +
                          std::to_string(line_number) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace

void write_generations(std::span<const Generation> gens,
                       const std::filesystem::path& path) {
  write_text_atomic(path, to_jsonl(gens, generation_to_json));
}

std::vector<Generation> load_generations(const std::filesystem::path& path) {
  return load_jsonl<Generation>(path, generation_from_json, "generations");
}

void write_scores(std::span<const scorers::ScoreRecord> records,
                  const std::filesystem::path& path) {
  write_text_atomic(path, to_jsonl(records, scorers::score_record_to_json));
}

std::vector<scorers::ScoreRecord> load_scores(
    const std::filesystem::path& path) {
  return load_jsonl<scorers::ScoreRecord>(path, scorers::score_record_from_json,
                                          "scores");
}

std::vector<metaeval::ScoredSample> to_scored_samples(
    std::span<const scorers::ScoreRecord> records,
    const corpus::Corpus& corpus) {
  std::vector<metaeval::ScoredSample> out;
  for (const scorers::ScoreRecord& record : records) {
    if (!record.value) continue;
    const corpus::TaskSample* sample = corpus.find(record.sample_id);
    if (sample == nullptr) {
      throw ContractError("score record references unknown sample '" +
                          record.sample_id + "'");
    }
    out.push_back({record.sample_id, sample->task_id, *record.value});
  }
  return out;
}

metaeval::ScoreTable build_score_table(
    std::span<const scorers::ScoreRecord> records,
    std::span<const std::string> scorer_ids) {
  metaeval::ScoreTable table;
  table.scorer_ids.assign(scorer_ids.begin(), scorer_ids.end());

  std::set<std::string> sample_set;
  for (const auto& record : records) {
    if (record.value) sample_set.insert(record.sample_id);
  }
  table.sample_ids.assign(sample_set.begin(), sample_set.end());
  table.values.assign(
      table.sample_ids.size(),
      std::vector<std::optional<double>>(table.scorer_ids.size()));

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < table.sample_ids.size(); ++i) {
    row_of[table.sample_ids[i]] = i;
  }
  for (const auto& record : records) {
    if (!record.value) continue;
    const auto col = table.column_of(record.scorer_id);
    if (!col) continue;
    table.values[row_of[record.sample_id]][*col] = *record.value;
  }
  return table;
}

std::map<std::string, TfaInput> load_tfa_scores(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open tfa scores file " + path.string());
  std::map<std::string, TfaInput> inputs;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      metaeval::ScoredSample scored{doc.at("sample_id").get<std::string>(),
                                    doc.at("task_id").get<std::string>(),
                                    doc.at("value").get<double>()};
      const auto group = doc.at("group").get<std::string>();
      auto& input = inputs[doc.at("scorer_id").get<std::string>()];
      if (group == "zero_shot") {
        input.zero_shot.push_back(std::move(scored));
      } else if (group == "format_trained") {
        input.format_trained.push_back(std::move(scored));
      } else {
        throw ContractError("tfa scores line " + std::to_string(line_number) +
                            ": group must be zero_shot or format_trained");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("tfa scores error at line " +
                          std::to_string(line_number) + ": " + e.what());
    }
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

void write_skipped_report(const std::filesystem::path& reports_dir,
                          const std::string& name, const std::string& reason) {
  nlohmann::json doc{{"status", "skipped"}, {"reason", reason}};
  write_text_atomic(reports_dir / (name + ".json"), doc.dump(2) + "\n");
  write_text_atomic(reports_dir / (name + ".csv"),
                    "status,reason\nskipped," + reason + "\n");
}

}  // namespace

void write_correlation_report_files(
    const std::filesystem::path& reports_dir, const std::string& name,
    const std::vector<metaeval::CorrelationReport>& reports) {
  nlohmann::json json_out = nlohmann::json::array();
  std::string csv = name == "cit" ? "scorer_id,task_id,n,rho\n"
                                  : "scorer_id,n,rho\n";
  for (const auto& report : reports) {
    nlohmann::json entry{{"scope", report.scope},
                         {"scorer_id", report.scorer_id},
                         {"warnings", report.warnings}};
    if (name == "cit") {
      nlohmann::json cells = nlohmann::json::object();
      for (const auto& [task_id, cell] : report.per_task) {
        cells[task_id] = {{"rho", cell.rho}, {"n", cell.n}};
        csv += report.scorer_id + "," + task_id + "," +
               std::to_string(cell.n) + "," + fmt_double(cell.rho) + "\n";
      }
      entry["per_task"] = cells;
      if (report.mean_rho) {
        entry["mean_rho"] = *report.mean_rho;
        csv += report.scorer_id + ",__mean__," +
               std::to_string(report.per_task.size()) + "," +
               fmt_double(*report.mean_rho) + "\n";
      }
    } else {
      if (report.pooled_rho) {
        entry["pooled_rho"] = *report.pooled_rho;
        entry["n"] = report.pooled_n;
        csv += report.scorer_id + "," + std::to_string(report.pooled_n) +
               "," + fmt_double(*report.pooled_rho) + "\n";
      }
    }
    json_out.push_back(std::move(entry));
  }
  write_text_atomic(reports_dir / (name + ".json"), json_out.dump(2) + "\n");
  write_text_atomic(reports_dir / (name + ".csv"), csv);
}

void write_tfa_report_files(const std::filesystem::path& reports_dir,
                            const std::vector<metaeval::TfaReport>& reports) {
  nlohmann::json json_out = nlohmann::json::array();
  std::string csv = "scorer_id,task_id,pct\n";
  for (const auto& report : reports) {
    nlohmann::json entry{{"scorer_id", report.scorer_id},
                         {"per_task_pct", report.per_task_pct},
                         {"mean_pct", report.mean_pct},
                         {"warnings", report.warnings}};
    for (const auto& [task_id, pct] : report.per_task_pct) {
      csv += report.scorer_id + "," + task_id + "," + fmt_double(pct) + "\n";
    }
    csv += report.scorer_id + ",__mean__," + fmt_double(report.mean_pct) +
           "\n";
    json_out.push_back(std::move(entry));
  }
  write_text_atomic(reports_dir / "tfa.json", json_out.dump(2) + "\n");
  write_text_atomic(reports_dir / "tfa.csv", csv);
}

void write_matrix_report_files(const std::filesystem::path& reports_dir,
                               const metaeval::MatrixReport& report) {
  nlohmann::json rho = nlohmann::json::array();
  for (const auto& row : report.rho) {
    nlohmann::json json_row = nlohmann::json::array();
    for (const auto& cell : row) {
      if (cell) {
        json_row.push_back(*cell);
      } else {
        json_row.push_back(nullptr);
      }
    }
    rho.push_back(std::move(json_row));
  }
  nlohmann::json doc{{"scorer_ids", report.scorer_ids},
                     {"rho", rho},
                     {"n", report.n},
                     {"warnings", report.warnings}};
  write_text_atomic(reports_dir / "matrix.json", doc.dump(2) + "\n");

  std::string csv = "scorer_id";
  for (const auto& id : report.scorer_ids) csv += "," + id;
  csv += "\n";
  for (std::size_t i = 0; i < report.scorer_ids.size(); ++i) {
    csv += report.scorer_ids[i];
    for (std::size_t j = 0; j < report.scorer_ids.size(); ++j) {
      csv += ",";
      if (report.rho[i][j]) csv += fmt_double(*report.rho[i][j]);
    }
    csv += "\n";
  }
  write_text_atomic(reports_dir / "matrix.csv", csv);
}

void write_category_report_files(
    const std::filesystem::path& reports_dir,
    const std::map<std::string, std::map<std::string, double>>& means,
    std::span<const std::string> scorer_ids) {
  nlohmann::json doc(means);
  write_text_atomic(reports_dir / "categories.json", doc.dump(2) + "\n");

  std::string csv = "category";
  for (const auto& id : scorer_ids) csv += "," + id;
  csv += "\n";
  for (const auto& [category, per_scorer] : means) {
    csv += category;
    for (const auto& id : scorer_ids) {
      csv += ",";
      auto it = per_scorer.find(id);
      if (it != per_scorer.end()) csv += fmt_double(it->second);
    }
    csv += "\n";
  }
  write_text_atomic(reports_dir / "categories.csv", csv);
}

namespace {

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError("stage " + name + ": " + e.what());
  } catch (const TransportError& e) {
    throw TransportError("stage " + name + ": " + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError("stage " + name + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError("stage " + name + ": " + e.what());
  }
}

// Restores the ambient clock when an offline run finishes or throws.
struct ClockGuard {
  explicit ClockGuard(bool fixed) {
    if (fixed) set_fixed_time("1970-01-01T00:00:00Z");
  }
  ~ClockGuard() { set_fixed_time(std::nullopt); }
};

}  // namespace

std::filesystem::path run_pipeline(const RunConfig& config) {
  run_stage("validate", [&] { config.validate(); });
  ClockGuard clock(config.offline);

  const auto registry = run_stage("ingest", [&] {
    return config.registry_path.empty()
               ? corpus::TaskRegistry::builtin()
               : corpus::TaskRegistry::load(config.registry_path);
  });
  const auto full_corpus =
      run_stage("ingest", [&] { return corpus::load_corpus(config.corpus_path); });
  const auto test_corpus = full_corpus.with_split(corpus::Split::Test);
  if (test_corpus.empty()) {
    throw ContractError("stage ingest: corpus has no test-split samples");
  }

  auto bundle = run_stage("providers", [&] {
    return build_provider(config.provider);
  });

  std::filesystem::create_directories(config.out_dir);
  const auto gens = run_stage("generate", [&] {
    auto out = generate(test_corpus, registry, *bundle.client, config);
    write_generations(out, config.out_dir / "generations.jsonl");
    return out;
  });
  const std::size_t generation_errors =
      static_cast<std::size_t>(std::count_if(
          gens.begin(), gens.end(),
          [](const Generation& g) { return !g.error.empty(); }));
  if (!gens.empty() && generation_errors == gens.size()) {
    throw TransportError(
        "stage generate: every generation failed; provider unreachable?");
  }

  std::optional<scorers::RmScoreTable> rm_table;
  if (config.rm_scores_path) {
    rm_table = run_stage("score", [&] {
      return scorers::RmScoreTable::load(*config.rm_scores_path);
    });
  }
  scorers::ScorerDeps deps;
  deps.judge = bundle.client.get();
  deps.judge_model = config.judge_model;
  deps.embedder = bundle.client.get();
  deps.embed_model = config.embed_model;
  deps.rm_scores = rm_table ? &*rm_table : nullptr;

  const auto all_records = run_stage("score", [&] {
    std::vector<scorers::ScoreRecord> records;
    for (const std::string& scorer_id : config.scorer_ids) {
      const auto scorer = scorers::make_scorer(scorer_id, deps);
      auto batch = scorers::score_batch(gens, full_corpus, registry, *scorer,
                                        config.parallelism);
      records.insert(records.end(), std::make_move_iterator(batch.begin()),
                     std::make_move_iterator(batch.end()));
    }
    write_scores(records, config.out_dir / "scores.jsonl");
    return records;
  });

  const auto reports_dir = config.out_dir / "reports";
  run_stage("metaeval", [&] {
    std::filesystem::create_directories(reports_dir);
    const auto table = build_score_table(all_records, config.scorer_ids);

    // CIT / CAT need human judgments.
    if (config.human_scores_path) {
      const auto humans = metaeval::mean_by_sample(
          metaeval::load_human_judgments(*config.human_scores_path));
      std::vector<metaeval::CorrelationReport> cit_reports, cat_reports;
      for (const std::string& scorer_id : config.scorer_ids) {
        std::vector<scorers::ScoreRecord> subset;
        for (const auto& record : all_records) {
          if (record.scorer_id == scorer_id) subset.push_back(record);
        }
        const auto scored = to_scored_samples(subset, full_corpus);
        cit_reports.push_back(metaeval::cit(scored, humans, scorer_id));
        // A scorer whose valid samples all fall on one task (or pool into a
        // constant) cannot be pooled; keep the report row with a warning.
        try {
          cat_reports.push_back(metaeval::cat(scored, humans, scorer_id));
        } catch (const ContractError& e) {
          metaeval::CorrelationReport degenerate;
          degenerate.scope = "CAT";
          degenerate.scorer_id = scorer_id;
          degenerate.warnings.push_back(e.what());
          cat_reports.push_back(std::move(degenerate));
        }
      }
      write_correlation_report_files(reports_dir, "cit", cit_reports);
      write_correlation_report_files(reports_dir, "cat", cat_reports);
    } else {
      write_skipped_report(reports_dir, "cit", "no human_scores configured");
      write_skipped_report(reports_dir, "cat", "no human_scores configured");
    }

    if (config.tfa_scores_path) {
      std::vector<metaeval::TfaReport> tfa_reports;
      for (const auto& [scorer_id, input] :
           load_tfa_scores(*config.tfa_scores_path)) {
        tfa_reports.push_back(
            metaeval::tfa(input.zero_shot, input.format_trained, scorer_id));
      }
      write_tfa_report_files(reports_dir, tfa_reports);
    } else {
      write_skipped_report(reports_dir, "tfa", "no tfa_scores configured");
    }

    if (table.scorer_ids.size() >= 2 && table.sample_ids.size() >= 2) {
      write_matrix_report_files(reports_dir,
                           metaeval::scorer_matrix(table, config.parallelism));
    } else {
      write_skipped_report(reports_dir, "matrix",
                           "needs at least 2 scorers and 2 samples");
    }

    std::map<std::string, std::string> categories;
    for (const corpus::TaskSample& sample : full_corpus.samples()) {
      categories[sample.sample_id] = sample.category;
    }
    write_category_report_files(reports_dir,
                           metaeval::category_means(table, categories),
                           config.scorer_ids);
    return 0;
  });

  run_stage("report", [&] {
    const auto stats = bundle.client->cache_stats();
    std::size_t score_errors = 0, judge_excluded = 0;
    for (const auto& record : all_records) {
      if (!record.error.empty()) {
        ++score_errors;
        if (record.error == "judge_non_conforming") ++judge_excluded;
      }
    }
    nlohmann::json manifest{
        {"config_hash", config.config_hash()},
        {"cache", {{"hits", stats.hits},
                   {"misses", stats.misses},
                   {"entries", stats.entries}}},
        {"backend_calls", bundle.client->backend_calls()},
        {"network_calls", bundle.client->network_calls()},
        {"counts",
         {{"corpus_samples", full_corpus.size()},
          {"test_samples", test_corpus.size()},
          {"generations", gens.size()},
          {"generation_errors", generation_errors},
          {"score_records", all_records.size()},
          {"score_errors", score_errors},
          {"judge_excluded", judge_excluded}}},
        {"scorers", config.scorer_ids},
        {"offline", config.offline}};
    write_text_atomic(config.out_dir / "manifest.json",
                      manifest.dump(2) + "\n");
    return 0;
  });

  return config.out_dir;
}

// ---------------------------------------------------------------------------
// Automatic error analysis
// ---------------------------------------------------------------------------

std::string assemble_error_analysis_prompt(
    const std::string& task_label,
    std::span<const std::pair<const corpus::TaskSample*, const Generation*>>
        failures) {
  std::string prompt =
      "The following is a series of predictions a " + task_label +
      " ML model got wrong. Can you spot any patterns in the types of "
      "mistakes the model made and explain in what areas the model needs to "
      "improve?\n\n";
  for (const auto& [sample, gen] : failures) {
    prompt += "Sentence:\n" + sample->input_text + "\n";
    prompt += "Model prediction: " + gen->output_text + "\n";
    prompt += "Ground truth: " + sample->reference_text() + "\n\n";
  }
  return prompt;
}

std::string error_analysis(std::span<const scorers::ScoreRecord> records,
                           std::span<const Generation> gens,
                           const corpus::Corpus& corpus, int k,
                           providers::Client& judge,
                           const std::string& judge_model) {
  if (k < 1) throw ContractError("error_analysis requires k >= 1");

  std::map<std::string, const Generation*> gen_of;
  for (const Generation& gen : gens) gen_of[gen.sample_id] = &gen;

  struct Failure {
    double value;
    const scorers::ScoreRecord* record;
  };
  std::map<std::string, std::vector<Failure>> by_task;
  std::size_t scored = 0;
  for (const scorers::ScoreRecord& record : records) {
    if (!record.value) continue;
    const corpus::TaskSample* sample = corpus.find(record.sample_id);
    if (sample == nullptr || gen_of.find(record.sample_id) == gen_of.end()) {
      continue;
    }
    ++scored;
    by_task[sample->task_id].push_back({*record.value, &record});
  }
  if (scored < static_cast<std::size_t>(k)) {
    throw ContractError("error_analysis needs at least k scored samples");
  }

  std::string report;
  for (auto& [task_id, failures] : by_task) {
    std::sort(failures.begin(), failures.end(),
              [](const Failure& a, const Failure& b) {
                if (a.value != b.value) return a.value < b.value;
                return a.record->sample_id < b.record->sample_id;
              });
    if (failures.size() > static_cast<std::size_t>(k)) {
      failures.resize(static_cast<std::size_t>(k));
    }
    std::vector<std::pair<const corpus::TaskSample*, const Generation*>>
        selected;
    for (const Failure& failure : failures) {
      selected.emplace_back(corpus.find(failure.record->sample_id),
                            gen_of.at(failure.record->sample_id));
    }
    providers::ChatRequest request;
    request.model_id = judge_model;
    request.messages.push_back(
        {"user", assemble_error_analysis_prompt(task_id, selected)});
    request.temperature = 0.0;
    const std::string prose = judge.chat_complete(request);
    if (!report.empty()) report += "\n";
    report += "# Error analysis: " + task_id + "\n\n" + prose + "\n";
  }
  return report;
}

}  // namespace ifteval::harness
