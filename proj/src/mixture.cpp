#include "ifteval/mixture.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "ifteval/clock.hpp"
#include "ifteval/errors.hpp"
#include "ifteval/hashing.hpp"
#include "ifteval/random.hpp"

namespace ifteval::mixture {

std::string_view protocol_name(Protocol protocol) {
  switch (protocol) {
    case Protocol::S1Inject: return "s1-inject";
    case Protocol::S2Solo: return "s2-solo";
    case Protocol::CurriculumSPlusH: return "curriculum-s+h";
    case Protocol::SyntheticS: return "synthetic-s";
    case Protocol::RandomLabelR: return "random-label-r";
  }
  throw ContractError("unknown protocol");
}

Protocol protocol_from_name(std::string_view name) {
  if (name == "s1-inject" || name == "s1") return Protocol::S1Inject;
  if (name == "s2-solo" || name == "s2") return Protocol::S2Solo;
  if (name == "curriculum-s+h" || name == "curriculum") {
    return Protocol::CurriculumSPlusH;
  }
  if (name == "synthetic-s") return Protocol::SyntheticS;
  if (name == "random-label-r") return Protocol::RandomLabelR;
  throw ContractError("unknown protocol '" + std::string(name) + "'");
}

std::uint64_t manifest_content_hash(std::span<const std::string> ordered_ids) {
  return hashing::hash_id_list(ordered_ids);
}

nlohmann::json default_hyperparameters(std::size_t train_set_size) {
  // Batch drops to 8 when the dataset is smaller than the full batch.
  const int batch_size = train_set_size < 128 ? 8 : 128;
  return nlohmann::json{{"train_steps", 400},
                        {"batch_size", batch_size},
                        {"learning_rate", 5e-4},
                        {"lr_schedule", "linear-decay"},
                        {"warmup_steps", 100},
                        {"max_epochs", 1}};
}

nlohmann::json MixtureManifest::to_json() const {
  nlohmann::json phase_array = nlohmann::json::array();
  for (const Phase& phase : phases) {
    phase_array.push_back(
        {{"name", phase.name}, {"sample_ids", phase.sample_ids}});
  }
  return nlohmann::json{
      {"protocol", std::string(protocol_name(spec.protocol))},
      {"base_corpus_ref", spec.base_corpus_ref},
      {"target_task", spec.target_task},
      {"n_target", spec.n_target},
      {"seed", spec.seed},
      {"repeat_index", spec.repeat_index},
      {"ordered_sample_ids", ordered_sample_ids},
      {"phases", phase_array},
      {"content_hash", hashing::to_hex(content_hash)},
      {"hyperparameters", hyperparameters},
      {"created_at", created_at}};
}

MixtureManifest MixtureManifest::from_json(const nlohmann::json& doc) {
  MixtureManifest manifest;
  try {
    manifest.spec.protocol =
        protocol_from_name(doc.at("protocol").get<std::string>());
    manifest.spec.base_corpus_ref = doc.value("base_corpus_ref", "");
    manifest.spec.target_task = doc.at("target_task").get<std::string>();
    manifest.spec.n_target = doc.at("n_target").get<int>();
    manifest.spec.seed = doc.at("seed").get<std::uint64_t>();
    manifest.spec.repeat_index = doc.value("repeat_index", 0);
    manifest.ordered_sample_ids =
        doc.at("ordered_sample_ids").get<std::vector<std::string>>();
    for (const auto& phase : doc.at("phases")) {
      manifest.phases.push_back(
          {phase.at("name").get<std::string>(),
           phase.at("sample_ids").get<std::vector<std::string>>()});
    }
    manifest.content_hash =
        std::stoull(doc.at("content_hash").get<std::string>(), nullptr, 16);
    manifest.hyperparameters = doc.value("hyperparameters",
                                         nlohmann::json::object());
    manifest.created_at = doc.value("created_at", "");
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed mixture manifest: ") +
                        e.what());
  }
  const std::uint64_t recomputed =
      manifest_content_hash(manifest.ordered_sample_ids);
  if (recomputed != manifest.content_hash) {
    throw ContractError("manifest content_hash does not match its id list");
  }
  return manifest;
}

void MixtureManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write manifest " + path.string());
  out << to_json().dump(2) << '\n';
}

MixtureManifest MixtureManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("manifest parse error in " + path.string() + ": " +
                        e.what());
  }
  return from_json(doc);
}

namespace {

// Target-task train-split ids in sample_id order, so draws depend only on
// corpus content and the seed.
std::vector<std::string> target_train_ids(const corpus::Corpus& corpus,
                                          const std::string& task_id) {
  std::vector<std::string> ids;
  for (const corpus::TaskSample& s : corpus.samples()) {
    if (s.split == corpus::Split::Train && s.task_id == task_id) {
      ids.push_back(s.sample_id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> base_train_ids(const corpus::Corpus& corpus) {
  std::vector<std::string> ids;
  for (const corpus::TaskSample& s : corpus.samples()) {
    if (s.split == corpus::Split::Train) ids.push_back(s.sample_id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void require_capacity(std::size_t available, std::size_t wanted,
                      const std::string& what) {
  if (available < wanted) {
    throw CapacityError("insufficient " + what + ": need " +
                        std::to_string(wanted) + ", have " +
                        std::to_string(available));
  }
}

MixtureManifest finalize(MixtureSpec spec, std::vector<Phase> phases,
                         nlohmann::json hyperparameters) {
  MixtureManifest manifest;
  manifest.spec = std::move(spec);
  manifest.phases = std::move(phases);
  for (const Phase& phase : manifest.phases) {
    manifest.ordered_sample_ids.insert(manifest.ordered_sample_ids.end(),
                                       phase.sample_ids.begin(),
                                       phase.sample_ids.end());
  }
  manifest.content_hash = manifest_content_hash(manifest.ordered_sample_ids);
  manifest.hyperparameters = std::move(hyperparameters);
  manifest.created_at = now_iso8601();
  return manifest;
}

}  // namespace

MixtureManifest build_s1_mixture(const corpus::Corpus& base,
                                 const corpus::Corpus& target,
                                 const MixtureSpec& spec) {
  if (spec.protocol != Protocol::S1Inject) {
    throw ContractError("build_s1_mixture requires protocol s1-inject");
  }
  if (spec.n_target < 0) throw ContractError("n_target must be >= 0");

  std::vector<std::string> pool = target_train_ids(target, spec.target_task);
  require_capacity(pool.size(), static_cast<std::size_t>(spec.n_target),
                   "target-task train samples for '" + spec.target_task + "'");

  std::mt19937_64 gen(spec.seed);
  std::vector<std::string> injected = rng::sample_without_replacement(
      std::move(pool), static_cast<std::size_t>(spec.n_target), gen);

  std::vector<std::string> ids = base_train_ids(base);
  ids.insert(ids.end(), injected.begin(), injected.end());
  rng::shuffle(ids, gen);

  auto hp = default_hyperparameters(ids.size());
  hp["injected_sample_ids"] = injected;
  return finalize(spec, {Phase{"train", std::move(ids)}}, std::move(hp));
}

MixtureManifest build_s2_set(const corpus::Corpus& target,
                             const MixtureSpec& spec) {
  if (spec.protocol != Protocol::S2Solo) {
    throw ContractError("build_s2_set requires protocol s2-solo");
  }
  if (spec.n_target < 0) throw ContractError("n_target must be >= 0");

  std::vector<std::string> pool = target_train_ids(target, spec.target_task);
  require_capacity(pool.size(), static_cast<std::size_t>(spec.n_target),
                   "target-task train samples for '" + spec.target_task + "'");

  std::mt19937_64 gen(spec.seed);
  rng::shuffle(pool, gen);
  std::vector<std::string> train_ids(
      pool.begin(), pool.begin() + spec.n_target);

  auto hp = default_hyperparameters(train_ids.size());
  if (spec.n_target == 0) {
    hp["zero_shot"] = true;
  } else {
    // Hold out up to 100 of the remaining train samples for validation.
    const std::size_t remaining = pool.size() - train_ids.size();
    const std::size_t reserve = std::min<std::size_t>(100, remaining);
    std::vector<std::string> validation_ids(
        pool.begin() + spec.n_target, pool.begin() + spec.n_target + reserve);
    hp["validation_sample_ids"] = validation_ids;
  }
  return finalize(spec, {Phase{"train", std::move(train_ids)}}, std::move(hp));
}

MixtureManifest build_curriculum(const corpus::Corpus& synthetic,
                                 const corpus::Corpus& human,
                                 const MixtureSpec& spec) {
  if (spec.protocol != Protocol::CurriculumSPlusH) {
    throw ContractError("build_curriculum requires protocol curriculum-s+h");
  }
  if (spec.n_target < 0) throw ContractError("n_target must be >= 0");
  constexpr std::size_t kSyntheticPhaseSize = 100;

  std::vector<std::string> synthetic_pool =
      target_train_ids(synthetic, spec.target_task);
  require_capacity(synthetic_pool.size(), kSyntheticPhaseSize,
                   "synthetic target-task samples for '" + spec.target_task +
                       "'");
  std::vector<std::string> human_pool =
      target_train_ids(human, spec.target_task);
  require_capacity(human_pool.size(), static_cast<std::size_t>(spec.n_target),
                   "human target-task samples for '" + spec.target_task + "'");

  std::mt19937_64 gen(spec.seed);
  std::vector<std::string> phase1 = rng::sample_without_replacement(
      std::move(synthetic_pool), kSyntheticPhaseSize, gen);
  std::vector<std::string> phase2 = rng::sample_without_replacement(
      std::move(human_pool), static_cast<std::size_t>(spec.n_target), gen);

  auto hp = default_hyperparameters(phase1.size() + phase2.size());
  hp["phase_boundary"] = kSyntheticPhaseSize;
  std::vector<Phase> phases;
  phases.push_back(Phase{"synthetic-format", std::move(phase1)});
  phases.push_back(Phase{"human", std::move(phase2)});
  return finalize(spec, std::move(phases), std::move(hp));
}

std::vector<corpus::TaskSample> randomize_labels(
    std::vector<corpus::TaskSample> samples,
    std::span<const std::string> vocab, std::uint64_t seed) {
  if (vocab.empty()) {
    throw ContractError("randomize_labels requires a non-empty vocabulary");
  }
  std::mt19937_64 gen(seed);
  for (corpus::TaskSample& sample : samples) {
    sample.reference = vocab[rng::bounded(gen, vocab.size())];
  }
  return samples;
}

std::vector<MixtureSpec> enumerate_grid(std::span<const std::string> tasks,
                                        std::span<const int> n_values,
                                        int repeats, std::uint64_t root_seed,
                                        Protocol protocol) {
  if (tasks.empty() || n_values.empty() || repeats < 1) {
    throw ContractError("enumerate_grid requires non-empty tasks, n_values, "
                        "and repeats >= 1");
  }
  std::vector<MixtureSpec> specs;
  specs.reserve(tasks.size() * n_values.size() *
                static_cast<std::size_t>(repeats));
  for (const std::string& task : tasks) {
    for (int n : n_values) {
      for (int repeat = 0; repeat < repeats; ++repeat) {
        MixtureSpec spec;
        spec.protocol = protocol;
        spec.target_task = task;
        spec.n_target = n;
        spec.repeat_index = repeat;
        spec.seed = hashing::derive_seed(root_seed, task, n, repeat);
        specs.push_back(std::move(spec));
      }
    }
  }
  return specs;
}

}  // namespace ifteval::mixture
