#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ifteval/errors.hpp"
#include "ifteval/mixture.hpp"

using namespace ifteval;
using namespace ifteval::mixture;

namespace {

corpus::Corpus task_corpus(const std::string& task, std::size_t n,
                           corpus::Split split = corpus::Split::Train,
                           const std::string& prefix = "") {
  std::vector<corpus::TaskSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::TaskSample s;
    s.sample_id = (prefix.empty() ? task : prefix) + "-" + std::to_string(i);
    s.task_id = task;
    s.category = task;
    s.input_text = "input " + std::to_string(i);
    s.reference = i % 2 == 0 ? "positive" : "negative";
    s.split = split;
    samples.push_back(std::move(s));
  }
  return corpus::Corpus(std::move(samples));
}

MixtureSpec spec_for(Protocol protocol, const std::string& task, int n,
                     std::uint64_t seed) {
  MixtureSpec spec;
  spec.protocol = protocol;
  spec.target_task = task;
  spec.n_target = n;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("enumerate_grid yields the full cartesian product") {
  std::vector<std::string> tasks = {"mnli", "qnli", "stsb", "sst2",
                                    "conll", "squadv2", "xsum"};
  std::vector<int> ns(kGridNValues.begin(), kGridNValues.end());
  const auto specs = enumerate_grid(tasks, ns, 4, 7);
  CHECK(specs.size() == 7 * 8 * 4);

  // task-major, then N, then repeat
  CHECK(specs[0].target_task == "mnli");
  CHECK(specs[0].n_target == 0);
  CHECK(specs[0].repeat_index == 0);
  CHECK(specs[1].repeat_index == 1);
  CHECK(specs[4].n_target == 10);
  CHECK(specs[32].target_task == "qnli");
}

TEST_CASE("enumerate_grid of a singleton is a single spec") {
  const std::vector<std::string> tasks = {"sst2"};
  const std::vector<int> ns = {10};
  const auto specs = enumerate_grid(tasks, ns, 1, 0);
  REQUIRE(specs.size() == 1);
  CHECK(specs[0].target_task == "sst2");
}

TEST_CASE("enumerate_grid cardinality property") {
  for (std::size_t t = 1; t <= 3; ++t) {
    for (std::size_t n = 1; n <= 3; ++n) {
      for (int r = 1; r <= 3; ++r) {
        std::vector<std::string> tasks;
        for (std::size_t i = 0; i < t; ++i) {
          tasks.push_back("task" + std::to_string(i));
        }
        std::vector<int> ns;
        for (std::size_t i = 0; i < n; ++i) ns.push_back(static_cast<int>(i));
        CHECK(enumerate_grid(tasks, ns, r, 1).size() == t * n * r);
      }
    }
  }
}

TEST_CASE("enumerate_grid derives stable per-cell seeds") {
  const std::vector<std::string> tasks = {"sst2", "mnli"};
  const std::vector<int> ns = {0, 10};
  const auto a = enumerate_grid(tasks, ns, 2, 42);
  const auto b = enumerate_grid(tasks, ns, 2, 42);
  REQUIRE(a.size() == b.size());
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].seed == b[i].seed);
    seeds.insert(a[i].seed);
  }
  CHECK(seeds.size() == a.size());  // distinct cells, distinct seeds

  const auto c = enumerate_grid(tasks, ns, 2, 43);
  CHECK(c[0].seed != a[0].seed);
}

TEST_CASE("enumerate_grid rejects empty dimensions") {
  const std::vector<std::string> none;
  const std::vector<std::string> tasks = {"sst2"};
  const std::vector<int> ns = {1};
  CHECK_THROWS_AS(enumerate_grid(none, ns, 1, 0), ContractError);
  CHECK_THROWS_AS(enumerate_grid(tasks, std::vector<int>{}, 1, 0),
                  ContractError);
  CHECK_THROWS_AS(enumerate_grid(tasks, ns, 0, 0), ContractError);
}

TEST_CASE("s1 with zero injection equals the base training split") {
  const auto base = task_corpus("xsum", 40, corpus::Split::Train, "base");
  const auto target = task_corpus("sst2", 20);
  const auto manifest =
      build_s1_mixture(base, target, spec_for(Protocol::S1Inject, "sst2", 0, 5));
  CHECK(manifest.ordered_sample_ids.size() == 40);
  std::set<std::string> ids(manifest.ordered_sample_ids.begin(),
                            manifest.ordered_sample_ids.end());
  std::set<std::string> expected;
  for (const auto& s : base.samples()) expected.insert(s.sample_id);
  CHECK(ids == expected);
}

TEST_CASE("s1 injection draws only target-task train ids") {
  const auto base = task_corpus("xsum", 400, corpus::Split::Train, "base");
  // target corpus also carries val/test rows that must never be drawn
  const auto train_part = task_corpus("sst2", 150);
  const auto test_part =
      task_corpus("sst2", 30, corpus::Split::Test, "sst2-test");
  std::vector<corpus::TaskSample> mixed;
  for (const auto& s : train_part.samples()) mixed.push_back(s);
  for (const auto& s : test_part.samples()) mixed.push_back(s);
  const corpus::Corpus target(std::move(mixed));

  const auto manifest = build_s1_mixture(
      base, target, spec_for(Protocol::S1Inject, "sst2", 100, 5));
  CHECK(manifest.ordered_sample_ids.size() == 500);

  // membership oracle: count ids per source
  std::set<std::string> target_train_ids;
  for (const auto& s : target.samples()) {
    if (s.split == corpus::Split::Train) target_train_ids.insert(s.sample_id);
  }
  std::size_t from_target = 0;
  std::set<std::string> unique(manifest.ordered_sample_ids.begin(),
                               manifest.ordered_sample_ids.end());
  CHECK(unique.size() == manifest.ordered_sample_ids.size());  // no dupes
  for (const auto& id : manifest.ordered_sample_ids) {
    if (target_train_ids.count(id)) ++from_target;
    CHECK(id.find("sst2-test") == std::string::npos);
  }
  CHECK(from_target == 100);
  CHECK(manifest.hyperparameters["injected_sample_ids"].size() == 100);
}

TEST_CASE("s1 is deterministic per seed") {
  const auto base = task_corpus("xsum", 50, corpus::Split::Train, "base");
  const auto target = task_corpus("sst2", 1200);
  const auto spec = spec_for(Protocol::S1Inject, "sst2", 1000, 77);
  const auto a = build_s1_mixture(base, target, spec);
  const auto b = build_s1_mixture(base, target, spec);
  CHECK(a.content_hash == b.content_hash);
  CHECK(a.ordered_sample_ids == b.ordered_sample_ids);

  auto other = spec;
  other.seed = 78;
  CHECK(build_s1_mixture(base, target, other).content_hash != a.content_hash);
}

TEST_CASE("s1 capacity errors state the available count") {
  const auto base = task_corpus("xsum", 10, corpus::Split::Train, "base");
  const auto target = task_corpus("sst2", 30);
  CHECK_THROWS_WITH_AS(
      build_s1_mixture(base, target,
                       spec_for(Protocol::S1Inject, "sst2", 100, 1)),
      doctest::Contains("have 30"), CapacityError);
}

TEST_CASE("s1 rejects wrong protocol") {
  const auto base = task_corpus("xsum", 10, corpus::Split::Train, "base");
  const auto target = task_corpus("sst2", 10);
  CHECK_THROWS_AS(build_s1_mixture(base, target,
                                   spec_for(Protocol::S2Solo, "sst2", 1, 1)),
                  ContractError);
}

TEST_CASE("s2 draws target-only samples and reserves validation") {
  const auto target = task_corpus("sst2", 1200);

  const auto small =
      build_s2_set(target, spec_for(Protocol::S2Solo, "sst2", 10, 3));
  CHECK(small.ordered_sample_ids.size() == 10);
  for (const auto& id : small.ordered_sample_ids) {
    CHECK(id.rfind("sst2-", 0) == 0);
  }
  CHECK(small.hyperparameters.contains("validation_sample_ids"));

  const auto big =
      build_s2_set(target, spec_for(Protocol::S2Solo, "sst2", 1000, 3));
  CHECK(big.ordered_sample_ids.size() == 1000);
  CHECK(big.hyperparameters["validation_sample_ids"].size() == 100);
  // validation ids are disjoint from training ids
  std::set<std::string> train_ids(big.ordered_sample_ids.begin(),
                                  big.ordered_sample_ids.end());
  for (const auto& id :
       big.hyperparameters["validation_sample_ids"]
           .get<std::vector<std::string>>()) {
    CHECK(train_ids.count(id) == 0);
  }
  // small batch rule from the training defaults
  CHECK(small.hyperparameters["batch_size"] == 8);
  CHECK(big.hyperparameters["batch_size"] == 128);
}

TEST_CASE("s2 with zero samples is a flagged zero-shot cell") {
  const auto target = task_corpus("sst2", 50);
  const auto manifest =
      build_s2_set(target, spec_for(Protocol::S2Solo, "sst2", 0, 3));
  CHECK(manifest.ordered_sample_ids.empty());
  CHECK(manifest.hyperparameters["zero_shot"] == true);
  CHECK_FALSE(manifest.hyperparameters.contains("validation_sample_ids"));
}

TEST_CASE("curriculum carries a 100-sample synthetic phase then N human") {
  const auto synthetic =
      task_corpus("sst2", 150, corpus::Split::Train, "syn");
  const auto human = task_corpus("sst2", 80, corpus::Split::Train, "hum");

  const auto manifest = build_curriculum(
      synthetic, human, spec_for(Protocol::CurriculumSPlusH, "sst2", 50, 9));
  REQUIRE(manifest.phases.size() == 2);
  CHECK(manifest.phases[0].name == "synthetic-format");
  CHECK(manifest.phases[0].sample_ids.size() == 100);
  CHECK(manifest.phases[1].sample_ids.size() == 50);
  CHECK(manifest.ordered_sample_ids.size() == 150);
  CHECK(manifest.hyperparameters["phase_boundary"] == 100);
  for (const auto& id : manifest.phases[0].sample_ids) {
    CHECK(id.rfind("syn-", 0) == 0);
  }
  for (const auto& id : manifest.phases[1].sample_ids) {
    CHECK(id.rfind("hum-", 0) == 0);
  }

  const auto empty_second = build_curriculum(
      synthetic, human, spec_for(Protocol::CurriculumSPlusH, "sst2", 0, 9));
  CHECK(empty_second.phases[0].sample_ids.size() == 100);
  CHECK(empty_second.phases[1].sample_ids.empty());

  const auto again = build_curriculum(
      synthetic, human, spec_for(Protocol::CurriculumSPlusH, "sst2", 50, 9));
  CHECK(again.content_hash == manifest.content_hash);
}

TEST_CASE("curriculum demands 100 synthetic samples") {
  const auto synthetic = task_corpus("sst2", 99, corpus::Split::Train, "syn");
  const auto human = task_corpus("sst2", 10, corpus::Split::Train, "hum");
  CHECK_THROWS_AS(
      build_curriculum(synthetic, human,
                       spec_for(Protocol::CurriculumSPlusH, "sst2", 5, 1)),
      CapacityError);
}

TEST_CASE("randomize_labels draws uniformly and deterministically") {
  const auto source = task_corpus("sst2", 1000);
  std::vector<corpus::TaskSample> samples(source.samples().begin(),
                                          source.samples().end());
  const std::vector<std::string> vocab = {"positive", "negative"};

  const auto randomized = randomize_labels(samples, vocab, 31);
  REQUIRE(randomized.size() == 1000);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < randomized.size(); ++i) {
    CHECK(randomized[i].sample_id == samples[i].sample_id);
    CHECK(randomized[i].input_text == samples[i].input_text);
    if (randomized[i].reference.get<std::string>() == "positive") ++positives;
  }
  const double freq = static_cast<double>(positives) / 1000.0;
  CHECK(std::abs(freq - 0.5) < 0.05);  // within 5 percentage points

  // chi-square sanity on the same seeded draw (1 dof, 95% -> 3.84)
  const double expected = 500.0;
  const double chi2 =
      (positives - expected) * (positives - expected) / expected +
      (1000.0 - positives - expected) * (1000.0 - positives - expected) /
          expected;
  CHECK(chi2 < 3.84);

  const auto again = randomize_labels(samples, vocab, 31);
  for (std::size_t i = 0; i < randomized.size(); ++i) {
    CHECK(again[i].reference == randomized[i].reference);
  }

  const std::vector<std::string> single = {"only"};
  for (const auto& s : randomize_labels(samples, single, 9)) {
    CHECK(s.reference.get<std::string>() == "only");
  }
  CHECK_THROWS_AS(randomize_labels(samples, std::vector<std::string>{}, 1),
                  ContractError);
}

TEST_CASE("manifest hash depends only on the ordered id list") {
  const auto target = task_corpus("sst2", 60);
  auto a = build_s2_set(target, spec_for(Protocol::S2Solo, "sst2", 20, 1));
  auto b = a;
  b.hyperparameters["train_steps"] = 9999;
  b.spec.seed = 123456;
  CHECK(manifest_content_hash(a.ordered_sample_ids) ==
        manifest_content_hash(b.ordered_sample_ids));

  auto reordered = a.ordered_sample_ids;
  std::swap(reordered.front(), reordered.back());
  CHECK(manifest_content_hash(reordered) !=
        manifest_content_hash(a.ordered_sample_ids));
}

TEST_CASE("manifest save/load round trips and verifies its hash") {
  const auto dir =
      std::filesystem::temp_directory_path() / "ifteval-manifest-test";
  std::filesystem::create_directories(dir);
  const auto target = task_corpus("sst2", 60);
  const auto manifest =
      build_s2_set(target, spec_for(Protocol::S2Solo, "sst2", 20, 1));
  manifest.save(dir / "m.json");

  const auto loaded = MixtureManifest::load(dir / "m.json");
  CHECK(loaded.content_hash == manifest.content_hash);
  CHECK(loaded.ordered_sample_ids == manifest.ordered_sample_ids);
  CHECK(loaded.spec.target_task == "sst2");

  // tamper with the id list; the stored hash no longer matches
  auto doc = manifest.to_json();
  doc["ordered_sample_ids"].push_back("intruder");
  {
    std::ofstream out(dir / "bad.json");
    out << doc.dump();
  }
  CHECK_THROWS_WITH_AS(MixtureManifest::load(dir / "bad.json"),
                       doctest::Contains("content_hash"), ContractError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("protocol names round trip") {
  for (const auto protocol :
       {Protocol::S1Inject, Protocol::S2Solo, Protocol::CurriculumSPlusH,
        Protocol::SyntheticS, Protocol::RandomLabelR}) {
    CHECK(protocol_from_name(protocol_name(protocol)) == protocol);
  }
  CHECK_THROWS_AS(protocol_from_name("s9"), ContractError);
}
