#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifteval/corpus.hpp"

namespace ifteval::mixture {

enum class Protocol {
  S1Inject,        // base instruction mixture + N target-task samples
  S2Solo,          // N target-task samples only
  CurriculumSPlusH,  // 100 synthetic samples, then N human samples
  SyntheticS,
  RandomLabelR,
};

std::string_view protocol_name(Protocol protocol);
Protocol protocol_from_name(std::string_view name);

// The N grid used for every sweep.
inline constexpr std::array<int, 8> kGridNValues = {0,   10,  25,  50,
                                                    100, 200, 500, 1000};

struct MixtureSpec {
  Protocol protocol = Protocol::S1Inject;
  std::string base_corpus_ref;  // empty for S2
  std::string target_task;
  int n_target = 0;
  std::uint64_t seed = 0;
  int repeat_index = 0;
};

struct Phase {
  std::string name;
  std::vector<std::string> sample_ids;
};

struct MixtureManifest {
  MixtureSpec spec;
  std::vector<std::string> ordered_sample_ids;  // concatenation of phases
  std::vector<Phase> phases;
  std::uint64_t content_hash = 0;  // over ordered_sample_ids only
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::string created_at;

  nlohmann::json to_json() const;
  static MixtureManifest from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static MixtureManifest load(const std::filesystem::path& path);
};

std::uint64_t manifest_content_hash(std::span<const std::string> ordered_ids);

// Training defaults recorded as inert metadata for external trainers.
nlohmann::json default_hyperparameters(std::size_t train_set_size);

MixtureManifest build_s1_mixture(const corpus::Corpus& base,
                                 const corpus::Corpus& target,
                                 const MixtureSpec& spec);

MixtureManifest build_s2_set(const corpus::Corpus& target,
                             const MixtureSpec& spec);

MixtureManifest build_curriculum(const corpus::Corpus& synthetic,
                                 const corpus::Corpus& human,
                                 const MixtureSpec& spec);

// Replaces every reference with a uniform draw from vocab; ids and inputs
// untouched.
std::vector<corpus::TaskSample> randomize_labels(
    std::vector<corpus::TaskSample> samples,
    std::span<const std::string> vocab, std::uint64_t seed);

// Cartesian product in task-major, then N, then repeat order. Per-cell seeds
// derive from the root seed and the cell coordinates.
std::vector<MixtureSpec> enumerate_grid(std::span<const std::string> tasks,
                                        std::span<const int> n_values,
                                        int repeats, std::uint64_t root_seed,
                                        Protocol protocol = Protocol::S1Inject);

}  // namespace ifteval::mixture
