#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ifteval::rng {

// Deterministic sampling helpers built directly on mt19937_64 output so the
// results do not depend on the standard library's distribution
// implementations. Mixture manifests and corpus splits must reproduce
// bit-exactly from a seed.

// Uniform draw in [0, n) via rejection sampling. n must be > 0.
std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t n);

// Fisher-Yates shuffle driven by bounded().
template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(bounded(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

// First k elements of a shuffled copy; k must not exceed items.size().
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k,
                                          std::mt19937_64& gen) {
  shuffle(items, gen);
  items.resize(k);
  return items;
}

// Uniform double in [0, 1) with 53 bits of randomness.
double uniform01(std::mt19937_64& gen);

}  // namespace ifteval::rng
