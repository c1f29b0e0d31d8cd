#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ifteval::hashing {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// 64-bit FNV-1a. Stable across platforms and runs; used for manifest content
// hashes, per-cell seed derivation, and stub-provider determinism. Not a
// cryptographic hash.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t state = kFnvOffset) {
  for (char c : bytes) {
    state ^= static_cast<unsigned char>(c);
    state *= kFnvPrime;
  }
  return state;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t value,
                                  std::uint64_t state = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    state ^= value & 0xffu;
    state *= kFnvPrime;
    value >>= 8;
  }
  return state;
}

// Stable digest of an ordered id list. Each element is terminated with a
// unit separator so ["ab","c"] and ["a","bc"] hash differently.
std::uint64_t hash_id_list(std::span<const std::string> ids);

// Per-cell seed for grid enumeration: mixes the root seed with the cell
// coordinates.
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view task_id,
                          int n_target, int repeat_index);

std::string to_hex(std::uint64_t value);

// SHA-256 hex digest (OpenSSL-backed); used for cache keys and config hashes
// where collision resistance matters.
std::string sha256_hex(std::string_view bytes);

}  // namespace ifteval::hashing
