#include "ifteval/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace ifteval::hashing {

std::uint64_t hash_id_list(std::span<const std::string> ids) {
  std::uint64_t state = kFnvOffset;
  for (const std::string& id : ids) {
    state = fnv1a(id, state);
    state = fnv1a(std::string_view("\x1f", 1), state);
  }
  return state;
}

std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view task_id,
                          int n_target, int repeat_index) {
  std::uint64_t state = fnv1a_u64(root_seed);
  state = fnv1a(task_id, state);
  state = fnv1a_u64(static_cast<std::uint64_t>(n_target), state);
  state = fnv1a_u64(static_cast<std::uint64_t>(repeat_index), state);
  return state;
}

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
            EVP_DigestFinal_ex(ctx, digest.data(), &digest_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-256 digest failed");

  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(digits[digest[i] >> 4]);
    out.push_back(digits[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace ifteval::hashing
