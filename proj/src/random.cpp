#include "ifteval/random.hpp"

namespace ifteval::rng {

std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t n) {
  // Reject the tail of the 64-bit range that would bias the modulo.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t draw = gen();
  while (draw >= limit) draw = gen();
  return draw % n;
}

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace ifteval::rng
