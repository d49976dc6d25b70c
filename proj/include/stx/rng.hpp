#pragma once

// Platform-independent sampling on top of mt19937_64. The standard
// distributions are implementation-defined, which would break
// cross-machine reproducibility of splits and oversampling.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace stx::rng {

// Uniform integer in [0, n), n > 0, by rejection.
inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = gen();
  } while (v >= limit);
  return v % n;
}

template <class T>
void shuffle(std::vector<T>& items, std::mt19937_64& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace stx::rng
