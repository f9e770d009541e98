#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace deepdtf {

// Platform-independent draws; the standard distributions are not
// reproducible across library implementations.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);  // [0, n)
double uniform_real(std::mt19937_64& rng);                      // [0, 1)

template <typename T>
void shuffle(std::span<T> items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

// Independent stream seed for worker / fold `stream` of a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace deepdtf
