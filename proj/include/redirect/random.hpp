#pragma once

// Platform-stable randomness. std::mt19937_64 is bit-specified by the
// standard; the std distributions are not, so every draw goes through the
// helpers here.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace redirect {

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

/// Labeled derivation of a sub-seed from the run seed, e.g.
/// derive_seed(seed, "control-sample").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

/// Standard normal draw (Box-Muller, one value per call).
double standard_normal(Rng& rng);

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace redirect
