#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace optbench {

/// SplitMix64 (Steele, Lea & Flood). All randomness in the project comes from
/// this generator so runs reproduce across platforms and implementations.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// Derived draws:
///   uniform()  = (next() >> 11) * 2^-53, in [0, 1)
///   below(n)   = floor(uniform() * n)
///   normal()   = Box-Muller on two uniforms: sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
class SplitMix64 {
  public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kMul1 = 0xBF58476D1CE4E5B9ULL;
    static constexpr std::uint64_t kMul2 = 0x94D049BB133111EBULL;

    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next() noexcept;
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) noexcept;
    double normal() noexcept;

    std::uint64_t state() const noexcept { return state_; }

  private:
    std::uint64_t state_;
};

/// The SplitMix64 output finalizer applied to a single value.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis = 0xCBF29CE484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t fnv1a64(std::span<const double> values) noexcept;
std::uint64_t fnv1a64(std::span<const std::size_t> values) noexcept;

/// Named sub-seed: mix64(master ^ fnv1a64(name)). Streams "init", "split",
/// "shuffle", "dropout" and "synthetic" are derived this way so that e.g. the
/// optimizer choice can never perturb data order.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name) noexcept;
/// Indexed sub-seed: mix64(base + (index + 1) * kGamma).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Fisher-Yates from the back: for i = n-1 .. 1 swap(i, below(i + 1)).
void shuffle(std::span<std::size_t> values, SplitMix64& rng) noexcept;
std::vector<std::size_t> permutation(std::size_t n, SplitMix64& rng);

}  // namespace optbench
