#include "optbench/random.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

namespace optbench {

std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * SplitMix64::kMul1;
    z = (z ^ (z >> 27)) * SplitMix64::kMul2;
    return z ^ (z >> 31);
}

std::uint64_t SplitMix64::next() noexcept {
    state_ += kGamma;
    return mix64(state_);
}

double SplitMix64::uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::size_t SplitMix64::below(std::size_t n) noexcept {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
}

double SplitMix64::normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) noexcept {
    std::uint64_t h = basis;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept { return fnv1a64(std::as_bytes(std::span(text.data(), text.size()))); }

std::uint64_t fnv1a64(std::span<const double> values) noexcept { return fnv1a64(std::as_bytes(values)); }

std::uint64_t fnv1a64(std::span<const std::size_t> values) noexcept {
    // Hash as little-endian u64 regardless of size_t width.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t v : values) {
        std::uint64_t x = v;
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xFFu;
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name) noexcept { return mix64(master ^ fnv1a64(name)); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return mix64(base + (index + 1) * SplitMix64::kGamma);
}

void shuffle(std::span<std::size_t> values, SplitMix64& rng) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(values[i - 1], values[j]);
    }
}

std::vector<std::size_t> permutation(std::size_t n, SplitMix64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    return order;
}

}  // namespace optbench
