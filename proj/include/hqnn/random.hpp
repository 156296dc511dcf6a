#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace hqnn {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from
// structured coordinates (run seed, generation, slot, ...).
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>{0, n - 1}(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>{lo, hi}(rng);
}

inline double uniform_angle(Rng& rng) {
    return uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
}

inline bool coin_flip(Rng& rng, double p = 0.5) {
    return std::bernoulli_distribution{p}(rng);
}

template <typename T>
const T& pick(Rng& rng, std::span<const T> choices) {
    return choices[uniform_index(rng, choices.size())];
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& choices) {
    return choices[uniform_index(rng, choices.size())];
}

template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& choices) {
    return choices[uniform_index(rng, N)];
}

} // namespace hqnn
