#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace flad {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Derives a child seed from a parent seed and a sequence of integer tags,
/// e.g. derive_seed(global, client_id, round). The result depends only on the
/// arguments, so parallel and serial schedules draw identical streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = detail::splitmix64(seed);
    for (auto t : tags) h = detail::splitmix64(h ^ detail::splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

// Stream tags used across modules.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t local_train = 2;
inline constexpr std::uint64_t autoencoder = 3;
inline constexpr std::uint64_t partition = 4;
inline constexpr std::uint64_t poison = 5;
inline constexpr std::uint64_t reference = 6;
inline constexpr std::uint64_t calibration = 7;
inline constexpr std::uint64_t split = 8;
inline constexpr std::uint64_t synthetic = 9;
inline constexpr std::uint64_t pca = 10;
inline constexpr std::uint64_t client_ae = 11;
}  // namespace stream

}  // namespace flad
