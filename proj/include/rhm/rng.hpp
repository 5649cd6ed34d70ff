#pragma once

#include <cstdint>
#include <limits>

namespace rhm {

// Finalizer of the splitmix64 generator; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Purpose tags keep the random streams of unrelated operations disjoint even
// when they share a seed. Values are arbitrary but fixed: changing them
// changes every sampled artifact.
namespace stream {
inline constexpr std::uint64_t grammar = 0x6772616d6d6172ull;
inline constexpr std::uint64_t sample = 0x73616d706c65ull;
inline constexpr std::uint64_t transform = 0x7472616e73ull;
inline constexpr std::uint64_t corpus_blocks = 0x626c6f636b73ull;
inline constexpr std::uint64_t synthetic = 0x73796e7468ull;
}  // namespace stream

// Counter-based deterministic generator: the emitted sequence is a pure
// function of (seed, tag, counter). Streams with distinct counters are
// independent, so workers may consume disjoint counter ranges concurrently
// without coordination. Internally a splitmix64 walk from a mixed-in origin.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t tag, std::uint64_t counter)
        : state_(mix64(mix64(seed + 0x9e3779b97f4a7c15ull) ^ tag) ^ mix64(counter ^ 0x5851f42d4c957f2dull)) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // Unbiased uniform draw from [0, n). Rejection on the short tail.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t min = (-n) % n;  // 2^64 mod n
        std::uint64_t r = next();
        while (r < min) r = next();
        return r % n;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

}  // namespace rhm
