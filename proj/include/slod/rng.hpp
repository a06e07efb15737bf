#pragma once

#include <cstdint>
#include <initializer_list>

namespace slod {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based stream: the state is derived from a key tuple, so a
/// stream for (seed, element, attempt) is the same regardless of the
/// order in which streams are created.
class KeyedRng {
public:
    KeyedRng(std::initializer_list<std::uint64_t> key) {
        std::uint64_t s = 0x6a09e667f3bcc909ULL;
        for (std::uint64_t k : key) s = mix64(s ^ mix64(k));
        state_ = s;
    }

    std::uint64_t next() { return mix64(state_++); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        // Lemire-style rejection keeps the draw unbiased.
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

} // namespace slod
