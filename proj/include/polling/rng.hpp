#pragma once

#include <array>
#include <cstdint>

namespace polling {

/// SplitMix64 mixer. Used to expand a 64-bit seed into generator state and to
/// derive child streams.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept;

private:
    std::uint64_t state_;
};

/// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64.
///
/// The stream for a given seed is fixed: tests pin the first outputs, so
/// simulations are bit-reproducible across platforms. `split()` consumes one
/// output of the parent and seeds an independent child from it, which is how
/// replications and per-purpose substreams are derived.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    Rng split() noexcept { return Rng(next_u64()); }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }
    result_type operator()() noexcept { return next_u64(); }

private:
    std::array<std::uint64_t, 4> s_{};
};

}  // namespace polling
