#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace agdh {

/// Seeded random source. Wraps mt19937_64 (whose output sequence is fixed by
/// the standard) and does its own range reduction so that draws are identical
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    /// Independent stream for a (seed, stream) pair, e.g. one per node.
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next() { return engine_(); }
    /// Uniform over the closed range [lo, hi].
    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);
    /// Uniform over [0, 1) with 53 bits of resolution.
    double unit();
    void fill(std::span<std::uint8_t> out);

private:
    std::mt19937_64 engine_;
};

}  // namespace agdh
