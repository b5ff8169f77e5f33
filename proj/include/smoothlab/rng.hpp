#pragma once

#include <cstdint>

namespace smoothlab {

/// Counter-based generator: draw number `c` of stream `(seed, stream)` is
/// splitmix64_mix(key + (c + 1) * 0x9E3779B97F4A7C15), with
/// key = splitmix64_mix(seed ^ splitmix64_mix(stream)).
///
/// The whole sequence is a pure function of (seed, stream, counter), so any
/// implementation can reproduce it without sharing state. Uniform doubles use
/// the top 53 bits; normals use Box-Muller, consuming two uniforms per draw and
/// discarding the sine branch.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Standard normal.
    double normal();

    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Named stream ids so that independent draws never share a sequence.
namespace streams {
inline constexpr std::uint64_t kCsbmEdges = 1;
inline constexpr std::uint64_t kCsbmFeatures = 2;
inline constexpr std::uint64_t kWeights = 3;
inline constexpr std::uint64_t kLabels = 4;
inline constexpr std::uint64_t kFeatures = 5;
} // namespace streams

} // namespace smoothlab
