#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace scopelab {

// Thin wrapper over mt19937_64. The conversions to reals and categories are
// written out here instead of using the <random> distributions, whose
// algorithms are implementation-defined; runs must replay identically across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream keyed by a list of integers (seed, purpose, indices...).
    static Rng stream(std::initializer_list<std::uint64_t> key);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] (inclusive), rejection-sampled.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    /// Standard normal via Box-Muller.
    double normal();

    /// Index drawn from unnormalized non-negative weights.
    std::size_t categorical(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

}  // namespace scopelab
