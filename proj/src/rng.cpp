#include "scopelab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace scopelab {

Rng Rng::stream(std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    words.reserve(key.size() * 2);
    for (std::uint64_t k : key) {
        words.push_back(static_cast<std::uint32_t>(k));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return Rng((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

}  // namespace scopelab
