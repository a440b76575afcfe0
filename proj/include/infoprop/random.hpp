#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace infoprop {

/// splitmix64 finaliser, used to decorrelate consecutive seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seedable, splittable generator: 64-bit Mersenne Twister (mt19937_64,
/// bit-exact across standard libraries) seeded through splitmix64.
/// Distributions are computed here from raw bits rather than through
/// <random> distributions, whose output is implementation defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    /// Inverse-CDF exponential: -ln(1 - u) / rate.
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    /// Uniform integer in [0, n); n > 0. Rejection keeps it unbiased.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % n;
    }

    /// Independent child stream.
    Rng split(std::uint64_t stream) { return Rng(splitmix64(next() ^ splitmix64(stream))); }

private:
    std::mt19937_64 engine_;
};

} // namespace infoprop
