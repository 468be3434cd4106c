#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace valtrack {

// Name recorded in output sidecars. Bump the version whenever the stream a
// given seed produces changes.
inline constexpr const char* kRngAlgorithm = "mt19937_64/splitmix64-mix/marsaglia-tsang";
inline constexpr int kRngVersion = 1;

// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Per-task seed: a pure function of (master seed, task index). Tasks derive
// their own streams from this, so results never depend on scheduling.
constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(master) ^ (index * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

// Explicit random stream handed to every stochastic function. Distributions
// are implemented here rather than through <random> adaptors so that a seed
// yields the same numbers on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via the Marsaglia polar method.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    // Gamma(shape, rate) by Marsaglia and Tsang; shape < 1 uses the
    // U^(1/shape) boost.
    double gamma(double shape, double rate)
    {
        if (shape < 1.0) {
            const double boost = std::pow(open_uniform(), 1.0 / shape);
            return gamma(shape + 1.0, rate) * boost;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = open_uniform();
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2)
                return d * v / rate;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v)))
                return d * v / rate;
        }
    }

private:
    // Uniform on (0, 1).
    double open_uniform()
    {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace valtrack
