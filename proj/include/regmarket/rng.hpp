#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace regmkt {

/// Deterministic random source used throughout the library. All draws go
/// through explicit transforms (Box-Muller, inverse-exponential) rather than
/// std::*_distribution so that a given seed produces the same stream on every
/// platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform draw on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(gen_() >> 12) + 0.5) * 0x1.0p-52;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller, caching the spare deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Student's t with two degrees of freedom: Z / sqrt(V/2), V ~ chi^2(2).
    double student_t2() {
        const double v_half = -std::log(uniform());  // chi^2(2)/2 ~ Exp(1)
        return normal() / std::sqrt(v_half);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    /// Stream derivation so that run k of a Monte Carlo batch gets an
    /// independent, reproducible seed from the master seed.
    static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
        std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace regmkt
