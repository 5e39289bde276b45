#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "pfm/errors.hpp"

namespace pfm {

/// Deterministic 64-bit generator (splitmix64). Hand-rolled samplers keep
/// every draw reproducible independent of the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in (0, 1): never returns 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per pair, cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Poisson by sequential CDF inversion; exact and deterministic.
    /// Throws numerical_error for rates large enough to overflow the
    /// observation layer anyway.
    int poisson(double rate) {
        if (!(rate >= 0.0)) throw contract_error("Rng::poisson: negative rate");
        if (rate > 700.0) throw numerical_error("Rng::poisson: rate overflow (> 700)");
        const double u = uniform();
        double prob = std::exp(-rate);
        double cdf = prob;
        int value = 0;
        while (u > cdf && value < 100000) {
            ++value;
            prob *= rate / value;
            cdf += prob;
        }
        return value;
    }

    /// Index draw from unnormalized non-negative weights.
    template <typename Vec>
    int categorical(const Vec& weights) {
        double total = 0.0;
        for (int i = 0; i < static_cast<int>(weights.size()); ++i) total += weights[i];
        const double u = uniform() * total;
        double cum = 0.0;
        for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
            cum += weights[i];
            if (u <= cum) return i;
        }
        return static_cast<int>(weights.size()) - 1;
    }

    /// Derives an independent stream, e.g. one per simulated row.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        Rng mix(seed ^ (0x9e3779b97f4a7c15ull + index * 0xd1342543de82ef95ull));
        return mix.next_u64();
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pfm
