// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. A stream is fully determined by (seed, index),
// so the i-th sequence of a batch draws the same numbers whatever else is in
// the batch.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace looplab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class Rng {
   public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

    /// Independent stream derived from this generator's seed material.
    static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed, index); }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: empty range");
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Poisson draw by sequential inversion of the CDF, probabilities carried in log space.
    std::int64_t poisson(double lambda) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("Rng::poisson: bad mean");
        if (lambda == 0.0) return 0;
        const double u = uniform();
        double log_p = -lambda;
        double cdf = std::exp(log_p);
        std::int64_t k = 0;
        const double log_lambda = std::log(lambda);
        const std::int64_t cap = static_cast<std::int64_t>(lambda + 40.0 * std::sqrt(lambda) + 100.0);
        while (u > cdf && k < cap) {
            ++k;
            log_p += log_lambda - std::log(static_cast<double>(k));
            cdf += std::exp(log_p);
        }
        return k;
    }

   private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace looplab
