// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Loop-depth distributions, the fixed-k and corrected truncation samplers,
// and per-sequence schedules aligned to a common final step.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "looplab/rng.hpp"

namespace looplab {

enum class DepthKind { poisson, poisson_lognormal };

inline const char* depth_kind_name(DepthKind k) {
    return k == DepthKind::poisson ? "poisson" : "poisson-lognormal";
}

inline DepthKind parse_depth_kind(const std::string& s) {
    if (s == "poisson") return DepthKind::poisson;
    if (s == "poisson-lognormal" || s == "lognormal") return DepthKind::poisson_lognormal;
    throw std::invalid_argument("unknown depth distribution '" + s + "'");
}

struct DepthDistribution {
    DepthKind kind = DepthKind::poisson;
    double sigma = 0.5;  // lognormal spread

    /// poisson: max(Poisson(mu), 1).
    /// poisson-lognormal: tau ~ N(ln mu - sigma^2/2, sigma), Poisson(e^tau) + 1.
    long sample(double mu, Rng& rng) const {
        if (!(mu > 0.0)) throw std::invalid_argument("DepthDistribution: mean must be positive");
        if (kind == DepthKind::poisson) return std::max<long>(1, rng.poisson(mu));
        const double tau = rng.normal(std::log(mu) - 0.5 * sigma * sigma, sigma);
        return rng.poisson(std::exp(tau)) + 1;
    }
};

inline long mu_bwd_rule(long mu_rec) {
    if (mu_rec < 1) throw std::invalid_argument("mu_bwd_rule: mu_rec must be >= 1");
    return (mu_rec + 1) / 2;
}

struct DepthSample {
    long T = 0;  // total loops
    long n = 0;  // loops without gradient
    long k = 0;  // loops with gradient
};

/// n ~ Λ(μ_rec - μ_bwd), k = μ_bwd.
inline DepthSample sample_baseline(long mu_rec, long mu_bwd, const DepthDistribution& dist, Rng& rng) {
    if (mu_rec <= mu_bwd) throw std::invalid_argument("sample_baseline: needs mu_rec > mu_bwd");
    DepthSample s;
    s.n = dist.sample(static_cast<double>(mu_rec - mu_bwd), rng);
    s.k = mu_bwd;
    s.T = s.n + s.k;
    return s;
}

/// Split of a drawn depth T: the final min(T, μ_bwd) loops carry gradient.
inline DepthSample split_depth(long T, long mu_bwd) {
    if (T < 0 || mu_bwd < 1) throw std::invalid_argument("split_depth: needs T >= 0 and mu_bwd >= 1");
    return {T, std::max(T - mu_bwd, 0L), std::min(T, mu_bwd)};
}

/// T ~ Λ(μ_rec), n = max(T - μ_bwd, 0), k = min(T, μ_bwd).
inline DepthSample sample_corrected(long mu_rec, long mu_bwd, const DepthDistribution& dist, Rng& rng) {
    if (mu_rec < 1) throw std::invalid_argument("sample_corrected: mu_rec must be >= 1");
    return split_depth(dist.sample(static_cast<double>(mu_rec), rng), mu_bwd);
}

struct SequenceDepth {
    std::uint64_t stream = 0;  // rng stream index the depth was drawn from
    long T = 0, n = 0, k = 0;
    long tau = 0;  // idle steps before this sequence starts looping
};

/// Loop plan for a batch. Step t (0-based, t < T_max) is, for sequence i:
/// idle when t < tau_i, without gradient when t < T_max - k_i, else with gradient.
struct DepthSchedule {
    std::vector<SequenceDepth> seqs;
    long T_max = 0;
    long mu_bwd = 0;
    std::uint64_t seed = 0;

    std::size_t size() const { return seqs.size(); }

    /// First step at which any sequence records gradient.
    long grad_start() const {
        long kmax = 0;
        for (const auto& s : seqs) kmax = std::max(kmax, s.k);
        return T_max - kmax;
    }
    bool active(std::size_t i, long t) const { return t >= seqs[i].tau; }
    bool grad_step(std::size_t i, long t) const { return t >= T_max - seqs[i].k; }
};

/// Schedule from given depths (tau_i = T_max - T_i).
inline DepthSchedule make_schedule(const std::vector<long>& depths, long mu_bwd, std::uint64_t seed = 0,
                                   std::uint64_t first_stream = 0) {
    if (depths.empty()) throw std::invalid_argument("make_schedule: empty batch");
    DepthSchedule s;
    s.mu_bwd = mu_bwd;
    s.seed = seed;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        if (depths[i] < 1) throw std::invalid_argument("make_schedule: depths must be >= 1");
        const auto d = split_depth(depths[i], mu_bwd);
        s.seqs.push_back({first_stream + i, d.T, d.n, d.k, 0});
        s.T_max = std::max(s.T_max, d.T);
    }
    for (auto& q : s.seqs) q.tau = s.T_max - q.T;
    return s;
}

/// Corrected per-sequence depths; sequence i draws from stream (seed, first_stream + i).
/// With per_sequence = false one depth (from the first stream) is shared by the batch.
inline DepthSchedule build_schedule(std::size_t batch_size, long mu_rec, long mu_bwd, const DepthDistribution& dist,
                                    std::uint64_t seed, std::uint64_t first_stream = 0, bool per_sequence = true) {
    if (batch_size == 0) throw std::invalid_argument("build_schedule: batch_size must be >= 1");
    std::vector<long> depths(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        if (!per_sequence && i > 0) {
            depths[i] = depths[0];
            continue;
        }
        Rng rng = Rng::stream(seed, first_stream + i);
        depths[i] = sample_corrected(mu_rec, mu_bwd, dist, rng).T;
    }
    auto s = make_schedule(depths, mu_bwd, seed, first_stream);
    if (!per_sequence)
        for (auto& q : s.seqs) q.stream = first_stream;
    return s;
}

}  // namespace looplab
