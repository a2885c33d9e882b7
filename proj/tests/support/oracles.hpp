// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference computations shared by the unit tests and the acceptance runner.
// They deliberately avoid the library routines they are used to check.

#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "looplab/model.hpp"
#include "looplab/trainer.hpp"

namespace looplab::oracle {

inline ModelConfig tiny_config(InjectionMode mode, std::size_t d = 8, std::uint64_t seed = 7) {
    ModelConfig c;
    c.d = d;
    c.n_heads = 2;
    c.mode = mode;
    c.init_seed = seed;
    return c;
}

inline std::vector<int> random_tokens(std::size_t n, Rng& rng) {
    std::vector<int> t(n);
    for (auto& x : t) x = static_cast<int>(rng.below(kVocabSize));
    return t;
}

/// Adds N(0, sd^2) noise to every parameter, so zero-initialised projections carry signal.
inline void perturb(LoopedModel& m, std::uint64_t seed, double sd) {
    Rng rng(seed);
    for (auto& p : m.parameters()) {
        auto t = p.tensor;
        for (auto& v : t.mutable_data()) v += rng.normal(0.0, sd);
    }
}

inline void copy_values(const LoopedModel& from, LoopedModel& to) {
    const auto a = from.parameters();
    auto b = to.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto dst = b[i].tensor.mutable_data();
        std::copy(a[i].tensor.data().begin(), a[i].tensor.data().end(), dst.begin());
    }
}

/// Two-sample chi-square homogeneity test on integer samples. Bins with a
/// pooled count below 10 are merged into their neighbour. Returns the p-value.
inline double two_sample_chi_square(const std::vector<long>& a, const std::vector<long>& b) {
    std::map<long, std::pair<double, double>> counts;
    for (long x : a) counts[x].first += 1.0;
    for (long x : b) counts[x].second += 1.0;
    std::vector<std::pair<double, double>> bins;
    std::pair<double, double> acc{0.0, 0.0};
    for (const auto& [k, c] : counts) {
        acc.first += c.first;
        acc.second += c.second;
        if (acc.first + acc.second >= 10.0) {
            bins.push_back(acc);
            acc = {0.0, 0.0};
        }
    }
    if (acc.first + acc.second > 0.0) {
        if (bins.empty()) bins.push_back(acc);
        else {
            bins.back().first += acc.first;
            bins.back().second += acc.second;
        }
    }
    if (bins.size() < 2) return 1.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
    double stat = 0.0;
    for (const auto& [oa, ob] : bins) {
        const double diff = ka * oa - kb * ob;
        stat += diff * diff / (oa + ob);
    }
    boost::math::chi_squared dist(static_cast<double>(bins.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Direct draws from the depth law using the standard library's samplers.
inline std::vector<long> direct_depths(DepthKind kind, double mu, double sigma, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<long> out(n);
    for (auto& x : out) {
        if (kind == DepthKind::poisson) {
            std::poisson_distribution<long> p(mu);
            x = std::max<long>(1, p(gen));
        } else {
            std::lognormal_distribution<double> ln(std::log(mu) - 0.5 * sigma * sigma, sigma);
            std::poisson_distribution<long> p(ln(gen));
            x = p(gen) + 1;
        }
    }
    return out;
}

/// Final state of one sequence run alone for T loops.
inline std::vector<double> standalone_state(const LoopedModel& m, const std::vector<int>& tokens, std::size_t seq_len,
                                            long T, const Tensor& h0) {
    NoGradGuard g;
    const auto out = parcae_forward(m, tokens, seq_len, T, h0);
    return {out.state.h.data().begin(), out.state.h.data().end()};
}

/// Gradient of the mean cross-entropy with the first n loops masked out, built
/// from two copies of the model: `frozen` runs the n masked loops (its
/// gradients are discarded) and `live` runs the remaining k loops on top of
/// the frozen state. Returns the live gradients in parameter order.
inline std::vector<std::vector<double>> masked_unroll_grads(const LoopedModel& live, const LoopedModel& frozen,
                                                            const std::vector<int>& inputs,
                                                            const std::vector<int>& targets, std::size_t seq_len,
                                                            const std::vector<long>& n, const std::vector<long>& k,
                                                            const Tensor& h0) {
    const std::size_t d = live.config.d, n_seqs = n.size();
    for (auto& p : live.parameters()) p.tensor.zero_grad();
    for (auto& p : frozen.parameters()) p.tensor.zero_grad();
    Tensor total;
    for (std::size_t i = 0; i < n_seqs; ++i) {
        const std::vector<int> in(inputs.begin() + i * seq_len, inputs.begin() + (i + 1) * seq_len);
        const std::vector<int> tg(targets.begin() + i * seq_len, targets.begin() + (i + 1) * seq_len);
        std::vector<double> h0v(h0.data().begin() + i * seq_len * d, h0.data().begin() + (i + 1) * seq_len * d);
        Tensor h = Tensor::from({seq_len, d}, h0v);
        const Tensor e_frozen = frozen.prelude_forward(in, seq_len);
        const Injection inj_frozen = frozen.injection();
        for (long t = 0; t < n[i]; ++t) h = frozen.recurrent_step(h, e_frozen, inj_frozen, seq_len);
        h = Tensor::from({seq_len, d}, std::vector<double>(h.data().begin(), h.data().end()));
        const Tensor e = live.prelude_forward(in, seq_len);
        const Injection inj = live.injection();
        for (long t = 0; t < k[i]; ++t) h = live.recurrent_step(h, e, inj, seq_len);
        const Tensor li = scale(cross_entropy(live.readout(h, seq_len), tg), 1.0 / static_cast<double>(n_seqs));
        total = total.defined() ? add(total, li) : li;
    }
    total.backward();
    std::vector<std::vector<double>> g;
    for (const auto& p : live.parameters()) {
        const auto* gr = p.tensor.grad();
        g.push_back(gr ? *gr : std::vector<double>(p.tensor.size(), 0.0));
    }
    return g;
}

inline std::vector<std::vector<double>> collect_grads(const LoopedModel& m) {
    std::vector<std::vector<double>> g;
    for (const auto& p : m.parameters()) {
        const auto* gr = p.tensor.grad();
        g.push_back(gr ? *gr : std::vector<double>(p.tensor.size(), 0.0));
    }
    return g;
}

/// Largest per-array relative difference max_j |a_j - b_j| / max_j |a_j|.
inline double max_rel_diff(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double scale = 0.0, diff = 0.0;
        for (std::size_t j = 0; j < a[i].size(); ++j) {
            scale = std::max({scale, std::abs(a[i][j]), std::abs(b[i][j])});
            diff = std::max(diff, std::abs(a[i][j] - b[i][j]));
        }
        if (scale > 0.0) worst = std::max(worst, diff / scale);
    }
    return worst;
}

}  // namespace looplab::oracle
