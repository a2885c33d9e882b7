// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "looplab/depth_sampling.hpp"
#include "oracles.hpp"

using namespace looplab;

namespace {

std::vector<long> corrected_depths(DepthKind kind, long mu_rec, long mu_bwd, std::size_t n, std::uint64_t seed) {
    const DepthDistribution dist{kind, 0.5};
    std::vector<long> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::stream(seed, i);
        out[i] = sample_corrected(mu_rec, mu_bwd, dist, rng).T;
    }
    return out;
}

double mean(const std::vector<long>& v) {
    return static_cast<double>(std::accumulate(v.begin(), v.end(), 0L)) / static_cast<double>(v.size());
}

}  // namespace

TEST(MuBwdRule, Ceiling) {
    EXPECT_EQ(mu_bwd_rule(8), 4);
    EXPECT_EQ(mu_bwd_rule(1), 1);
    EXPECT_EQ(mu_bwd_rule(7), 4);
    EXPECT_THROW(mu_bwd_rule(0), std::invalid_argument);
}

TEST(DepthDistribution, SamplesAreAtLeastOne) {
    Rng rng(3);
    for (auto kind : {DepthKind::poisson, DepthKind::poisson_lognormal}) {
        const DepthDistribution dist{kind, 0.5};
        for (int i = 0; i < 20000; ++i) EXPECT_GE(dist.sample(0.3, rng), 1);
    }
}

TEST(SampleBaseline, KIsForced) {
    Rng rng(5);
    const DepthDistribution dist{DepthKind::poisson_lognormal, 0.5};
    for (int i = 0; i < 1000; ++i) {
        const auto s = sample_baseline(8, 4, dist, rng);
        EXPECT_EQ(s.k, 4);
        EXPECT_EQ(s.T, s.n + s.k);
    }
    EXPECT_THROW(sample_baseline(4, 4, dist, rng), std::invalid_argument);
}

TEST(SampleBaseline, LognormalFloorIsMuBwdPlusOne) {
    Rng rng(6);
    const DepthDistribution dist{DepthKind::poisson_lognormal, 0.5};
    long lo = 1000;
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const auto s = sample_baseline(8, 4, dist, rng);
        lo = std::min(lo, s.T);
        sum += static_cast<double>(s.T);
    }
    EXPECT_GE(lo, 5);
    // The shift moves the mean away from mu_rec: E[T] = (mu_rec - mu_bwd) + 1 + mu_bwd.
    EXPECT_GT(std::abs(sum / 100000.0 - 8.0), 0.5);
}

TEST(SampleCorrected, SplitFormulas) {
    EXPECT_EQ(split_depth(3, 4).n, 0);
    EXPECT_EQ(split_depth(3, 4).k, 3);
    EXPECT_EQ(split_depth(10, 4).n, 6);
    EXPECT_EQ(split_depth(10, 4).k, 4);
}

TEST(SampleCorrected, PoissonMeanMatches) {
    const auto T = corrected_depths(DepthKind::poisson, 8, 4, 100000, 11);
    EXPECT_NEAR(mean(T), 8.0, 0.05);
}

TEST(SampleCorrected, LognormalMeanMatches) {
    // E[Poisson(e^tau)] = mu for tau ~ N(ln mu - s^2/2, s); the +1 shift adds one.
    const auto T = corrected_depths(DepthKind::poisson_lognormal, 8, 4, 100000, 12);
    EXPECT_NEAR(mean(T), 9.0, 0.06);
}

TEST(SampleCorrected, ChiSquareAgainstDirectSampler) {
    for (auto kind : {DepthKind::poisson, DepthKind::poisson_lognormal}) {
        const auto ours = corrected_depths(kind, 8, 4, 100000, 21);
        const auto ref = oracle::direct_depths(kind, 8.0, 0.5, 100000, 22);
        EXPECT_GT(oracle::two_sample_chi_square(ours, ref), 0.01) << depth_kind_name(kind);
    }
}

TEST(SampleCorrected, ChiSquareRejectsBaseline) {
    // Sanity check on the test itself: the shifted sampler is a different law.
    Rng rng(9);
    const DepthDistribution dist{DepthKind::poisson, 0.5};
    std::vector<long> base(100000);
    for (auto& t : base) t = sample_baseline(8, 4, dist, rng).T;
    const auto ref = oracle::direct_depths(DepthKind::poisson, 8.0, 0.5, 100000, 22);
    EXPECT_LT(oracle::two_sample_chi_square(base, ref), 1e-6);
}

TEST(SampleCorrected, EmitsShortDepths) {
    const auto T = corrected_depths(DepthKind::poisson_lognormal, 8, 4, 100000, 13);
    const auto shallow = std::count_if(T.begin(), T.end(), [](long t) { return t <= 4; });
    EXPECT_GT(shallow, 0);
    for (long t : T) {
        const auto s = split_depth(t, 4);
        EXPECT_GE(s.k, 1);
        EXPECT_EQ(s.n + s.k, s.T);
    }
}

TEST(BuildSchedule, SingleSequenceHasNoIdle) {
    const DepthDistribution dist;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = build_schedule(1, 8, 4, dist, seed);
        EXPECT_EQ(s.seqs[0].tau, 0);
    }
}

TEST(BuildSchedule, EqualDepthsHaveNoIdle) {
    const auto s = make_schedule({5, 5, 5, 5}, 3);
    for (const auto& q : s.seqs) EXPECT_EQ(q.tau, 0);
    EXPECT_EQ(s.grad_start(), 2);
}

TEST(BuildSchedule, GradientStepsAreTheFinalK) {
    const DepthDistribution dist{DepthKind::poisson, 0.5};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = build_schedule(8, 8, 4, dist, seed);
        long tmax = 0;
        for (const auto& q : s.seqs) tmax = std::max(tmax, q.T);
        EXPECT_EQ(s.T_max, tmax);
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto& q = s.seqs[i];
            EXPECT_EQ(q.n + q.k, q.T);
            EXPECT_LE(q.k, 4);
            EXPECT_EQ(q.tau, s.T_max - q.T);
            long active = 0, grad = 0, last_nograd = -1, first_grad = s.T_max;
            for (long t = 0; t < s.T_max; ++t) {
                if (!s.active(i, t)) {
                    EXPECT_LT(t, q.tau);
                    EXPECT_FALSE(s.grad_step(i, t));
                    continue;
                }
                ++active;
                if (s.grad_step(i, t)) {
                    ++grad;
                    first_grad = std::min(first_grad, t);
                } else {
                    last_nograd = t;
                }
            }
            EXPECT_EQ(active, q.T);
            EXPECT_EQ(grad, q.k);
            EXPECT_EQ(first_grad, s.T_max - q.k);
            EXPECT_LT(last_nograd, first_grad);
        }
    }
}

TEST(BuildSchedule, PerMicroBatchSharesOneDepth) {
    const DepthDistribution dist;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = build_schedule(8, 8, 4, dist, seed, 0, false);
        for (const auto& q : s.seqs) {
            EXPECT_EQ(q.T, s.seqs[0].T);
            EXPECT_EQ(q.tau, 0);
        }
    }
}

TEST(BuildSchedule, ReplaysExactly) {
    const DepthDistribution dist{DepthKind::poisson_lognormal, 0.5};
    const auto a = build_schedule(8, 6, 3, dist, 99, 40);
    const auto b = build_schedule(8, 6, 3, dist, 99, 40);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.seqs[i].T, b.seqs[i].T);
    // A sequence's depth depends only on its stream index.
    const auto c = build_schedule(4, 6, 3, dist, 99, 44);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.seqs[4 + i].T, c.seqs[i].T);
}

TEST(Schedule, BatchedRunMatchesStandaloneBitwise) {
    LoopedModel m(oracle::tiny_config(InjectionMode::parcae_diagonal, 32));
    oracle::perturb(m, 4, 0.05);
    const std::size_t L = 6;
    const auto sched = make_schedule({1, 3, 7, 2, 5, 7, 4, 6}, 3);
    Rng rng(8);
    const auto tokens = oracle::random_tokens(8 * L, rng);
    const Tensor h0 = init_state_batch(8, L, 32, m.config.state_sigma(), 17);
    std::vector<double> batched;
    {
        NoGradGuard g;
        const auto out = forward_scheduled(m, tokens, L, sched, h0);
        batched.assign(out.h_T.data().begin(), out.h_T.data().end());
    }
    for (std::size_t i = 0; i < 8; ++i) {
        const std::vector<int> tok(tokens.begin() + i * L, tokens.begin() + (i + 1) * L);
        const Tensor h0i = init_state_batch(1, L, 32, m.config.state_sigma(), 17, i);
        const auto alone = oracle::standalone_state(m, tok, L, sched.seqs[i].T, h0i);
        const std::vector<double> mine(batched.begin() + i * L * 32, batched.begin() + (i + 1) * L * 32);
        EXPECT_EQ(mine, alone) << "sequence " << i;
    }
}

TEST(Schedule, BatchedRunWithGradientsMatchesStandaloneBitwise) {
    LoopedModel m(oracle::tiny_config(InjectionMode::concatenation, 16));
    oracle::perturb(m, 5, 0.05);
    const std::size_t L = 5;
    DepthDistribution dist{DepthKind::poisson, 0.5};
    const auto sched = build_schedule(8, 4, 2, dist, 31);
    Rng rng(9);
    const auto tokens = oracle::random_tokens(8 * L, rng);
    const Tensor h0 = init_state_batch(8, L, 16, m.config.state_sigma(), 18);
    const auto out = forward_scheduled(m, tokens, L, sched, h0);
    for (std::size_t i = 0; i < 8; ++i) {
        const std::vector<int> tok(tokens.begin() + i * L, tokens.begin() + (i + 1) * L);
        const Tensor h0i = init_state_batch(1, L, 16, m.config.state_sigma(), 18, i);
        const auto alone = oracle::standalone_state(m, tok, L, sched.seqs[i].T, h0i);
        const std::vector<double> mine(out.h_T.data().begin() + i * L * 16, out.h_T.data().begin() + (i + 1) * L * 16);
        EXPECT_EQ(mine, alone) << "sequence " << i;
    }
}
