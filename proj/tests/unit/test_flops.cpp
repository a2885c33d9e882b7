// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "looplab/flops.hpp"
#include "oracles.hpp"

using namespace looplab;

namespace {

ModelConfig cfg(InjectionMode mode, std::size_t d = 8) {
    ModelConfig c;
    c.d = d;
    c.n_heads = 2;
    c.mode = mode;
    return c;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

// Walks the model's own arrays: loop-owned arrays are counted mu_rec times,
// the embedding once (as the unembedding), the rest once.
double brute_force_effective(const ModelConfig& c, double mu_rec, double* per_loop_out = nullptr) {
    LoopedModel m(c);
    double per_loop = 0.0, rest = 0.0;
    for (const auto& p : m.parameters()) {
        const double n = static_cast<double>(p.tensor.size());
        const bool in_loop = starts_with(p.name, "recurrent.") || p.name == "injection.log_A" ||
                             p.name == "injection.delta_raw" || p.name == "injection.B" || p.name == "injection.W";
        (in_loop ? per_loop : rest) += n;
    }
    if (per_loop_out) *per_loop_out = per_loop;
    return rest + mu_rec * per_loop;
}

// FLOPs counted by the instrumented matmul and attention kernels over one
// forward/backward of `n_seqs` sequences at fixed depth.
FlopCounter instrumented(const ModelConfig& c, std::size_t n_seqs, std::size_t L, long T, long k) {
    LoopedModel m(c);
    Rng rng(3);
    const auto tokens = oracle::random_tokens(n_seqs * L, rng);
    const auto targets = oracle::random_tokens(n_seqs * L, rng);
    const Tensor h0 = init_state_batch(n_seqs, L, c.d, 0.3, 4);
    FlopCounter counter;
    {
        FlopScope scope(counter);
        const auto out = forward_scheduled(m, tokens, L, uniform_schedule(n_seqs, T, k), h0);
        cross_entropy(out.logits, targets).backward();
    }
    return counter;
}

}  // namespace

TEST(EffectiveParams, TenLoopsOfOneLayerIsTenN) {
    auto c = cfg(InjectionMode::addition, 16);
    c.prelude_layers = 0;
    c.coda_layers = 0;
    double N = 0.0;
    brute_force_effective(c, 1.0, &N);
    const auto p = effective_params(c, 10.0);
    EXPECT_EQ(p.per_loop, N);
    EXPECT_EQ(p.recurrent(), 10.0 * N);
}

TEST(EffectiveParams, OneLoopIsUnsharedCount) {
    for (auto mode : {InjectionMode::addition, InjectionMode::concatenation, InjectionMode::parcae_diagonal}) {
        const auto c = cfg(mode);
        LoopedModel m(c);
        const double unshared = static_cast<double>(m.parameter_count());  // includes the embedding once
        EXPECT_EQ(effective_params(c, 1.0).effective, unshared) << mode_name(mode);
    }
}

TEST(EffectiveParams, MatchesBruteForceEnumeration) {
    for (auto mode : {InjectionMode::addition, InjectionMode::concatenation, InjectionMode::parcae_diagonal})
        for (double mu : {1.0, 3.0, 8.0}) {
            auto c = cfg(mode);
            c.recurrent_layers = 2;
            c.prelude_norm = mode != InjectionMode::addition;
            EXPECT_EQ(effective_params(c, mu).effective, brute_force_effective(c, mu)) << mode_name(mode) << mu;
        }
}

TEST(TrainingFlops, NoTruncationIsSixND) {
    const auto c = cfg(InjectionMode::parcae_diagonal, 16);
    const auto b = training_flops(c, 6, 6, 1e6, 64);
    EXPECT_EQ(b.N_hat1, 0.0);
    EXPECT_DOUBLE_EQ(b.total, 6.0 * effective_params(c, 6).effective * 1e6 + b.attention);
}

TEST(TrainingFlops, HalfTruncationGivesFourND) {
    const auto c = cfg(InjectionMode::parcae_diagonal, 16);
    const auto p = effective_params(c, 8);
    const auto b = training_flops(c, 8, 4, 1e6, 64);
    const double recurrent_matmul = b.total - b.attention - 6.0 * p.prelude_coda * 1e6;
    EXPECT_DOUBLE_EQ(recurrent_matmul, 4.0 * p.recurrent() * 1e6);
}

TEST(TrainingFlops, TotalIsSumOfParts) {
    const auto c = cfg(InjectionMode::concatenation, 16);
    const auto b = training_flops(c, 5, 2, 3e5, 32);
    EXPECT_DOUBLE_EQ(b.total, (2 * b.N_hat1 + 6 * b.N_hat2) * b.D + b.attention);
    EXPECT_GE(b.N_hat1, 0.0);
    EXPECT_GE(b.attention, 0.0);
    EXPECT_THROW(training_flops(c, 2, 3, 1, 32), std::invalid_argument);
}

TEST(TrainingFlops, WithinTwoPercentOfInstrumentedCounter) {
    for (auto mode : {InjectionMode::parcae_diagonal, InjectionMode::concatenation, InjectionMode::addition})
        for (auto [T, k] : {std::pair<long, long>{4, 2}, {3, 3}, {5, 1}}) {
            const auto c = cfg(mode, 16);
            const auto counted = instrumented(c, 20, 50, T, k);
            const auto b = training_flops(c, T, k, 1000, 50);
            const double rel = std::abs(b.total - static_cast<double>(counted.total())) / b.total;
            EXPECT_LT(rel, 0.02) << mode_name(mode) << " T=" << T << " k=" << k;
            const double attn_fwd = 2.0 * 51.0 * 16.0 * 1000.0 * static_cast<double>(T + 2);
            EXPECT_GT(static_cast<double>(counted.forward), attn_fwd);
        }
}

TEST(TrainingFlops, MonotoneInEveryKnob) {
    const auto base = cfg(InjectionMode::parcae_diagonal, 16);
    const double f0 = training_flops(base, 4, 2, 1e6, 64).total;
    EXPECT_LT(f0, training_flops(base, 5, 2, 1e6, 64).total);
    EXPECT_LT(f0, training_flops(base, 4, 3, 1e6, 64).total);
    EXPECT_LT(f0, training_flops(base, 4, 2, 2e6, 64).total);
    EXPECT_LT(f0, training_flops(base, 4, 2, 1e6, 65).total);
    auto wider = base;
    wider.d = 20;
    EXPECT_LT(f0, training_flops(wider, 4, 2, 1e6, 64).total);
    for (auto knob : {&ModelConfig::prelude_layers, &ModelConfig::recurrent_layers, &ModelConfig::coda_layers,
                      &ModelConfig::mlp_ratio, &ModelConfig::vocab}) {
        auto c = base;
        c.*knob += 1;
        EXPECT_LT(f0, training_flops(c, 4, 2, 1e6, 64).total);
    }
}

TEST(Isoflop, InversionRepricesWithinTenthPercent) {
    const auto c = cfg(InjectionMode::parcae_diagonal, 64);
    const auto cells = isoflop_plan(c, {1e15, 3e15, 1e16}, {1, 2, 4, 6, 8, 12}, 256, mu_bwd_rule);
    ASSERT_EQ(cells.size(), 18u);
    for (const auto& cell : cells) {
        EXPECT_NEAR(cell.repriced / cell.budget, 1.0, 1e-3);
        EXPECT_NEAR(training_flops(c, cell.mu_rec, cell.mu_bwd, cell.tokens, 256).total / cell.budget, 1.0, 1e-12);
    }
}

TEST(Isoflop, MoreLoopsFewerTokens) {
    const auto c = cfg(InjectionMode::parcae_diagonal, 64);
    const auto cells = isoflop_plan(c, {1e16}, {1, 2, 4, 8, 16}, 256, mu_bwd_rule);
    for (std::size_t i = 1; i < cells.size(); ++i) EXPECT_LT(cells[i].tokens, cells[i - 1].tokens);
    EXPECT_EQ(isoflop_plan(c, {1e16}, {4}, 256, mu_bwd_rule).size(), 1u);
}
