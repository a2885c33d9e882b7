// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Effective parameters and training FLOPs of a looped model.
//
// Counting convention:
//   - The input embedding is excluded; the tied unembedding (V x d) is included.
//   - Every other trainable scalar counts as one parameter, including RMSNorm
//     gains and the injection parameters (log_A, delta_raw, B, C or W).
//   - A parameter costs 2 FLOPs per token forward and 4 more backward, so loops
//     outside the gradient window cost 2 per parameter and all else costs 6.
//   - Attention score and value products, per token and per layer application:
//     forward 2 (seq_len + 1) d (the causal triangle, QK^T plus PV, 2 FLOPs per
//     multiply-accumulate), backward twice that. Layers outside the gradient
//     window pay the forward only.
//   - Variable depth enters through its means mu_rec and mu_bwd.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "looplab/model.hpp"

namespace looplab {

struct EffectiveParams {
    double per_loop = 0.0;      // one application of the recurrent unit plus its injection
    double prelude_coda = 0.0;  // everything outside the loop that counts
    double effective = 0.0;     // prelude_coda + mu_rec * per_loop

    double recurrent() const { return effective - prelude_coda; }
};

inline double block_param_count(const ModelConfig& c) {
    const double d = static_cast<double>(c.d), dff = static_cast<double>(c.d_ff());
    return 2.0 * d + 4.0 * d * d + 2.0 * d * dff;
}

inline double injection_param_count(const ModelConfig& c) {
    const double d = static_cast<double>(c.d);
    switch (c.mode) {
        case InjectionMode::parcae_diagonal: return 2.0 * d + d * d;  // log_A, delta_raw, B
        case InjectionMode::concatenation: return 2.0 * d * d;
        case InjectionMode::addition: return 0.0;
    }
    return 0.0;
}

inline EffectiveParams effective_params(const ModelConfig& c, double mu_rec) {
    c.validate();
    if (!(mu_rec >= 0.0)) throw std::invalid_argument("effective_params: mu_rec must be nonnegative");
    const double d = static_cast<double>(c.d), V = static_cast<double>(c.vocab);
    EffectiveParams p;
    p.per_loop = static_cast<double>(c.recurrent_layers) * block_param_count(c) + injection_param_count(c);
    p.prelude_coda = static_cast<double>(c.prelude_layers + c.coda_layers) * block_param_count(c) + d  // final norm
                     + (c.prelude_norm ? d : 0.0) + (c.mode == InjectionMode::parcae_diagonal ? d * d : 0.0)  // C
                     + V * d;  // unembedding
    p.effective = p.prelude_coda + mu_rec * p.per_loop;
    return p;
}

struct FlopBudget {
    double N_hat1 = 0.0;  // effective parameters outside the gradient window
    double N_hat2 = 0.0;  // effective parameters inside it
    double D = 0.0;       // training tokens
    double attention = 0.0;
    double total = 0.0;
};

/// Attention FLOPs per training token.
inline double attention_flops_per_token(const ModelConfig& c, double mu_rec, double mu_bwd, double seq_len) {
    const double fwd = 2.0 * (seq_len + 1.0) * static_cast<double>(c.d);
    const double lr = static_cast<double>(c.recurrent_layers);
    const double nograd_layers = (mu_rec - mu_bwd) * lr;
    const double grad_layers = static_cast<double>(c.prelude_layers + c.coda_layers) + mu_bwd * lr;
    return fwd * (nograd_layers + 3.0 * grad_layers);
}

inline FlopBudget training_flops(const ModelConfig& c, double mu_rec, double mu_bwd, double D, double seq_len) {
    if (!(mu_bwd >= 0.0 && mu_bwd <= mu_rec)) throw std::invalid_argument("training_flops: needs 0 <= mu_bwd <= mu_rec");
    if (!(D >= 0.0)) throw std::invalid_argument("training_flops: D must be nonnegative");
    if (!(seq_len >= 1.0)) throw std::invalid_argument("training_flops: seq_len must be >= 1");
    const auto p = effective_params(c, mu_rec);
    FlopBudget b;
    b.N_hat1 = (mu_rec - mu_bwd) * p.per_loop;
    b.N_hat2 = p.prelude_coda + mu_bwd * p.per_loop;
    b.D = D;
    b.attention = attention_flops_per_token(c, mu_rec, mu_bwd, seq_len) * D;
    b.total = (2.0 * b.N_hat1 + 6.0 * b.N_hat2) * D + b.attention;
    return b;
}

inline double flops_per_token(const ModelConfig& c, double mu_rec, double mu_bwd, double seq_len) {
    return training_flops(c, mu_rec, mu_bwd, 1.0, seq_len).total;
}

/// Token count D with training_flops(c, mu_rec, mu_bwd, D, seq_len).total = budget.
inline double tokens_for_budget(const ModelConfig& c, double mu_rec, double mu_bwd, double seq_len, double budget) {
    if (!(budget > 0.0)) throw std::invalid_argument("tokens_for_budget: budget must be positive");
    return budget / flops_per_token(c, mu_rec, mu_bwd, seq_len);
}

struct IsoflopCell {
    double budget = 0.0;
    long mu_rec = 0;
    long mu_bwd = 0;
    double tokens = 0.0;      // exact solution
    double tokens_rounded = 0.0;  // whole tokens
    double repriced = 0.0;    // training_flops at tokens_rounded
    double steps = 0.0;       // tokens_rounded / tokens_per_step, when tokens_per_step > 0
};

/// One cell per (budget, mu_rec); mu_bwd follows mu_bwd_fn.
template <typename MuBwd>
std::vector<IsoflopCell> isoflop_plan(const ModelConfig& c, const std::vector<double>& budgets,
                                      const std::vector<long>& mu_recs, double seq_len, MuBwd mu_bwd_fn,
                                      double tokens_per_step = 0.0) {
    std::vector<IsoflopCell> cells;
    for (double F : budgets)
        for (long mu : mu_recs) {
            IsoflopCell cell;
            cell.budget = F;
            cell.mu_rec = mu;
            cell.mu_bwd = mu_bwd_fn(mu);
            cell.tokens = tokens_for_budget(c, static_cast<double>(mu), static_cast<double>(cell.mu_bwd), seq_len, F);
            cell.tokens_rounded = std::max(1.0, std::round(cell.tokens));
            cell.repriced = training_flops(c, static_cast<double>(mu), static_cast<double>(cell.mu_bwd),
                                           cell.tokens_rounded, seq_len)
                                .total;
            if (tokens_per_step > 0.0) cell.steps = cell.tokens_rounded / tokens_per_step;
            cells.push_back(cell);
        }
    return cells;
}

}  // namespace looplab
