// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Stochastic-depth training with truncated backpropagation through the loop.
//
// A batch of b sequences loops T_max = max_i T_i times. Sequence i idles
// (keeps its state) for the first tau_i = T_max - T_i steps, then runs n_i
// steps whose results are detached, then k_i = min(T_i, mu_bwd) steps on the
// tape. Steps before the earliest gradient window run with recording off.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "looplab/autodiff/ops.hpp"
#include "looplab/depth_sampling.hpp"
#include "looplab/model.hpp"
#include "looplab/optim.hpp"
#include "looplab/rng.hpp"

namespace looplab {

struct TrainConfig {
    ModelConfig model;
    long mu_rec = 4;
    long mu_bwd = 0;  // 0: mu_bwd_rule(mu_rec)
    DepthKind depth_kind = DepthKind::poisson;
    double lognormal_sigma = 0.5;
    bool per_sequence = true;
    std::size_t batch_size = 8;
    std::size_t seq_len = 64;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-10;
    double weight_decay = 0.0;
    long steps = 1000;
    double grad_clip = 1.0;
    double cooldown_frac = 0.5;
    std::vector<long> eval_depths;  // empty: {1, mu_rec, 2 mu_rec}
    long log_interval = 10;
    long eval_interval = 0;          // 0: evaluate only at the end
    std::size_t eval_windows = 64;   // validation windows per evaluation
    long checkpoint_interval = 0;    // 0: only the final checkpoint
    double halt_state_norm = 0.0;    // > 0: halt when ||h_T|| exceeds it
    std::uint64_t seed = 0;

    long resolved_mu_bwd() const { return mu_bwd > 0 ? mu_bwd : mu_bwd_rule(mu_rec); }
    std::vector<long> resolved_eval_depths() const {
        return eval_depths.empty() ? std::vector<long>{1, mu_rec, 2 * mu_rec} : eval_depths;
    }
    DepthDistribution distribution() const { return {depth_kind, lognormal_sigma}; }

    void validate() const {
        model.validate();
        if (mu_rec < 1) throw std::invalid_argument("train: mu_rec must be >= 1");
        if (resolved_mu_bwd() > mu_rec) throw std::invalid_argument("train: mu_bwd must not exceed mu_rec");
        if (!(grad_clip > 0.0)) throw std::invalid_argument("train: grad_clip must be positive");
        if (batch_size == 0 || seq_len == 0) throw std::invalid_argument("train: empty batch");
        if (steps < 0) throw std::invalid_argument("train: negative step count");
        if (log_interval < 1) throw std::invalid_argument("train: log_interval must be >= 1");
    }
};

/// b sequences of seq_len inputs and their next-token targets, flattened.
struct Batch {
    std::vector<int> inputs, targets;
    std::size_t n_seqs = 0, seq_len = 0;
};

/// Random windows of seq_len + 1 tokens; window starts come from stream (seed, index).
inline Batch sample_batch(const std::vector<int>& tokens, std::size_t n_seqs, std::size_t seq_len, std::uint64_t seed,
                          std::uint64_t index) {
    if (tokens.size() < seq_len + 1) throw std::invalid_argument("sample_batch: corpus shorter than one window");
    Rng rng = Rng::stream(seed, index);
    Batch b;
    b.n_seqs = n_seqs;
    b.seq_len = seq_len;
    const std::uint64_t span = tokens.size() - seq_len;
    for (std::size_t i = 0; i < n_seqs; ++i) {
        const std::size_t start = rng.below(span);
        b.inputs.insert(b.inputs.end(), tokens.begin() + start, tokens.begin() + start + seq_len);
        b.targets.insert(b.targets.end(), tokens.begin() + start + 1, tokens.begin() + start + seq_len + 1);
    }
    return b;
}

struct ScheduledForward {
    Tensor logits;
    Tensor h_T;
    Tensor h_prev;  // state before the last loop (values only)
};

/// Runs the loop of a batch under `schedule`. Row r belongs to sequence r / seq_len.
inline ScheduledForward forward_scheduled(const LoopedModel& model, const std::vector<int>& inputs, std::size_t seq_len,
                                          const DepthSchedule& schedule, const Tensor& h0) {
    const std::size_t rows = inputs.size();
    if (schedule.size() * seq_len != rows) throw std::invalid_argument("forward_scheduled: schedule does not fit batch");
    const Tensor e = model.prelude_forward(inputs, seq_len);
    if (h0.shape() != e.shape()) throw std::invalid_argument("forward_scheduled: h0 shape does not match e");
    const Injection inj = model.injection();
    const long g0 = schedule.grad_start();

    Tensor h = h0, h_prev = h0;
    std::vector<bool> active(rows), frozen(rows);
    for (long t = 0; t < schedule.T_max; ++t) {
        bool all_active = true, any_frozen = false;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t i = r / seq_len;
            active[r] = schedule.active(i, t);
            frozen[r] = !schedule.grad_step(i, t);
            all_active = all_active && active[r];
            any_frozen = any_frozen || frozen[r];
        }
        h_prev = h;
        if (t < g0) {
            NoGradGuard no_grad;
            const Tensor next = model.recurrent_step(h, e, inj, seq_len);
            h = all_active ? next : where_rows(active, next, h);
            continue;
        }
        const Tensor next = model.recurrent_step(h, e, inj, seq_len);
        Tensor merged = all_active ? next : where_rows(active, next, h);
        if (any_frozen) merged = where_rows(frozen, merged.detach(), merged);
        h = merged;
    }
    return {model.readout(h, seq_len), h, h_prev.detach()};
}

/// Fixed-depth schedule: every sequence loops T times with the final min(T, mu_bwd) on the tape.
inline DepthSchedule uniform_schedule(std::size_t n_seqs, long T, long mu_bwd) {
    return make_schedule(std::vector<long>(n_seqs, T), mu_bwd);
}

struct StepStats {
    double loss = 0.0;
    double grad_norm = 0.0;       // before clipping
    double state_norm = 0.0;      // mean per-row ||h_T||
    double residual = 0.0;        // mean per-row ||h_T - h_{T-1}||
};

/// Forward + backward; gradients are left in the parameters.
inline StepStats loss_and_grads(const LoopedModel& model, const Batch& batch, const DepthSchedule& schedule,
                                const Tensor& h0) {
    const auto fwd = forward_scheduled(model, batch.inputs, batch.seq_len, schedule, h0);
    const Tensor loss = cross_entropy(fwd.logits, batch.targets);
    StepStats s;
    s.loss = loss.item();
    s.state_norm = state_norm(fwd.h_T);
    s.residual = recurrent_residual(fwd.h_T.detach(), fwd.h_prev);
    loss.backward();
    return s;
}

/// loss_and_grads, then clip and one optimizer update.
inline StepStats train_step(LoopedModel& model, Adam& opt, const Batch& batch, const DepthSchedule& schedule,
                            const Tensor& h0, double lr, double clip) {
    opt.zero_grad();
    StepStats s = loss_and_grads(model, batch, schedule, h0);
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) params.push_back(p.tensor);
    s.grad_norm = clip_grad_norm(params, clip);
    if (!std::isfinite(s.grad_norm)) throw NonFiniteError("non-finite gradient norm");
    opt.step(lr);
    return s;
}

/// Mean next-token cross-entropy at fixed depth T over evenly spaced windows of `tokens`.
/// h0 comes from a fixed seed, so repeated calls agree exactly.
inline double evaluate(const LoopedModel& model, const std::vector<int>& tokens, long T, std::size_t seq_len,
                       std::size_t max_windows = 64, std::size_t batch_size = 16, std::uint64_t h0_seed = 0xe7a1) {
    if (T < 1) throw std::invalid_argument("evaluate: T must be >= 1");
    if (tokens.size() < seq_len + 1) throw std::invalid_argument("evaluate: corpus shorter than one window");
    const std::size_t available = (tokens.size() - 1) / seq_len;
    const std::size_t n = std::max<std::size_t>(1, std::min(max_windows, available));
    const std::size_t stride = (tokens.size() - 1 - seq_len) / std::max<std::size_t>(1, n - 1);
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t w0 = 0; w0 < n; w0 += batch_size) {
        const std::size_t nb = std::min(batch_size, n - w0);
        Batch b;
        b.n_seqs = nb;
        b.seq_len = seq_len;
        for (std::size_t w = w0; w < w0 + nb; ++w) {
            const std::size_t start = n == 1 ? 0 : w * stride;
            b.inputs.insert(b.inputs.end(), tokens.begin() + start, tokens.begin() + start + seq_len);
            b.targets.insert(b.targets.end(), tokens.begin() + start + 1, tokens.begin() + start + seq_len + 1);
        }
        const Tensor h0 = init_state_batch(nb, seq_len, model.config.d, model.config.state_sigma(), h0_seed, w0);
        const auto out = parcae_forward(model, b.inputs, seq_len, T, h0);
        total += cross_entropy(out.logits, b.targets).item() * static_cast<double>(nb);
    }
    return total / static_cast<double>(n);
}

struct MetricRecord {
    long step = 0;
    double loss = 0.0;
    double state_norm = 0.0;
    double residual = 0.0;
    double rho = 0.0;
    double lr = 0.0;
    std::uint64_t tokens = 0;
    double grad_norm = 0.0;
};

struct EvalRecord {
    long step = 0;
    long T = 0;
    double loss = 0.0;
};

struct TrainHooks {
    std::function<void(const MetricRecord&)> on_metric;
    std::function<void(const EvalRecord&)> on_eval;
    std::function<void(const DepthSchedule&, long step)> on_schedule;
    /// reason: "periodic", "final" or "halt".
    std::function<void(const LoopedModel&, long step, const std::string& reason)> on_checkpoint;
};

struct TrainResult {
    std::vector<MetricRecord> metrics;
    std::vector<EvalRecord> evals;
    long steps_done = 0;
    bool halted = false;
    std::string halt_reason;
    double max_state_norm = 0.0;
    double rho_at_end = 0.0;
};

/// Stream ids used by a run; all derived from the config seed.
struct RunStreams {
    std::uint64_t batches, depths, states;
    explicit RunStreams(std::uint64_t seed)
        : batches(splitmix64(seed ^ 0xba7c4ULL)), depths(splitmix64(seed ^ 0xde97bULL)), states(splitmix64(seed ^ 0x57a7eULL)) {}
};

/// The depth schedule run_training uses at `step`.
inline DepthSchedule step_schedule(const TrainConfig& cfg, long step) {
    const RunStreams streams(cfg.seed);
    return build_schedule(cfg.batch_size, cfg.mu_rec, cfg.resolved_mu_bwd(), cfg.distribution(), streams.depths,
                          static_cast<std::uint64_t>(step) * cfg.batch_size, cfg.per_sequence);
}

inline TrainResult run_training(const TrainConfig& cfg, LoopedModel& model, const std::vector<int>& train_tokens,
                                const std::vector<int>& val_tokens, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train_tokens.size() < cfg.seq_len + 1) throw std::invalid_argument("train: training corpus is too short");
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) params.push_back(p.tensor);
    Adam opt(params, {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
    const RunStreams streams(cfg.seed);
    const auto depths = cfg.resolved_eval_depths();
    TrainResult res;

    auto run_evals = [&](long step) {
        if (val_tokens.size() < cfg.seq_len + 1) return;
        for (long T : depths) {
            EvalRecord r{step, T, evaluate(model, val_tokens, T, cfg.seq_len, cfg.eval_windows)};
            res.evals.push_back(r);
            if (hooks.on_eval) hooks.on_eval(r);
        }
    };
    auto halt = [&](long step, const std::string& why) {
        res.halted = true;
        res.halt_reason = why;
        res.steps_done = step;
        if (hooks.on_checkpoint) hooks.on_checkpoint(model, step, "halt");
    };

    const std::uint64_t tokens_per_step = cfg.batch_size * cfg.seq_len;
    for (long step = 0; step < cfg.steps; ++step) {
        const std::uint64_t first = static_cast<std::uint64_t>(step) * cfg.batch_size;
        const Batch batch = sample_batch(train_tokens, cfg.batch_size, cfg.seq_len, streams.batches, step);
        const DepthSchedule schedule = step_schedule(cfg, step);
        if (hooks.on_schedule) hooks.on_schedule(schedule, step);
        const Tensor h0 = init_state_batch(cfg.batch_size, cfg.seq_len, cfg.model.d, cfg.model.state_sigma(),
                                           streams.states, first);
        const double lr = lr_at(step, cfg.steps, cfg.lr, cfg.cooldown_frac);
        StepStats s;
        try {
            s = train_step(model, opt, batch, schedule, h0, lr, cfg.grad_clip);
        } catch (const NonFiniteError& err) {
            res.max_state_norm = std::numeric_limits<double>::infinity();
            MetricRecord r{step, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::quiet_NaN(), model.injection_rho(), lr,
                           (static_cast<std::uint64_t>(step) + 1) * tokens_per_step, 0.0};
            res.metrics.push_back(r);
            if (hooks.on_metric) hooks.on_metric(r);
            res.rho_at_end = r.rho;
            halt(step, std::string("non-finite: ") + err.what());
            return res;
        }
        res.max_state_norm = std::max(res.max_state_norm, s.state_norm);
        const bool over = cfg.halt_state_norm > 0.0 && !(s.state_norm <= cfg.halt_state_norm);
        if ((step + 1) % cfg.log_interval == 0 || step + 1 == cfg.steps || over) {
            MetricRecord r{step + 1, s.loss, s.state_norm, s.residual, model.injection_rho(), lr,
                           (static_cast<std::uint64_t>(step) + 1) * tokens_per_step, s.grad_norm};
            res.metrics.push_back(r);
            if (hooks.on_metric) hooks.on_metric(r);
        }
        if (over) {
            res.rho_at_end = model.injection_rho();
            halt(step + 1, "state norm " + std::to_string(s.state_norm) + " above limit");
            return res;
        }
        if (cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0 && step + 1 != cfg.steps) run_evals(step + 1);
        if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 && step + 1 != cfg.steps &&
            hooks.on_checkpoint)
            hooks.on_checkpoint(model, step + 1, "periodic");
    }
    res.steps_done = cfg.steps;
    res.rho_at_end = model.injection_rho();
    run_evals(cfg.steps);
    if (hooks.on_checkpoint) hooks.on_checkpoint(model, cfg.steps, "final");
    return res;
}

}  // namespace looplab
