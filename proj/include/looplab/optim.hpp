// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam with decoupled weight decay, global-norm gradient clipping and the
// constant-then-linear-cooldown learning-rate schedule.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "looplab/autodiff/tensor.hpp"

namespace looplab {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-10;
    double weight_decay = 0.0;
};

struct AdamSlot {
    std::vector<double> m, v;
};

/// One decoupled-weight-decay Adam update of `param` in place. `step` is 1-based.
inline void adam_update(std::span<double> param, const std::vector<double>& grad, AdamSlot& slot, long step,
                        const AdamHyper& h) {
    if (grad.size() != param.size()) throw std::invalid_argument("adam_update: gradient shape mismatch");
    if (slot.m.empty()) {
        slot.m.assign(param.size(), 0.0);
        slot.v.assign(param.size(), 0.0);
    }
    if (slot.m.size() != param.size()) throw std::invalid_argument("adam_update: state shape mismatch");
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        slot.m[i] = h.beta1 * slot.m[i] + (1.0 - h.beta1) * grad[i];
        slot.v[i] = h.beta2 * slot.v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        param[i] -= h.lr * h.weight_decay * param[i];
        param[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
}

class Adam {
   public:
    Adam(std::vector<Tensor> params, AdamHyper hyper) : params_(std::move(params)), hyper_(hyper), slots_(params_.size()) {}

    /// Applies one update with learning rate `lr`; parameters without a gradient are left alone.
    void step(double lr) {
        ++t_;
        AdamHyper h = hyper_;
        h.lr = lr;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto* g = params_[i].grad();
            if (!g) continue;
            adam_update(params_[i].mutable_data(), *g, slots_[i], t_, h);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    long steps() const { return t_; }
    const AdamHyper& hyper() const { return hyper_; }
    std::vector<AdamSlot>& slots() { return slots_; }
    const std::vector<AdamSlot>& slots() const { return slots_; }
    void set_steps(long t) { t_ = t; }

   private:
    std::vector<Tensor> params_;
    AdamHyper hyper_;
    std::vector<AdamSlot> slots_;
    long t_ = 0;
};

inline double global_grad_norm(const std::vector<Tensor>& params) {
    double ss = 0.0;
    for (const auto& p : params)
        if (const auto* g = p.grad())
            for (double x : *g) ss += x * x;
    return std::sqrt(ss);
}

/// Rescales all gradients so their global l2 norm is at most max_norm. Returns the pre-clip norm.
inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: threshold must be positive");
    const double norm = global_grad_norm(params);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params)
            if (auto* g = p.mutable_grad())
                for (double& x : *g) x *= s;
    }
    return norm;
}

/// Constant rate, then a linear ramp to zero over the final `cooldown_frac` of the steps.
/// `step` counts from 0.
inline double lr_at(long step, long total_steps, double base_lr, double cooldown_frac) {
    const double cool = cooldown_frac * static_cast<double>(total_steps);
    const double start = static_cast<double>(total_steps) - cool;
    if (cool <= 0.0 || static_cast<double>(step) < start) return base_lr;
    return base_lr * std::max(0.0, (static_cast<double>(total_steps) - static_cast<double>(step)) / cool);
}

}  // namespace looplab
