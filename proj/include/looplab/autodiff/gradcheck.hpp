// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference check of reverse-mode gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "looplab/autodiff/tensor.hpp"

namespace looplab {

/// Worst relative error between `grads` and central differences of `f` with
/// respect to every element of `inputs`. The denominator is floored at 1e-8.
inline double finite_diff_compare(const std::function<Tensor()>& f, std::vector<Tensor>& inputs,
                                  const std::vector<std::vector<double>>& grads, double eps) {
    double worst = 0.0;
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto x = inputs[t].mutable_data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + eps;
            const double fp = f().item();
            x[i] = saved - eps;
            const double fm = f().item();
            x[i] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double ad = grads[t][i];
            const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
            worst = std::max(worst, std::abs(ad - fd) / denom);
        }
    }
    return worst;
}

/// Autodiff gradients of the scalar `f` with respect to `inputs` (zeros when untouched).
inline std::vector<std::vector<double>> autodiff_grads(const std::function<Tensor()>& f, std::vector<Tensor>& inputs) {
    for (auto& x : inputs) {
        x.zero_grad();
        x.set_requires_grad(true);
    }
    f().backward();
    std::vector<std::vector<double>> grads;
    for (auto& x : inputs) {
        const auto* g = x.grad();
        grads.push_back(g ? *g : std::vector<double>(x.size(), 0.0));
        x.zero_grad();
    }
    return grads;
}

/// Worst relative error of autodiff gradients of `f` against central differences.
inline double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor>& inputs, double eps = 1e-5) {
    const auto grads = autodiff_grads(f, inputs);
    return finite_diff_compare(f, inputs, grads, eps);
}

}  // namespace looplab
