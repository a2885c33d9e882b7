// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>

namespace looplab::fit {

inline constexpr double kHuberDelta = 1e-3;

/// r^2 / 2 inside [-delta, delta], delta (|r| - delta / 2) outside.
inline double huber(double r, double delta = kHuberDelta) {
    if (!(delta > 0.0)) throw std::invalid_argument("huber: delta must be positive");
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

/// d huber / d r.
inline double huber_grad(double r, double delta = kHuberDelta) {
    if (r > delta) return delta;
    if (r < -delta) return -delta;
    return r;
}

}  // namespace looplab::fit
