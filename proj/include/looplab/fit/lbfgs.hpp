// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Limited-memory BFGS: two-loop recursion for the direction, a strong-Wolfe
// line search (bracketing plus cubic-interpolation zoom) for the step.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "looplab/rng.hpp"

namespace looplab::fit {

/// Returns f(x) and writes the gradient into g (already sized like x).
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& g)>;

struct LbfgsOptions {
    int max_iters = 10000;
    int memory = 10;
    double grad_tol = 1e-10;  // on the infinity norm
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_evals = 60;
    int max_resets = 4;  // line-search failures tolerated (each perturbs and clears memory)
    double perturb_scale = 1e-8;
    std::uint64_t seed = 0;
};

struct LbfgsResult {
    std::vector<double> x;
    double f = 0.0;
    double grad_norm = 0.0;  // infinity norm at x
    int iterations = 0;
    int evaluations = 0;
    int line_search_failures = 0;
    bool converged = false;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Minimizer of the cubic through (a, fa, da), (b, fb, db), kept inside the
/// middle 80% of the interval; bisection when the fit is unusable.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    const double lo = std::min(a, b), hi = std::max(a, b), w = hi - lo;
    double t = 0.5 * (a + b);
    if (std::isfinite(fb) && std::isfinite(db)) {
        const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
        const double disc = d1 * d1 - da * db;
        if (disc >= 0.0) {
            const double d2 = std::copysign(std::sqrt(disc), b - a);
            const double c = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
            if (std::isfinite(c)) t = c;
        }
    }
    return std::clamp(t, lo + 0.1 * w, hi - 0.1 * w);
}

struct LinePoint {
    double alpha = 0.0, f = 0.0, d = 0.0;
    std::vector<double> x, g;
};

}  // namespace detail

/// Strong-Wolfe line search along p from (x, f0, g0). ok = false when no step
/// with sufficient decrease was found; `best` then holds the lowest point seen.
struct LineSearchOutcome {
    bool ok = false;
    detail::LinePoint point;
    int evaluations = 0;
};

inline LineSearchOutcome strong_wolfe(const Objective& f, const std::vector<double>& x, double f0,
                                      const std::vector<double>& g0, const std::vector<double>& p, double alpha0,
                                      const LbfgsOptions& o) {
    using detail::LinePoint;
    const double d0 = detail::dot(g0, p);
    LineSearchOutcome out;
    auto eval = [&](double alpha) {
        LinePoint q;
        q.alpha = alpha;
        q.x.resize(x.size());
        q.g.assign(x.size(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) q.x[i] = x[i] + alpha * p[i];
        q.f = f(q.x, q.g);
        q.d = detail::dot(q.g, p);
        if (!std::isfinite(q.f) || !std::isfinite(q.d)) {
            q.f = std::numeric_limits<double>::infinity();
            q.d = std::numeric_limits<double>::quiet_NaN();
        }
        ++out.evaluations;
        return q;
    };
    auto armijo_fails = [&](const LinePoint& q) { return !(q.f <= f0 + o.c1 * q.alpha * d0); };
    auto curvature_ok = [&](const LinePoint& q) { return std::abs(q.d) <= -o.c2 * d0; };

    LinePoint best{0.0, f0, d0, x, g0};
    auto note = [&](const LinePoint& q) {
        if (q.f < best.f) best = q;
    };
    auto zoom = [&](LinePoint lo, LinePoint hi) {
        while (out.evaluations < o.max_line_evals) {
            const double a = detail::cubic_step(lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d);
            if (!(std::abs(hi.alpha - lo.alpha) > 1e-16 * std::max(1.0, std::abs(lo.alpha)))) break;
            LinePoint q = eval(a);
            note(q);
            if (armijo_fails(q) || q.f >= lo.f) {
                hi = std::move(q);
            } else {
                if (curvature_ok(q)) {
                    out.ok = true;
                    out.point = std::move(q);
                    return;
                }
                if (q.d * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(q);
            }
        }
    };

    LinePoint prev{0.0, f0, d0, x, g0};
    double alpha = alpha0;
    for (int i = 0; out.evaluations < o.max_line_evals; ++i) {
        LinePoint q = eval(alpha);
        note(q);
        if (armijo_fails(q) || (i > 0 && q.f >= prev.f)) {
            zoom(prev, q);
            break;
        }
        if (curvature_ok(q)) {
            out.ok = true;
            out.point = std::move(q);
            return out;
        }
        if (q.d >= 0.0) {
            zoom(q, prev);
            break;
        }
        prev = std::move(q);
        alpha *= 2.0;
    }
    if (!out.ok && best.alpha > 0.0 && best.f < f0) {
        // Sufficient progress without the curvature condition: take it.
        out.ok = best.f <= f0 + o.c1 * best.alpha * d0;
        out.point = best;
    }
    return out;
}

inline LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsOptions& o = {}) {
    if (x0.empty()) throw std::invalid_argument("lbfgs_minimize: empty starting point");
    const std::size_t n = x0.size();
    Rng rng(o.seed, 0x1bf95);
    LbfgsResult r;
    std::vector<double> x = std::move(x0), g(n, 0.0);
    double fx = f(x, g);
    ++r.evaluations;
    if (!std::isfinite(fx)) throw std::domain_error("lbfgs_minimize: objective is not finite at the start");
    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    std::vector<double> best_x = x;
    double best_f = fx, best_gn = detail::inf_norm(g);
    auto track = [&] {
        if (fx < best_f || (fx == best_f && detail::inf_norm(g) < best_gn)) {
            best_f = fx;
            best_x = x;
            best_gn = detail::inf_norm(g);
        }
    };

    for (r.iterations = 0; r.iterations < o.max_iters; ++r.iterations) {
        if (detail::inf_norm(g) < o.grad_tol) break;
        // Two-loop recursion.
        std::vector<double> q = g;
        std::vector<double> a(S.size());
        for (std::size_t j = S.size(); j-- > 0;) {
            a[j] = rho[j] * detail::dot(S[j], q);
            for (std::size_t i = 0; i < n; ++i) q[i] -= a[j] * Y[j][i];
        }
        double gamma = 1.0;
        if (!S.empty()) gamma = detail::dot(S.back(), Y.back()) / detail::dot(Y.back(), Y.back());
        for (auto& v : q) v *= gamma;
        for (std::size_t j = 0; j < S.size(); ++j) {
            const double b = rho[j] * detail::dot(Y[j], q);
            for (std::size_t i = 0; i < n; ++i) q[i] += S[j][i] * (a[j] - b);
        }
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = -q[i];
        if (!(detail::dot(p, g) < 0.0)) {
            S.clear();
            Y.clear();
            rho.clear();
            for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
        }
        const double alpha0 = S.empty() ? std::min(1.0, 1.0 / std::max(detail::inf_norm(g), 1e-300)) : 1.0;
        auto ls = strong_wolfe(f, x, fx, g, p, alpha0, o);
        r.evaluations += ls.evaluations;
        if (!ls.ok) {
            ++r.line_search_failures;
            if (r.line_search_failures > o.max_resets) break;
            // Restart from a perturbed copy of the best point with empty memory.
            x = best_x;
            for (auto& v : x) v += o.perturb_scale * (1.0 + std::abs(v)) * rng.normal();
            fx = f(x, g);
            ++r.evaluations;
            if (!std::isfinite(fx)) {
                x = best_x;
                fx = f(x, g);
                ++r.evaluations;
            }
            S.clear();
            Y.clear();
            rho.clear();
            track();
            continue;
        }
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = ls.point.x[i] - x[i];
            y[i] = ls.point.g[i] - g[i];
        }
        x = std::move(ls.point.x);
        g = std::move(ls.point.g);
        fx = ls.point.f;
        track();
        const double sy = detail::dot(s, y);
        if (sy > 1e-300) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > o.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
    }
    r.x = best_x;
    std::vector<double> gb(n, 0.0);
    r.f = f(r.x, gb);
    ++r.evaluations;
    r.grad_norm = detail::inf_norm(gb);
    r.converged = r.grad_norm < o.grad_tol;
    return r;
}

}  // namespace looplab::fit
