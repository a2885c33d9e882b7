// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Parametric loss laws and their Huber fits on log loss.
//
// Positive coefficients (E, X, Y, Z, L_inf) are optimized as logarithms;
// exponents and gamma are optimized directly. Random-restart initial values:
//   E, L_inf ~ U(0.5, 5)
//   X, Y (log) ~ U(0, 14)
//   Z (log) ~ U(-5, 2)
//   x, y, z ~ U(0.1, 1.2); the unified decay rate z ~ U(0.1, 4)
//   gamma ~ U(0.5, 1.5)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "looplab/fit/huber.hpp"
#include "looplab/fit/lbfgs.hpp"
#include "looplab/rng.hpp"

namespace looplab::fit {

/// One observation. Laws read the fields they need.
struct Point {
    double T = 0.0;   // test-time depth
    double mu = 0.0;  // mean training depth
    double N = 0.0;   // effective parameters
    double D = 0.0;   // training tokens
    double loss = 0.0;
};

struct TrainingRecord {
    double mu_rec = 0.0;
    double N = 0.0;
    double D = 0.0;
    double flops = 0.0;
    double loss = 0.0;
};

struct TestTimeCurve {
    double mu_rec = 0.0;
    double N = 0.0;
    double D = 0.0;
    std::vector<double> T, loss;
};

struct ParamSpec {
    std::string name;
    bool log_scale = false;  // optimized as log(value)
    double init_lo = 0.0, init_hi = 1.0;  // initial range in the optimized coordinate
};

/// Prediction and its gradient with respect to the optimized coordinates.
using PredictFn = std::function<double(const std::vector<double>& theta, const Point& p, double* grad)>;

struct Law {
    std::string name;
    std::vector<ParamSpec> params;
    PredictFn predict;
    std::size_t size() const { return params.size(); }
    std::vector<double> values(const std::vector<double>& theta) const {
        std::vector<double> v(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) v[i] = params[i].log_scale ? std::exp(theta[i]) : theta[i];
        return v;
    }
    std::vector<double> coords(const std::vector<double>& values) const {
        std::vector<double> t(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) t[i] = params[i].log_scale ? std::log(values[i]) : values[i];
        return t;
    }
};

// ---------------------------------------------------------------- laws

inline ParamSpec floor_param(const std::string& name) { return {name, true, std::log(0.5), std::log(5.0)}; }
inline ParamSpec coef_param(const std::string& name) { return {name, true, 0.0, 14.0}; }
inline ParamSpec decay_coef_param(const std::string& name) { return {name, true, -5.0, 2.0}; }
inline ParamSpec exponent_param(const std::string& name) { return {name, false, 0.1, 1.2}; }

/// E + X N^-x + Y D^-y; theta = (log E, log X, x, log Y, y).
inline Law training_law() {
    Law law{"training", {floor_param("E"), coef_param("X"), exponent_param("x"), coef_param("Y"), exponent_param("y")}, {}};
    law.predict = [](const std::vector<double>& t, const Point& p, double* g) {
        const double E = std::exp(t[0]);
        const double lnN = std::log(p.N), lnD = std::log(p.D);
        const double a = std::exp(t[1] - t[2] * lnN);  // X N^-x
        const double b = std::exp(t[3] - t[4] * lnD);  // Y D^-y
        if (g) {
            g[0] = E;
            g[1] = a;
            g[2] = -a * lnN;
            g[3] = b;
            g[4] = -b * lnD;
        }
        return E + a + b;
    };
    return law;
}

enum class TtcForm { exp_decay, shifted_power, power, power_no_floor };

inline const char* form_name(TtcForm f) {
    switch (f) {
        case TtcForm::exp_decay: return "exp-decay";
        case TtcForm::shifted_power: return "shifted-power";
        case TtcForm::power: return "power";
        case TtcForm::power_no_floor: return "power-no-floor";
    }
    return "?";
}

inline TtcForm parse_form(const std::string& s) {
    for (auto f : {TtcForm::exp_decay, TtcForm::shifted_power, TtcForm::power, TtcForm::power_no_floor})
        if (s == form_name(f)) return f;
    throw std::invalid_argument("unknown functional form '" + s + "'");
}

inline const std::vector<TtcForm>& all_forms() {
    static const std::vector<TtcForm> forms{TtcForm::exp_decay, TtcForm::shifted_power, TtcForm::power,
                                            TtcForm::power_no_floor};
    return forms;
}

/// Test-time curve laws of depth T:
///   exp-decay      L_inf + Z exp(-z T)
///   shifted-power  L_inf + Z (1 + T)^-z
///   power          L_inf + Z T^-z
///   power-no-floor Z T^-z
inline Law ttc_law(TtcForm form) {
    Law law;
    law.name = form_name(form);
    if (form != TtcForm::power_no_floor) law.params.push_back(floor_param("L_inf"));
    law.params.push_back(decay_coef_param("Z"));
    law.params.push_back(exponent_param("z"));
    law.predict = [form](const std::vector<double>& t, const Point& p, double* g) {
        const std::size_t o = form == TtcForm::power_no_floor ? 0 : 1;
        const double floor = o ? std::exp(t[0]) : 0.0;
        const double lnZ = t[o], z = t[o + 1];
        double u = 0.0;  // the argument multiplying -z
        switch (form) {
            case TtcForm::exp_decay: u = p.T; break;
            case TtcForm::shifted_power: u = std::log1p(p.T); break;
            case TtcForm::power:
            case TtcForm::power_no_floor: u = std::log(p.T); break;
        }
        const double term = std::exp(lnZ - z * u);
        if (g) {
            if (o) g[0] = floor;
            g[o] = term;
            g[o + 1] = -term * u;
        }
        return floor + term;
    };
    return law;
}

enum class GammaMode { fixed_one, learned };

/// Training-law floor plus Z exp(-z T mu^-gamma);
/// theta = (log E, log X, x, log Y, y, log Z, z[, gamma]).
inline Law unified_law(GammaMode mode) {
    Law law = training_law();
    law.name = mode == GammaMode::learned ? "unified-gamma" : "unified";
    law.params.push_back(decay_coef_param("Z"));
    law.params.push_back({"z", false, 0.1, 4.0});
    if (mode == GammaMode::learned) law.params.push_back({"gamma", false, 0.5, 1.5});
    const PredictFn floor = law.predict;
    law.predict = [floor, mode](const std::vector<double>& t, const Point& p, double* g) {
        const double base = floor(t, p, g);
        const double gamma = mode == GammaMode::learned ? t[7] : 1.0;
        const double lnmu = std::log(p.mu);
        const double scaled = p.T * std::exp(-gamma * lnmu);  // T mu^-gamma
        const double term = std::exp(t[5] - t[6] * scaled);
        if (g) {
            g[5] = term;
            g[6] = -term * scaled;
            if (mode == GammaMode::learned) g[7] = term * t[6] * scaled * lnmu;
        }
        return base + term;
    };
    return law;
}

// ---------------------------------------------------------------- objective

struct HuberValue {
    double sum = 0.0;
    double mean = 0.0;
};

/// Huber on log residuals, evaluated without gradients.
inline HuberValue huber_objective(const Law& law, const std::vector<double>& theta, const std::vector<Point>& pts,
                                 double delta = kHuberDelta) {
    HuberValue o;
    for (const auto& p : pts) o.sum += huber(std::log(law.predict(theta, p, nullptr)) - std::log(p.loss), delta);
    o.mean = pts.empty() ? 0.0 : o.sum / static_cast<double>(pts.size());
    return o;
}

/// Sum of Huber on log residuals and its gradient in theta.
inline double huber_objective_grad(const Law& law, const std::vector<double>& theta, const std::vector<Point>& pts,
                                   std::vector<double>& grad, double delta = kHuberDelta) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> dp(theta.size());
    double total = 0.0;
    for (const auto& p : pts) {
        const double pred = law.predict(theta, p, dp.data());
        if (!(pred > 0.0) || !std::isfinite(pred)) return std::numeric_limits<double>::infinity();
        const double r = std::log(pred) - std::log(p.loss);
        total += huber(r, delta);
        const double w = huber_grad(r, delta) / pred;
        for (std::size_t i = 0; i < theta.size(); ++i) grad[i] += w * dp[i];
    }
    return total;
}

// ---------------------------------------------------------------- fitting

struct FitOptions {
    int restarts = 64;
    std::uint64_t seed = 0;
    double delta = kHuberDelta;
    LbfgsOptions lbfgs;
};

struct FitResult {
    std::string law;
    std::vector<std::pair<std::string, double>> coefficients;
    std::vector<double> theta;
    double huber_sum = 0.0;
    double huber_mean = 0.0;
    double reverified_sum = 0.0;  // independent re-evaluation of huber_sum
    int restarts = 0;
    int best_restart = -1;
    int line_search_failures = 0;
    bool converged = false;
    std::size_t points = 0;
    std::vector<double> restart_objectives;  // final objective of each restart, in order

    double get(const std::string& name) const {
        for (const auto& [k, v] : coefficients)
            if (k == name) return v;
        throw std::out_of_range("FitResult: no coefficient '" + name + "'");
    }
    /// Lowest objective among the first k restarts.
    double best_of(std::size_t k) const {
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < std::min(k, restart_objectives.size()); ++i) b = std::min(b, restart_objectives[i]);
        return b;
    }
};

inline std::vector<double> random_start(const Law& law, Rng& rng) {
    std::vector<double> t(law.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(law.params[i].init_lo, law.params[i].init_hi);
    return t;
}

/// Best of `restarts` L-BFGS runs from random starts; ties go to the earlier restart.
inline FitResult fit_law(const Law& law, const std::vector<Point>& pts, const FitOptions& opt = {}) {
    if (pts.size() < law.size())
        throw std::invalid_argument("fit " + law.name + ": " + std::to_string(pts.size()) + " points for " +
                                    std::to_string(law.size()) + " parameters");
    for (const auto& p : pts)
        if (!(p.loss > 0.0)) throw std::invalid_argument("fit " + law.name + ": losses must be positive");
    if (opt.restarts < 1) throw std::invalid_argument("fit: need at least one restart");
    const Objective obj = [&](const std::vector<double>& t, std::vector<double>& g) {
        return huber_objective_grad(law, t, pts, g, opt.delta);
    };
    FitResult best;
    best.law = law.name;
    best.huber_sum = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opt.restarts; ++r) {
        Rng rng(opt.seed, static_cast<std::uint64_t>(r));
        std::vector<double> x0;
        std::vector<double> g(law.size());
        for (int tries = 0; tries < 100; ++tries) {
            x0 = random_start(law, rng);
            if (std::isfinite(obj(x0, g))) break;
        }
        auto lo = opt.lbfgs;
        lo.seed = opt.seed ^ (static_cast<std::uint64_t>(r) * 0x9E3779B97F4A7C15ULL);
        LbfgsResult res;
        try {
            res = lbfgs_minimize(obj, x0, lo);
        } catch (const std::domain_error&) {
            best.restart_objectives.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        best.line_search_failures += res.line_search_failures;
        best.restart_objectives.push_back(res.f);
        if (res.f < best.huber_sum) {
            best.huber_sum = res.f;
            best.theta = res.x;
            best.best_restart = r;
            best.converged = res.converged;
        }
    }
    best.restarts = opt.restarts;
    best.points = pts.size();
    if (best.best_restart < 0) throw std::runtime_error("fit " + law.name + ": every restart failed");
    const auto values = law.values(best.theta);
    for (std::size_t i = 0; i < values.size(); ++i) best.coefficients.emplace_back(law.params[i].name, values[i]);
    const auto check = huber_objective(law, best.theta, pts, opt.delta);
    best.reverified_sum = check.sum;
    best.huber_mean = best.huber_sum / static_cast<double>(pts.size());
    return best;
}

inline double predict(const Law& law, const FitResult& fr, const Point& p) { return law.predict(fr.theta, p, nullptr); }

// ---------------------------------------------------------------- data adapters

inline std::vector<Point> training_points(const std::vector<TrainingRecord>& recs) {
    std::vector<Point> pts;
    for (const auto& r : recs) {
        if (!(r.N > 0.0) || !(r.D >= 1.0) || !(r.loss > 0.0))
            throw std::invalid_argument("training record needs N > 0, D >= 1 and loss > 0");
        pts.push_back({r.mu_rec, r.mu_rec, r.N, r.D, r.loss});
    }
    return pts;
}

inline void check_curve(const TestTimeCurve& c) {
    if (c.T.size() != c.loss.size()) throw std::invalid_argument("test-time curve: T and loss lengths differ");
    for (std::size_t i = 0; i < c.T.size(); ++i) {
        if (!(c.T[i] >= 1.0) || c.T[i] != std::floor(c.T[i]))
            throw std::invalid_argument("test-time curve: depths must be integers >= 1");
        if (i > 0 && !(c.T[i] > c.T[i - 1])) throw std::invalid_argument("test-time curve: depths must increase");
        if (!(c.loss[i] > 0.0)) throw std::invalid_argument("test-time curve: losses must be positive");
    }
}

inline std::vector<Point> curve_points(const TestTimeCurve& c, double max_T = std::numeric_limits<double>::infinity(),
                                       double min_T = 0.0) {
    check_curve(c);
    std::vector<Point> pts;
    for (std::size_t i = 0; i < c.T.size(); ++i)
        if (c.T[i] <= max_T && c.T[i] >= min_T) pts.push_back({c.T[i], c.mu_rec, c.N, c.D, c.loss[i]});
    return pts;
}

// ---------------------------------------------------------------- specific fits

inline FitResult fit_training_law(const std::vector<TrainingRecord>& recs, FitOptions opt = {}) {
    if (recs.size() < 6) throw std::invalid_argument("fit_training_law: needs at least 6 records");
    auto distinct = [&](auto field) {
        std::vector<double> v;
        for (const auto& r : recs) v.push_back(r.*field);
        std::sort(v.begin(), v.end());
        return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
    };
    if (distinct(&TrainingRecord::N) < 2 || distinct(&TrainingRecord::D) < 2)
        throw std::invalid_argument("fit_training_law: needs at least two values each of N and D");
    return fit_law(training_law(), training_points(recs), opt);
}

inline FitResult fit_ttc_curve(const TestTimeCurve& curve, TtcForm form, FitOptions opt = {}) {
    const auto pts = curve_points(curve);
    const std::size_t need = form == TtcForm::power_no_floor ? 3 : 4;
    if (pts.size() < need)
        throw std::invalid_argument(std::string("fit_ttc_curve: ") + form_name(form) + " needs at least " +
                                    std::to_string(need) + " points");
    return fit_law(ttc_law(form), pts, opt);
}

inline FitResult fit_unified(const std::vector<TestTimeCurve>& curves, const std::vector<TrainingRecord>& recs,
                             GammaMode mode, FitOptions opt = {}) {
    std::vector<Point> pts;
    std::vector<double> mus;
    for (const auto& c : curves) {
        const auto p = curve_points(c);
        pts.insert(pts.end(), p.begin(), p.end());
        mus.push_back(c.mu_rec);
    }
    for (const auto& r : recs) {
        pts.push_back({r.mu_rec, r.mu_rec, r.N, r.D, r.loss});
        mus.push_back(r.mu_rec);
    }
    std::sort(mus.begin(), mus.end());
    if (std::unique(mus.begin(), mus.end()) - mus.begin() < 2)
        throw std::invalid_argument("fit_unified: data must span at least two mu_rec values");
    for (const auto& p : pts)
        if (!(p.mu > 0.0 && p.N > 0.0 && p.D > 0.0)) throw std::invalid_argument("fit_unified: mu, N, D must be positive");
    return fit_law(unified_law(mode), pts, opt);
}

// ---------------------------------------------------------------- parabola and power laws

struct ParabolaFit {
    double a = 0.0, b = 0.0, c = 0.0;  // loss = a u^2 + b u + c, u = log10(x) or x
    bool log_x = true;
    bool has_minimum = false;  // a > 0
    double u_min = 0.0;        // -b / 2a
    double x_min = 0.0;        // location in the original variable
    double loss_min = 0.0;
    double sse = 0.0;
};

/// Least-squares quadratic through Householder QR of the centred design.
inline ParabolaFit fit_parabola(const std::vector<double>& x, const std::vector<double>& loss, bool log_x = true) {
    const std::size_t n = x.size();
    if (n < 3 || loss.size() != n) throw std::invalid_argument("fit_parabola: needs at least 3 (x, loss) points");
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (log_x && !(x[i] > 0.0)) throw std::invalid_argument("fit_parabola: log-x fit needs positive x");
        u[i] = log_x ? std::log10(x[i]) : x[i];
    }
    double m = 0.0;
    for (double v : u) m += v;
    m /= static_cast<double>(n);
    double s = 0.0;
    for (double v : u) s = std::max(s, std::abs(v - m));
    if (!(s > 0.0)) throw std::invalid_argument("fit_parabola: degenerate points");
    // Columns 1, w, w^2 with w = (u - m) / s.
    std::vector<std::vector<double>> A(3, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (u[i] - m) / s;
        A[0][i] = 1.0;
        A[1][i] = w;
        A[2][i] = w * w;
    }
    std::vector<double> y = loss;
    double R[3][3] = {};
    for (std::size_t k = 0; k < 3; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < n; ++i) norm += A[k][i] * A[k][i];
        norm = std::sqrt(norm);
        if (!(norm > 1e-12 * static_cast<double>(n))) throw std::invalid_argument("fit_parabola: collinear points");
        const double alpha = A[k][k] > 0.0 ? -norm : norm;
        std::vector<double> v(n, 0.0);
        for (std::size_t i = k; i < n; ++i) v[i] = A[k][i];
        v[k] -= alpha;
        double vv = 0.0;
        for (std::size_t i = k; i < n; ++i) vv += v[i] * v[i];
        auto reflect = [&](std::vector<double>& col) {
            double d = 0.0;
            for (std::size_t i = k; i < n; ++i) d += v[i] * col[i];
            const double f = 2.0 * d / vv;
            for (std::size_t i = k; i < n; ++i) col[i] -= f * v[i];
        };
        for (std::size_t j = k; j < 3; ++j) reflect(A[j]);
        reflect(y);
        for (std::size_t j = k; j < 3; ++j) R[k][j] = A[j][k];
    }
    double beta[3];
    for (std::size_t k = 3; k-- > 0;) {
        double t = y[k];
        for (std::size_t j = k + 1; j < 3; ++j) t -= R[k][j] * beta[j];
        beta[k] = t / R[k][k];
    }
    // Undo the centring: loss = c0 + c1 w + c2 w^2.
    ParabolaFit f;
    f.log_x = log_x;
    f.a = beta[2] / (s * s);
    f.b = beta[1] / s - 2.0 * beta[2] * m / (s * s);
    f.c = beta[0] - beta[1] * m / s + beta[2] * m * m / (s * s);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = f.a * u[i] * u[i] + f.b * u[i] + f.c - loss[i];
        f.sse += r * r;
    }
    f.has_minimum = f.a > 0.0;
    if (f.has_minimum) {
        const double w_min = -beta[1] / (2.0 * beta[2]);
        f.u_min = m + s * w_min;
        f.x_min = log_x ? std::pow(10.0, f.u_min) : f.u_min;
        f.loss_min = beta[0] + beta[1] * w_min + beta[2] * w_min * w_min;
    }
    return f;
}

struct PowerLaw {
    double coefficient = 0.0;  // y = coefficient * x^exponent
    double exponent = 0.0;
    double r2 = 0.0;
};

/// Least squares of log y on log x.
inline PowerLaw fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n) throw std::invalid_argument("fit_power_law: needs at least 3 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("fit_power_law: values must be positive");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(x[i]) - mx, dy = std::log(y[i]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_power_law: x values are all equal");
    PowerLaw p;
    p.exponent = sxy / sxx;
    p.coefficient = std::exp(my - p.exponent * mx);
    p.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return p;
}

struct IsoflopPowerLaws {
    std::vector<ParabolaFit> parabolas;  // one per budget
    PowerLaw mu_star;                    // mu*(F)
    PowerLaw tokens_star;                // D*(F)
};

/// Per budget: a parabola over log10(mu_rec) locates mu*; D* is the token count
/// the budget buys at mu*, supplied by `tokens_at`. Then log-log fits over budgets.
inline IsoflopPowerLaws extract_power_laws(const std::vector<double>& budgets,
                                           const std::vector<std::vector<double>>& mu_recs,
                                           const std::vector<std::vector<double>>& losses,
                                           const std::function<double(double budget, double mu)>& tokens_at) {
    if (budgets.size() < 3) throw std::invalid_argument("extract_power_laws: needs at least 3 budgets");
    IsoflopPowerLaws out;
    std::vector<double> mus, toks;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        auto p = fit_parabola(mu_recs.at(i), losses.at(i), true);
        if (!p.has_minimum) throw std::invalid_argument("extract_power_laws: isoFLOP curve has no interior minimum");
        mus.push_back(p.x_min);
        toks.push_back(tokens_at(budgets[i], p.x_min));
        out.parabolas.push_back(p);
    }
    out.mu_star = fit_power_law(budgets, mus);
    out.tokens_star = fit_power_law(budgets, toks);
    return out;
}

// ---------------------------------------------------------------- functional-form comparison

struct FormRow {
    std::string form;
    double in_dist_mean = 0.0;    // mean over curves of the per-point Huber, fit on all T
    double in_dist_sum = 0.0;     // mean over curves of the summed Huber
    double extrap_mean = 0.0;     // fit on T <= mu_rec, per-point Huber on T > mu_rec
    double extrap_sum = 0.0;
    std::size_t curves = 0;
    std::size_t extrap_curves = 0;
};

inline std::vector<FormRow> functional_form_report(const std::vector<TestTimeCurve>& curves, FitOptions opt = {}) {
    std::vector<FormRow> rows;
    for (auto form : all_forms()) {
        const Law law = ttc_law(form);
        FormRow row;
        row.form = form_name(form);
        for (const auto& c : curves) {
            const auto all = curve_points(c);
            if (all.size() < law.size()) continue;
            const auto full = fit_law(law, all, opt);
            row.in_dist_mean += full.huber_mean;
            row.in_dist_sum += full.huber_sum;
            ++row.curves;
            const auto train = curve_points(c, c.mu_rec);
            const auto held = curve_points(c, std::numeric_limits<double>::infinity(), c.mu_rec + 0.5);
            if (train.size() >= law.size() && !held.empty()) {
                const auto part = fit_law(law, train, opt);
                const auto e = huber_objective(law, part.theta, held, opt.delta);
                row.extrap_mean += e.mean;
                row.extrap_sum += e.sum;
                ++row.extrap_curves;
            }
        }
        if (row.curves) {
            row.in_dist_mean /= static_cast<double>(row.curves);
            row.in_dist_sum /= static_cast<double>(row.curves);
        }
        if (row.extrap_curves) {
            row.extrap_mean /= static_cast<double>(row.extrap_curves);
            row.extrap_sum /= static_cast<double>(row.extrap_curves);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace looplab::fit
