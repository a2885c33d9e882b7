// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Linear time-invariant view of the looped residual stream:
//   h_{t+1} = Ā h_t + B̄ e
// Parameterization and ZOH/Euler discretization of the diagonal injection,
// spectral radius, stability regimes, fixed points and rollouts.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "looplab/autodiff/ops.hpp"
#include "looplab/rng.hpp"

namespace looplab {

/// Small dense row-major matrix for the dynamics code (no tape involved).
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != r * c) throw std::invalid_argument("Matrix: value count does not match shape");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix diagonal(const std::vector<double>& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool square() const { return rows == cols; }

    bool is_diagonal() const {
        if (!square()) return false;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                if (r != c && (*this)(r, c) != 0.0) return false;
        return true;
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != cols) throw std::invalid_argument("Matrix::apply: length mismatch");
        std::vector<double> y(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) y[r] += (*this)(r, c) * x[c];
        return y;
    }
};

inline double norm2(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Parameterization and discretization
// ---------------------------------------------------------------------------

struct InjectionParams {
    std::vector<double> log_A;      // [d_h]
    std::vector<double> delta_raw;  // [d_h]
    Matrix B;                       // [d_h x d_e]
    Matrix C;                       // [d_c x d_h]

    std::size_t d_h() const { return log_A.size(); }

    /// log_A ~ U(ln 0.5, ln 2); softplus(delta_raw) ~ U(0.01, 0.1); B, C ~ N(0, sigma^2).
    static InjectionParams init(std::size_t d_h, std::size_t d_e, std::size_t d_c, double sigma, Rng& rng) {
        InjectionParams p;
        p.log_A.resize(d_h);
        p.delta_raw.resize(d_h);
        for (std::size_t i = 0; i < d_h; ++i) p.log_A[i] = rng.uniform(std::log(0.5), std::log(2.0));
        for (std::size_t i = 0; i < d_h; ++i) p.delta_raw[i] = std::log(std::expm1(rng.uniform(0.01, 0.1)));
        p.B = Matrix(d_h, d_e);
        for (auto& v : p.B.data) v = rng.normal(0.0, sigma);
        p.C = Matrix(d_c, d_h);
        for (auto& v : p.C.data) v = rng.normal(0.0, sigma);
        return p;
    }
};

/// Diagonal Ā with a dense B̄.
struct DiscretizedSystem {
    std::vector<double> A_bar;  // [d_h]
    Matrix B_bar;               // [d_h x d_e]
};

/// Ā_i = exp(-Δ_i exp(log_A_i)) (zero-order hold), B̄ = Diag(Δ) B (Euler).
/// Ā is held inside the representable open interval (0, 1).
inline DiscretizedSystem discretize(const InjectionParams& p) {
    const std::size_t d = p.d_h();
    if (p.delta_raw.size() != d || p.B.rows != d)
        throw std::invalid_argument("discretize: inconsistent injection parameter shapes");
    DiscretizedSystem sys;
    sys.A_bar.resize(d);
    sys.B_bar = p.B;
    for (std::size_t i = 0; i < d; ++i) {
        const double delta = softplus(p.delta_raw[i]);
        sys.A_bar[i] = decay_factor(delta == 0.0 ? 0.0 : delta * std::exp(p.log_A[i]));
        for (std::size_t j = 0; j < p.B.cols; ++j) sys.B_bar(i, j) *= delta;
    }
    return sys;
}

// ---------------------------------------------------------------------------
// Spectral radius
// ---------------------------------------------------------------------------

enum class SpectralMethod { diagonal, power_iteration, dense };

inline const char* method_name(SpectralMethod m) {
    switch (m) {
        case SpectralMethod::diagonal: return "diagonal";
        case SpectralMethod::power_iteration: return "power-iteration";
        case SpectralMethod::dense: return "dense";
    }
    return "?";
}

struct SpectralResult {
    double rho = 0.0;
    SpectralMethod method = SpectralMethod::diagonal;
    std::size_t iterations = 0;
};

struct PowerIterationResult {
    double rho = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Power iteration v <- Mv / |Mv| with a two-term recurrence fit, so a dominant
/// complex-conjugate or +/- real pair is resolved as well as a single dominant
/// real eigenvalue. Converged when the fitted recurrence reproduces the next
/// iterate to relative residual `tol`.
inline PowerIterationResult power_iteration_radius(const Matrix& m, std::size_t max_iters = 20000, double tol = 1e-11,
                                                   std::uint64_t seed = 0x5eed) {
    if (!m.square()) throw std::invalid_argument("spectral_radius: matrix is not square");
    const std::size_t n = m.rows;
    PowerIterationResult out;
    if (n == 0) {
        out.converged = true;
        return out;
    }
    Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    double nx = norm2(x);
    for (auto& v : x) v /= nx;

    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    for (std::size_t it = 1; it <= max_iters; ++it) {
        const auto y1 = m.apply(x);
        const auto y2 = m.apply(y1);
        const double n1 = norm2(y1), n2 = norm2(y2);
        out.iterations = it;
        if (n1 == 0.0 || n2 == 0.0) {
            // A random start has a component on every nonzero mode, so collapsing to 0 means rho = 0.
            out.rho = 0.0;
            out.converged = true;
            return out;
        }

        // Single dominant real eigenvalue: y1 ~ lambda x.
        const double lambda = dot(x, y1);
        double r1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) r1 += (y1[i] - lambda * x[i]) * (y1[i] - lambda * x[i]);
        r1 = std::sqrt(r1) / n1;
        if (r1 < tol) {
            out.rho = std::abs(lambda);
            out.converged = true;
            return out;
        }

        // Dominant pair: y2 ~ a y1 + b x, eigenvalues are roots of z^2 - a z - b.
        const double g11 = dot(y1, y1), g12 = dot(y1, x), g22 = dot(x, x);
        const double det = g11 * g22 - g12 * g12;
        if (det > 1e-8 * g11 * g22) {
            const double c1 = dot(y1, y2), c2 = dot(x, y2);
            const double a = (c1 * g22 - c2 * g12) / det;
            const double b = (g11 * c2 - g12 * c1) / det;
            double r2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = y2[i] - a * y1[i] - b * x[i];
                r2 += e * e;
            }
            r2 = std::sqrt(r2) / n2;
            if (r2 < tol) {
                const double disc = a * a + 4.0 * b;
                if (disc < 0.0) {
                    out.rho = std::sqrt(-b);
                } else {
                    const double s = std::sqrt(disc);
                    out.rho = std::max(std::abs(0.5 * (a + s)), std::abs(0.5 * (a - s)));
                }
                out.converged = true;
                return out;
            }
        }
        for (std::size_t i = 0; i < n; ++i) x[i] = y1[i] / n1;
    }
    return out;
}

/// All eigenvalue magnitudes of a dense matrix, largest first.
inline std::vector<double> dense_eigen_moduli(const Matrix& m) {
    if (!m.square()) throw std::invalid_argument("dense_eigen_moduli: matrix is not square");
    Eigen::MatrixXd e(m.rows, m.cols);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) e(r, c) = m(r, c);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(e, false);
    if (solver.info() != Eigen::Success) throw std::runtime_error("dense eigensolver failed");
    std::vector<double> mod;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) mod.push_back(std::abs(solver.eigenvalues()[i]));
    std::sort(mod.rbegin(), mod.rend());
    return mod;
}

/// Largest eigenvalue magnitude. Exact for diagonal input, power iteration
/// otherwise, with the dense solver as fallback when power iteration stalls
/// (d <= 64).
inline SpectralResult spectral_radius(const Matrix& m) {
    if (!m.square()) throw std::invalid_argument("spectral_radius: matrix is not square");
    SpectralResult res;
    if (m.is_diagonal()) {
        for (std::size_t i = 0; i < m.rows; ++i) res.rho = std::max(res.rho, std::abs(m(i, i)));
        res.method = SpectralMethod::diagonal;
        return res;
    }
    const auto pi = power_iteration_radius(m);
    res.iterations = pi.iterations;
    if (pi.converged) {
        res.rho = pi.rho;
        res.method = SpectralMethod::power_iteration;
        return res;
    }
    if (m.rows > 64)
        throw std::runtime_error("spectral_radius: power iteration did not converge and d > 64 has no dense fallback");
    const auto mod = dense_eigen_moduli(m);
    res.rho = mod.empty() ? 0.0 : mod.front();
    res.method = SpectralMethod::dense;
    return res;
}

inline double spectral_radius(const std::vector<double>& diag) {
    double rho = 0.0;
    for (double a : diag) rho = std::max(rho, std::abs(a));
    return rho;
}

// ---------------------------------------------------------------------------
// Stability regimes
// ---------------------------------------------------------------------------

enum class Regime { stable, marginally_stable, unstable };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::stable: return "stable";
        case Regime::marginally_stable: return "marginally-stable";
        case Regime::unstable: return "unstable";
    }
    return "?";
}

struct StabilityRegime {
    Regime regime;
    double rho;
};

inline constexpr double kStabilityTol = 1e-9;

inline StabilityRegime classify(double rho) {
    if (!(rho >= 0.0)) throw std::invalid_argument("classify: spectral radius must be nonnegative");
    if (rho < 1.0 - kStabilityTol) return {Regime::stable, rho};
    if (rho > 1.0 + kStabilityTol) return {Regime::unstable, rho};
    return {Regime::marginally_stable, rho};
}

// ---------------------------------------------------------------------------
// Injection recast
// ---------------------------------------------------------------------------

enum class InjectionMode { addition, concatenation, parcae_diagonal };

inline const char* mode_name(InjectionMode m) {
    switch (m) {
        case InjectionMode::addition: return "addition";
        case InjectionMode::concatenation: return "concatenation";
        case InjectionMode::parcae_diagonal: return "parcae-diagonal";
    }
    return "?";
}

inline InjectionMode parse_mode(const std::string& s) {
    if (s == "addition") return InjectionMode::addition;
    if (s == "concatenation" || s == "concat") return InjectionMode::concatenation;
    if (s == "parcae-diagonal" || s == "parcae") return InjectionMode::parcae_diagonal;
    throw std::invalid_argument("unknown injection mode '" + s + "'");
}

/// Dense (Ā, B̄) pair of an injection.
struct LinearSystem {
    Matrix A_bar;
    Matrix B_bar;
};

inline LinearSystem to_linear_system(const DiscretizedSystem& sys) { return {Matrix::diagonal(sys.A_bar), sys.B_bar}; }

/// Weights for recast_injection: `d` for addition, `W` [d x 2d] for concatenation, `params` for parcae.
struct InjectionWeights {
    std::size_t d = 0;
    Matrix W;
    InjectionParams params;
};

inline LinearSystem recast_injection(InjectionMode mode, const InjectionWeights& w) {
    switch (mode) {
        case InjectionMode::addition: {
            if (w.d == 0) throw std::invalid_argument("recast_injection: addition needs d > 0");
            return {Matrix::identity(w.d), Matrix::identity(w.d)};
        }
        case InjectionMode::concatenation: {
            const std::size_t d = w.W.rows;
            if (d == 0 || w.W.cols != 2 * d)
                throw std::invalid_argument("recast_injection: concatenation needs W of shape [d x 2d]");
            LinearSystem s{Matrix(d, d), Matrix(d, d)};
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    s.A_bar(r, c) = w.W(r, c);
                    s.B_bar(r, c) = w.W(r, d + c);
                }
            return s;
        }
        case InjectionMode::parcae_diagonal: {
            const auto& p = w.params;
            if (p.d_h() == 0 || p.delta_raw.size() != p.d_h() || p.B.rows != p.d_h())
                throw std::invalid_argument("recast_injection: malformed parcae parameters");
            return to_linear_system(discretize(p));
        }
    }
    throw std::invalid_argument("recast_injection: unknown mode");
}

// ---------------------------------------------------------------------------
// Fixed point and rollout
// ---------------------------------------------------------------------------

/// h* = B̄e / (1 - Ā) for diagonal Ā.
inline std::vector<double> linear_fixed_point(const DiscretizedSystem& sys, const std::vector<double>& e) {
    auto be = sys.B_bar.apply(e);
    for (std::size_t i = 0; i < be.size(); ++i) {
        if (sys.A_bar[i] == 1.0)
            throw std::domain_error("linear_fixed_point: marginal coordinate " + std::to_string(i) +
                                    " has no unique fixed point");
        be[i] /= (1.0 - sys.A_bar[i]);
    }
    return be;
}

struct Trajectory {
    std::vector<std::vector<double>> h;  // h_0 .. h_T
    std::vector<double> norms;           // ||h_t||
};

inline Trajectory simulate_linear(const LinearSystem& sys, const std::vector<double>& e, const std::vector<double>& h0,
                                  std::size_t T) {
    if (!sys.A_bar.square() || sys.A_bar.rows != h0.size() || sys.B_bar.rows != h0.size() ||
        sys.B_bar.cols != e.size())
        throw std::invalid_argument("simulate_linear: shape mismatch");
    Trajectory tr;
    tr.h.push_back(h0);
    tr.norms.push_back(norm2(h0));
    const auto be = sys.B_bar.apply(e);
    for (std::size_t t = 0; t < T; ++t) {
        auto next = sys.A_bar.apply(tr.h.back());
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += be[i];
        tr.norms.push_back(norm2(next));
        tr.h.push_back(std::move(next));
    }
    return tr;
}

/// Diagonal rollout: h_{t+1,i} = Ā_i h_{t,i} + (B̄e)_i.
inline Trajectory simulate_linear(const DiscretizedSystem& sys, const std::vector<double>& e,
                                  const std::vector<double>& h0, std::size_t T) {
    if (sys.A_bar.size() != h0.size() || sys.B_bar.rows != h0.size() || sys.B_bar.cols != e.size())
        throw std::invalid_argument("simulate_linear: shape mismatch");
    Trajectory tr;
    tr.h.push_back(h0);
    tr.norms.push_back(norm2(h0));
    const auto be = sys.B_bar.apply(e);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> next(h0.size());
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = sys.A_bar[i] * tr.h.back()[i] + be[i];
        tr.norms.push_back(norm2(next));
        tr.h.push_back(std::move(next));
    }
    return tr;
}

}  // namespace looplab
