// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "looplab/fit/scaling_laws.hpp"

using namespace looplab;
using namespace looplab::fit;

namespace {

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

std::vector<TrainingRecord> planted_training(double E, double X, double x, double Y, double y, double noise,
                                             std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainingRecord> recs;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const double N = std::pow(10.0, 4.0 + i);
            const double D = std::pow(10.0, 4.0 + j);
            const double L = E + X * std::pow(N, -x) + Y * std::pow(D, -y);
            recs.push_back({static_cast<double>(i + 1), N, D, 0.0, L * (1.0 + noise * rng.normal())});
        }
    return recs;
}

TestTimeCurve planted_curve(double Linf, double Z, double z, int Tmax, double noise, std::uint64_t seed,
                            double mu = 4.0) {
    Rng rng(seed);
    TestTimeCurve c;
    c.mu_rec = mu;
    for (int T = 1; T <= Tmax; ++T) {
        c.T.push_back(T);
        c.loss.push_back((Linf + Z * std::exp(-z * T)) * (1.0 + noise * rng.normal()));
    }
    return c;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// Central differences of the summed Huber objective in theta.
void expect_gradient_matches(const Law& law, const std::vector<double>& theta, const std::vector<Point>& pts) {
    std::vector<double> g(theta.size());
    huber_objective_grad(law, theta, pts, g);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
        auto tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        const double fd = (huber_objective(law, tp, pts).sum - huber_objective(law, tm, pts).sum) / (2.0 * h);
        // Absolute floor covers cancellation in the difference of two O(1) sums.
        EXPECT_LE(std::abs(fd - g[i]), 1e-6 * std::max(std::abs(fd), std::abs(g[i])) + 1e-10)
            << law.name << " param " << law.params[i].name;
    }
}

}  // namespace

TEST(Huber, Branches) {
    EXPECT_EQ(huber(0.0, 1e-3), 0.0);
    EXPECT_DOUBLE_EQ(huber(1e-3, 1e-3), 0.5e-6);
    EXPECT_DOUBLE_EQ(huber(10.0, 1e-3), 1e-3 * (10.0 - 5e-4));
    EXPECT_DOUBLE_EQ(huber(-10.0, 1e-3), 1e-3 * (10.0 - 5e-4));
    EXPECT_THROW(huber(1.0, 0.0), std::invalid_argument);
}

TEST(Lbfgs, QuadraticExactInFewIterations) {
    const std::vector<double> c{1.0, -2.0, 3.5, 0.25, -7.0};
    const Objective f = [&](const std::vector<double>& x, std::vector<double>& g) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] = x[i] - c[i];
            s += 0.5 * g[i] * g[i];
        }
        return s;
    };
    const auto r = lbfgs_minimize(f, std::vector<double>(5, 0.0));
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 7);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.x[i], c[i], 1e-10);
}

TEST(Lbfgs, IllConditionedQuadratic) {
    const Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double w = std::pow(10.0, static_cast<double>(i));
            g[i] = w * (x[i] - 1.0);
            s += 0.5 * w * (x[i] - 1.0) * (x[i] - 1.0);
        }
        return s;
    };
    const auto r = lbfgs_minimize(f, std::vector<double>(4, 0.0));
    EXPECT_TRUE(r.converged);
    for (double v : r.x) EXPECT_NEAR(v, 1.0, 1e-10);
}

TEST(Lbfgs, Rosenbrock) {
    const Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        g[0] = -2.0 * a - 400.0 * x[0] * b;
        g[1] = 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    const auto r = lbfgs_minimize(f, {-1.2, 1.0});
    EXPECT_NEAR(r.x[0], 1.0, 1e-6);
    EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(Lbfgs, NonFiniteStartThrows) {
    const Objective f = [](const std::vector<double>&, std::vector<double>&) { return std::nan(""); };
    EXPECT_THROW(lbfgs_minimize(f, {0.0}), std::domain_error);
}

TEST(Lbfgs, SurvivesOverflowingTrialSteps) {
    // exp(x) - x has its minimum at 0, and long steps overflow.
    const Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
        g[0] = std::exp(x[0]) - 1.0;
        return std::exp(x[0]) - x[0];
    };
    const auto r = lbfgs_minimize(f, {-800.0});
    EXPECT_NEAR(r.x[0], 0.0, 1e-8);
}

TEST(Gradients, EveryLawMatchesFiniteDifferences) {
    Rng rng(4);
    std::vector<Point> pts;
    for (int i = 0; i < 30; ++i)
        pts.push_back({1.0 + static_cast<double>(i % 12), 2.0 + static_cast<double>(i % 5), std::pow(10.0, rng.uniform(5, 8)),
                       std::pow(10.0, rng.uniform(6, 9)), rng.uniform(2.0, 4.0)});
    std::vector<Law> laws{training_law(), unified_law(GammaMode::fixed_one), unified_law(GammaMode::learned)};
    for (auto f : all_forms()) laws.push_back(ttc_law(f));
    for (const auto& law : laws)
        for (int trial = 0; trial < 3; ++trial) {
            auto theta = random_start(law, rng);
            // Keep the floor-only terms comparable to the data.
            if (law.params[0].name == "E" || law.params[0].name == "L_inf") theta[0] = std::log(rng.uniform(1.0, 2.5));
            expect_gradient_matches(law, theta, pts);
        }
}

TEST(Parabola, SymmetricLinear) {
    const auto p = fit_parabola({1, 2, 3}, {1, 0, 1}, false);
    ASSERT_TRUE(p.has_minimum);
    EXPECT_NEAR(p.x_min, 2.0, 1e-12);
    EXPECT_NEAR(p.loss_min, 0.0, 1e-12);
}

TEST(Parabola, ExactCoefficients) {
    std::vector<double> x, y;
    for (double mu : {2.0, 4.0, 6.0, 8.0, 10.0, 12.0}) {
        const double u = std::log10(mu);
        x.push_back(mu);
        y.push_back(1.7 * u * u - 2.1 * u + 3.3);
    }
    const auto p = fit_parabola(x, y);
    EXPECT_NEAR(p.a, 1.7, 1e-12);
    EXPECT_NEAR(p.b, -2.1, 1e-12);
    EXPECT_NEAR(p.c, 3.3, 1e-12);
    EXPECT_NEAR(p.u_min, 2.1 / 3.4, 1e-12);
}

TEST(Parabola, NoisyMinimumWithinTwoPercent) {
    // loss = 0.5 (log10 mu - log10 5)^2 + 3 over mu in [1.5, 16].
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        std::vector<double> x, y;
        for (int i = 0; i < 7; ++i) {
            const double mu = 1.5 * std::pow(16.0 / 1.5, i / 6.0);
            const double u = std::log10(mu) - std::log10(5.0);
            x.push_back(mu);
            y.push_back(0.5 * u * u + 3.0 + 1e-3 * rng.normal());
        }
        errs.push_back(rel(fit_parabola(x, y).x_min, 5.0));
    }
    EXPECT_LT(median(errs), 0.02);
}

TEST(Parabola, DegenerateAndConcave) {
    EXPECT_THROW(fit_parabola({1, 1, 1}, {1, 2, 3}, false), std::invalid_argument);
    EXPECT_THROW(fit_parabola({1, 2}, {1, 2}, false), std::invalid_argument);
    EXPECT_THROW(fit_parabola({1, 1, 2}, {1, 2, 3}, false), std::invalid_argument);
    EXPECT_FALSE(fit_parabola({1, 2, 3}, {0, 1, 0}, false).has_minimum);
}

TEST(PowerLaw, PlantedExponents) {
    std::vector<double> F, mu, D;
    for (int i = 0; i < 5; ++i) {
        F.push_back(std::pow(10.0, 18.0 + 0.5 * i));
        mu.push_back(0.3 * std::pow(F.back(), 0.40));
        D.push_back(2e-3 * std::pow(F.back(), 0.78));
    }
    EXPECT_NEAR(fit_power_law(F, mu).exponent, 0.40, 1e-6);
    EXPECT_NEAR(fit_power_law(F, D).exponent, 0.78, 1e-6);
    EXPECT_NEAR(fit_power_law(F, std::vector<double>(5, 7.0)).exponent, 0.0, 1e-9);
    EXPECT_THROW(fit_power_law(F, {1, 2, 0, 4, 5}), std::invalid_argument);
}

TEST(PowerLaw, ExtractedFromIsoflopParabolas) {
    // Loss curves whose minima sit exactly at mu* = 0.3 F^0.4.
    std::vector<double> budgets;
    std::vector<std::vector<double>> mus, losses;
    for (int i = 0; i < 4; ++i) {
        const double F = std::pow(10.0, 18.0 + i);
        const double star = 0.3 * std::pow(F, 0.40);
        budgets.push_back(F);
        std::vector<double> m, l;
        for (double k : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            const double u = std::log10(k);
            m.push_back(star * k);
            l.push_back(2.0 + 0.8 * u * u);
        }
        mus.push_back(m);
        losses.push_back(l);
    }
    const auto out = extract_power_laws(budgets, mus, losses, [](double F, double mu) { return F / (6e6 * mu); });
    EXPECT_NEAR(out.mu_star.exponent, 0.40, 1e-9);
    EXPECT_NEAR(out.tokens_star.exponent, 0.60, 1e-9);
}

TEST(TrainingLaw, NoiseFreeRecoveryIsExact) {
    const auto recs = planted_training(2.5, 5e5, 0.77, 2.5e4, 0.52, 0.0, 1);
    FitOptions opt;
    opt.restarts = 32;
    const auto r = fit_training_law(recs, opt);
    EXPECT_LT(r.huber_sum, 1e-12);
    EXPECT_LT(rel(r.get("E"), 2.5), 1e-5);
    EXPECT_LT(rel(r.get("X"), 5e5), 1e-4);
    EXPECT_LT(rel(r.get("x"), 0.77), 1e-5);
    EXPECT_LT(rel(r.get("Y"), 2.5e4), 1e-4);
    EXPECT_LT(rel(r.get("y"), 0.52), 1e-5);
    EXPECT_NEAR(r.reverified_sum, r.huber_sum, 1e-12);
}

TEST(TrainingLaw, OnePercentNoiseWithinFivePercent) {
    std::vector<std::vector<double>> errs(5);
    const double truth[] = {2.5, 5e5, 0.77, 2.5e4, 0.52};
    const char* names[] = {"E", "X", "x", "Y", "y"};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        FitOptions opt;
        opt.restarts = 16;
        opt.seed = seed;
        const auto r = fit_training_law(planted_training(2.5, 5e5, 0.77, 2.5e4, 0.52, 0.01, 100 + seed), opt);
        for (int i = 0; i < 5; ++i) errs[i].push_back(rel(r.get(names[i]), truth[i]));
    }
    for (int i = 0; i < 5; ++i) EXPECT_LT(median(errs[i]), 0.05) << names[i];
}

TEST(TrainingLaw, AsymptoteIsE) {
    const auto recs = planted_training(2.5, 5e5, 0.77, 2.5e4, 0.52, 0.0, 1);
    FitOptions opt;
    opt.restarts = 8;
    const auto r = fit_training_law(recs, opt);
    const double far = predict(training_law(), r, {0, 0, 1e30, 1e30, 0});
    EXPECT_NEAR(far, r.get("E"), 1e-9);
}

TEST(TrainingLaw, RejectsTooFewRecords) {
    auto recs = planted_training(2.5, 5e5, 0.77, 2.5e4, 0.52, 0.0, 1);
    recs.resize(5);
    EXPECT_THROW(fit_training_law(recs), std::invalid_argument);
}

TEST(Restarts, BestOfKIsNonincreasing) {
    FitOptions opt;
    opt.restarts = 12;
    opt.seed = 3;
    const auto r = fit_training_law(planted_training(2.5, 5e5, 0.77, 2.5e4, 0.52, 0.01, 7), opt);
    ASSERT_EQ(r.restart_objectives.size(), 12u);
    for (std::size_t k = 2; k <= 12; ++k) EXPECT_LE(r.best_of(k), r.best_of(k - 1));
    EXPECT_EQ(r.best_of(12), r.huber_sum);
    // Same seed, fewer restarts: the objectives are a prefix.
    opt.restarts = 5;
    const auto s = fit_training_law(planted_training(2.5, 5e5, 0.77, 2.5e4, 0.52, 0.01, 7), opt);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(s.restart_objectives[k], r.restart_objectives[k]);
}

TEST(TtcCurve, NoiseFreeExpDecayRecovered) {
    const auto c = planted_curve(3.0, 1.5, 0.6, 24, 0.0, 0);
    const auto r = fit_ttc_curve(c, TtcForm::exp_decay);
    EXPECT_NEAR(r.get("L_inf"), 3.0, 1e-6);
    EXPECT_NEAR(r.get("Z"), 1.5, 1e-6);
    EXPECT_NEAR(r.get("z"), 0.6, 1e-6);
    EXPECT_NEAR(r.reverified_sum, r.huber_sum, 1e-12);
}

TEST(TtcCurve, OnePercentNoiseWithinTwoPercent) {
    std::vector<double> eL, eZ, ez;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        FitOptions opt;
        opt.restarts = 16;
        opt.seed = seed;
        const auto r = fit_ttc_curve(planted_curve(2.0, 4.0, 0.2, 24, 0.01, 50 + seed), TtcForm::exp_decay, opt);
        eL.push_back(rel(r.get("L_inf"), 2.0));
        eZ.push_back(rel(r.get("Z"), 4.0));
        ez.push_back(rel(r.get("z"), 0.2));
    }
    EXPECT_LT(median(eL), 0.02);
    EXPECT_LT(median(eZ), 0.02);
    EXPECT_LT(median(ez), 0.02);
}

TEST(TtcCurve, ConstantCurveSaturates) {
    TestTimeCurve c;
    c.mu_rec = 4;
    for (int T = 1; T <= 12; ++T) {
        c.T.push_back(T);
        c.loss.push_back(2.75);
    }
    const auto r = fit_ttc_curve(c, TtcForm::exp_decay);
    EXPECT_LT(r.huber_sum, 1e-10);
    // Either the decay vanishes or z collapses to zero; both give a flat curve.
    const Law law = ttc_law(TtcForm::exp_decay);
    for (double T : {1.0, 12.0, 1000.0}) EXPECT_NEAR(predict(law, r, {T, 4, 0, 0, 0}), 2.75, 1e-5);
}

TEST(TtcCurve, InputValidation) {
    auto c = planted_curve(3.0, 1.5, 0.6, 3, 0.0, 0);
    EXPECT_THROW(fit_ttc_curve(c, TtcForm::exp_decay), std::invalid_argument);
    EXPECT_NO_THROW(fit_ttc_curve(c, TtcForm::power_no_floor));
    c = planted_curve(3.0, 1.5, 0.6, 6, 0.0, 0);
    std::swap(c.T[1], c.T[2]);
    EXPECT_THROW(fit_ttc_curve(c, TtcForm::exp_decay), std::invalid_argument);
}

TEST(Unified, PlantedGammaOneRecovered) {
    const double E = 2.5, X = 5e5, x = 0.77, Y = 2.5e4, y = 0.52, Z = 1.2, z = 2.0;
    auto make = [&](double noise, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<TestTimeCurve> curves;
        const double mus[] = {2, 4, 6, 8, 10, 12};
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                TestTimeCurve c;
                c.mu_rec = mus[(i + j) % 6];
                c.N = std::pow(10.0, 4.0 + i);
                c.D = std::pow(10.0, 4.0 + j);
                for (double T : {1, 2, 4, 6, 8, 10, 12, 16, 20, 24}) {
                    const double L = E + X * std::pow(c.N, -x) + Y * std::pow(c.D, -y) + Z * std::exp(-z * T / c.mu_rec);
                    c.T.push_back(T);
                    c.loss.push_back(L * (1.0 + noise * rng.normal()));
                }
                curves.push_back(c);
            }
        return curves;
    };
    const double truth[] = {E, X, x, Y, y, Z, z};
    const char* names[] = {"E", "X", "x", "Y", "y", "Z", "z"};
    std::vector<std::vector<double>> errs(7);
    std::vector<double> gammas;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        FitOptions opt;
        opt.restarts = 24;
        opt.seed = seed;
        const auto curves = make(0.01, 200 + seed);
        const auto r = fit_unified(curves, {}, GammaMode::fixed_one, opt);
        for (int i = 0; i < 7; ++i) errs[i].push_back(rel(r.get(names[i]), truth[i]));
        gammas.push_back(fit_unified(curves, {}, GammaMode::learned, opt).get("gamma"));
    }
    for (int i = 0; i < 7; ++i) EXPECT_LT(median(errs[i]), 0.05) << names[i];
    EXPECT_NEAR(median(gammas), 1.0, 0.05);

    // Plug-in: at T = mu the decay term is Z e^-z.
    FitOptions opt;
    opt.restarts = 8;
    const auto r = fit_unified(make(0.0, 1), {}, GammaMode::fixed_one, opt);
    const Law law = unified_law(GammaMode::fixed_one);
    const Point at{4.0, 4.0, 1e6, 1e7, 0};
    const Point far{1e9, 4.0, 1e6, 1e7, 0};
    EXPECT_NEAR(predict(law, r, at) - predict(law, r, far), r.get("Z") * std::exp(-r.get("z")), 1e-12);
}

TEST(Unified, NeedsTwoDepths) {
    auto c = planted_curve(3.0, 1.5, 0.6, 12, 0.0, 0);
    c.N = 1e6;
    c.D = 1e7;
    EXPECT_THROW(fit_unified({c, c}, {}, GammaMode::fixed_one), std::invalid_argument);
}

TEST(FormReport, ExpDecayDataPrefersExpDecay) {
    std::vector<TestTimeCurve> curves;
    for (int i = 0; i < 3; ++i) curves.push_back(planted_curve(2.5 + 0.2 * i, 1.2, 0.5 + 0.1 * i, 16, 0.0, i, 4.0));
    FitOptions opt;
    opt.restarts = 16;
    const auto rows = functional_form_report(curves, opt);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].form, "exp-decay");
    for (std::size_t i = 1; i < 4; ++i) {
        EXPECT_LT(rows[0].in_dist_mean, rows[i].in_dist_mean) << rows[i].form;
        EXPECT_LT(rows[0].extrap_mean, rows[i].extrap_mean) << rows[i].form;
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_GT(rows[3].in_dist_mean, rows[i].in_dist_mean) << rows[i].form;
    EXPECT_EQ(rows[0].curves, 3u);
}

TEST(FormReport, SingleCurve) {
    FitOptions opt;
    opt.restarts = 8;
    const auto rows = functional_form_report({planted_curve(2.5, 1.0, 0.5, 12, 0.0, 0)}, opt);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.curves, 1u);
        EXPECT_TRUE(std::isfinite(r.in_dist_mean));
    }
}
