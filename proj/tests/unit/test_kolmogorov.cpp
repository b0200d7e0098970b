#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qss/kolmogorov.hpp"

using namespace qss;

namespace {

PQGrid square(int n, double half = 5.0) { return {{-half, half, n}, {-half, half, n}}; }

SlowOperator slow_op(double radial = 1.0) {
    return {1.0, ReducedSigmas::from_alpha0(0.349), DiffusionConvention::kIto, radial};
}

// -L0 g for g = cos(w r)(1 + cos(w s)/2), w = pi/5, which satisfies the
// Neumann condition on [-5, 5]^2.
struct CosineCase {
    double w = std::numbers::pi / 5;
    double g(double r, double s) const { return std::cos(w * r) * (1 + 0.5 * std::cos(w * s)); }
    double minus_l0(double r, double s, const FastOperator& f) const {
        const double a = f.rate();
        const double gr = -w * std::sin(w * r) * (1 + 0.5 * std::cos(w * s));
        const double gs = -0.5 * w * std::cos(w * r) * std::sin(w * s);
        const double grr = -w * w * std::cos(w * r) * (1 + 0.5 * std::cos(w * s));
        const double gss = -0.5 * w * w * std::cos(w * r) * std::cos(w * s);
        return -(-a * (r * gr + s * gs) + f.D() * (f.sigma5 * f.sigma5 * grr + f.sigma7 * f.sigma7 * gss));
    }
};

double manufactured_error(int n) {
    const RSGrid g = square(n);
    const FastOperator f{1.0, 0.0, 1.0, 0.5, 0.5};
    const CosineCase mc;
    GridField rhs(g), exact(g);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            rhs(i, j) = mc.minus_l0(g.a.x(i), g.b.x(j), f);
            exact(i, j) = mc.g(g.a.x(i), g.b.x(j));
        }
    const auto c = rho_functional(g, f.density());
    double mean = 0;
    for (std::size_t k = 0; k < c.size(); ++k) mean += c[k] * exact.v[k];
    const auto u = solve_u2_cell(g, f, rhs, &c);
    double err = 0;
    for (std::size_t k = 0; k < c.size(); ++k) err = std::max(err, std::abs(u.v[k] - (exact.v[k] - mean)));
    return err;
}

CascadeConfig tiny_cascade(double e0) {
    CascadeConfig c;
    c.pq = square(11);
    c.rs = square(15);
    c.epsilon0 = e0;
    c.tau_end = 1.0;
    c.save_every = 0.5;
    c.threads = 1;
    return c;
}

}  // namespace

TEST(InitialCondition, Examples) {
    EXPECT_EQ(initial_condition_phi(1, 1), 0.5);
    EXPECT_EQ(initial_condition_phi(1, 0), 1.0);
    EXPECT_NEAR(initial_condition_phi(3, 4), 0.36, 1e-15);
    EXPECT_EQ(initial_condition_phi(0, 0), 0.5);
    // Odd cell counts put a node on the origin.
    const auto g = square(41);
    EXPECT_EQ(g.a.x(20), 0.0);
    EXPECT_EQ(phi_field(g)(20, 20), 0.5);
    EXPECT_NEAR(floored_radius_sq(0, 0, g), 0.25 * g.a.h() * g.a.h(), 1e-15);
}

TEST(SlowOperator, ConstantsAreSteady) {
    const auto g = square(21);
    GridField c(g, 0.37), out;
    apply_slow_operator(c, g, slow_op(), out);
    for (double v : out.v) EXPECT_EQ(v, 0.0);
    const auto next = step_u0(c, 0.5 * stable_dt_u0(g, slow_op()), g, slow_op());
    for (double v : next.v) EXPECT_EQ(v, 0.37);
}

TEST(SlowOperator, PureDiffusionConservesMass) {
    const auto g = square(21);
    const auto op = slow_op(0.0);
    GridField u = phi_field(g);
    const double m0 = u.sum();
    const double dt = 0.9 * stable_dt_u0(g, op);
    for (int k = 0; k < 500; ++k) u = step_u0(u, dt, g, op);
    EXPECT_NEAR(u.sum(), m0, 1e-8);
}

TEST(SlowOperator, MaximumPrinciple) {
    const auto g = square(21);
    const auto op = slow_op();
    GridField u = phi_field(g);
    double lo = u.min(), hi = u.max();
    const double dt = 0.9 * stable_dt_u0(g, op);
    for (int k = 0; k < 400; ++k) {
        u = step_u0(u, dt, g, op);
        EXPECT_GE(u.min(), lo - 1e-6);
        EXPECT_LE(u.max(), hi + 1e-6);
        lo = u.min();
        hi = u.max();
    }
    EXPECT_LT(hi - lo, 1.0);
}

TEST(SlowOperator, UnstableStepIsRejected) {
    const auto g = square(21);
    const GridField u = phi_field(g);
    EXPECT_THROW(step_u0(u, 2.0 * stable_dt_u0(g, slow_op()), g, slow_op()), ConfigError);
    EXPECT_THROW(step_u0(u, -1.0, g, slow_op()), ConfigError);
}

TEST(FastCell, ZeroRightHandSide) {
    const auto g = square(21);
    const FastOperator f{0.8, 0.3};
    const auto u = solve_u2_cell(g, f, GridField(g));
    for (double v : u.v) EXPECT_NEAR(v, 0.0, 1e-14);
    EXPECT_THROW(solve_u2_cell(g, FastOperator{0.0, 0.0}, GridField(g)), DomainError);
    EXPECT_THROW(solve_u2_cell(g, f, GridField(3, 3)), ConfigError);
}

TEST(FastCell, OddDataGivesOddSolution) {
    const auto g = square(25);
    const FastOperator f{0.6, -0.9, 1.0, 0.7, 0.4};
    GridField rhs(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const double r = g.a.x(i), s = g.b.x(j);
            rhs(i, j) = r * std::exp(-0.1 * s * s) + 0.3 * s * s * s / 25.0;
        }
    const auto c = rho_functional(g, f.density());
    const auto u = solve_u2_cell(g, f, rhs, &c);
    const int n = g.a.n;
    double scale = 0;
    for (double v : u.v) scale = std::max(scale, std::abs(v));
    ASSERT_GT(scale, 1e-3);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) EXPECT_NEAR(u(i, j), -u(n - 1 - i, n - 1 - j), 1e-10 * scale);
}

TEST(FastCell, ManufacturedSolutionSecondOrder) {
    std::vector<double> h, err;
    for (int n : {21, 41, 81}) {
        h.push_back(10.0 / n);
        err.push_back(manufactured_error(n));
    }
    EXPECT_GE(loglog_slope(h, err), 1.8);
    EXPECT_LT(err.back(), 5e-3);
}

TEST(FastCell, QuadraticRecoveredInInterior) {
    // r^2 violates the box's Neumann condition, so only the interior is close.
    const int n = 81;
    const RSGrid g = square(n);
    const FastOperator f{1.0, 0.0, 1.0, 0.5, 0.5};
    const double a = f.rate(), D = f.D() * 0.25;
    GridField rhs(g), exact(g);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double r = g.a.x(i);
            rhs(i, j) = -(-a * 2 * r * r + 2 * D);
            exact(i, j) = r * r;
        }
    const auto c = rho_functional(g, f.density());
    double mean = 0;
    for (std::size_t k = 0; k < c.size(); ++k) mean += c[k] * exact.v[k];
    const auto u = solve_u2_cell(g, f, rhs, &c);
    double worst = 0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (std::abs(g.a.x(i)) < 2.0 && std::abs(g.b.x(j)) < 2.0)
                worst = std::max(worst, std::abs(u(i, j) - (exact(i, j) - mean)));
    EXPECT_LT(worst, 0.05);
}

TEST(FastCell, FluxMomentMatchesClosedForm) {
    // Closed form on the whole plane; compare where the density is resolved
    // and fits inside the box.
    const auto sig = ReducedSigmas::from_alpha0(0.349);
    for (double p : {1.0, 1.5, 2.0}) {
        const FastOperator f{p, 0.0, 1.0, sig.s5, sig.s7};
        const auto cell = solve_fast_cell(square(81), f, false);
        EXPECT_NEAR(cell.m, moment_r2s2(f.density()), 1e-14);
        EXPECT_NEAR(cell.J, analytic_fast_J(f), 0.01 * std::abs(analytic_fast_J(f))) << "p = " << p;
    }
}

TEST(FastCell, RhoFunctionalAgainstMonteCarlo) {
    const RSGrid g = square(81);
    const OUDensityParams op{0.9, 0.5, 1.0, 0.6, 0.5};
    const auto c = rho_functional(g, op);
    // Even field v = exp(-(r^2 + s^2)/8) cos(rs/3); integrand r v_r + s v_s.
    const auto v = [](double r, double s) { return std::exp(-(r * r + s * s) / 8) * std::cos(r * s / 3); };
    const auto flux = [](double r, double s) {
        const double e = std::exp(-(r * r + s * s) / 8), cs = std::cos(r * s / 3), sn = std::sin(r * s / 3);
        const double vr = e * (-r / 4 * cs - s / 3 * sn), vs = e * (-s / 4 * cs - r / 3 * sn);
        return r * vr + s * vs;
    };
    GridField field(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) field(i, j) = v(g.a.x(i), g.b.x(j));
    const double quad = radial_derivative_moment(field, g, c);

    std::mt19937_64 gen(21);
    std::normal_distribution<double> nr(0, std::sqrt(op.var_r())), ns(0, std::sqrt(op.var_s()));
    const int N = 200000;
    double s1 = 0, s2 = 0;
    for (int k = 0; k < N; ++k) {
        const double x = flux(nr(gen), ns(gen));
        s1 += x;
        s2 += x * x;
    }
    const double mean = s1 / N, sd = std::sqrt((s2 / N - mean * mean) / N);
    EXPECT_NEAR(quad, mean, 3 * sd);
    double total = 0;
    for (double w : c) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(U1Source, VanishesForConstantsAndFlipsWithEpsilon0) {
    CascadeSolution sol;
    sol.config = tiny_cascade(1.0);
    const auto& g = sol.config.pq;
    sol.J = GridField(g, -3.0);
    const auto zero = u1_source(GridField(g, 0.42), sol);
    for (double v : zero.v) EXPECT_EQ(v, 0.0);
    const auto plus = u1_source(phi_field(g), sol);
    sol.config.epsilon0 = -1.0;
    const auto minus = u1_source(phi_field(g), sol);
    double scale = 0;
    for (std::size_t k = 0; k < plus.v.size(); ++k) {
        EXPECT_EQ(plus.v[k], -minus.v[k]);
        scale = std::max(scale, std::abs(plus.v[k]));
    }
    EXPECT_GT(scale, 0.0);
}

TEST(Cascade, EpsilonZeroBranchAntisymmetry) {
    const auto a = solve_cascade(tiny_cascade(1.0));
    const auto b = solve_cascade(tiny_cascade(-1.0));
    ASSERT_EQ(a.tau.size(), 3u);
    ASSERT_EQ(a.tau, b.tau);
    for (std::size_t k = 0; k < a.tau.size(); ++k) {
        EXPECT_EQ(a.u0[k].v, b.u0[k].v);
        for (std::size_t n = 0; n < a.u1[k].v.size(); ++n) EXPECT_EQ(a.u1[k].v[n], -b.u1[k].v[n]);
    }
    double scale = 0;
    for (double v : a.u1.back().v) scale = std::max(scale, std::abs(v));
    EXPECT_GT(scale, 1e-6);
}

TEST(Cascade, ConfigurationErrors) {
    auto c = tiny_cascade(1.0);
    c.epsilon0 = 0.5;
    EXPECT_THROW(solve_cascade(c), ConfigError);
    c = tiny_cascade(1.0);
    c.dt_tau = 10.0;
    EXPECT_THROW(solve_cascade(c), ConfigError);
    c = tiny_cascade(1.0);
    c.tau_end = 0.75;
    EXPECT_THROW(solve_cascade(c), ConfigError);
    c = tiny_cascade(1.0);
    c.pq.a.n = 2;
    EXPECT_THROW(solve_cascade(c), ConfigError);
}

TEST(Uhat, InitialTimeIsPhiAndSmallEpsilonIsU0) {
    const auto sol = solve_cascade(tiny_cascade(1.0));
    const auto u = uhat(sol, 0.1, 0.0);
    EXPECT_EQ(u.v, phi_field(sol.config.pq).v);
    const auto small = uhat(sol, 1e-9, 0.5e9);
    for (std::size_t n = 0; n < small.v.size(); ++n) EXPECT_NEAR(small.v[n], sol.u0[1].v[n], 1e-8);
    EXPECT_THROW(uhat(sol, 0.1, 100.0), ConfigError);
    EXPECT_NEAR(tau_of_t(20, 0.1, TimeMap::kScaled), 2.0, 1e-15);
    EXPECT_NEAR(tau_of_t(0.2, 0.1, TimeMap::kInverse), 2.0, 1e-15);
    EXPECT_THROW(tau_of_t(1, 0.0, TimeMap::kScaled), ConfigError);
    const auto series = uhat_series(sol, 0.1, 1.0, 0.0, {0.0});
    EXPECT_NEAR(series[0], interpolate(phi_field(sol.config.pq), sol.config.pq, 1.0, 0.0), 1e-15);
}

TEST(Interpolate, ExactForBilinearFields) {
    const auto g = square(11);
    GridField f(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) f(i, j) = 1 + 2 * g.a.x(i) - g.b.x(j) + 0.5 * g.a.x(i) * g.b.x(j);
    for (auto [p, q] : {std::pair{0.1, 0.1}, std::pair{-3.3, 2.7}, std::pair{4.0, -4.4}})
        EXPECT_NEAR(interpolate(f, g, p, q), 1 + 2 * p - q + 0.5 * p * q, 1e-13);
}

TEST(RelativeError, Examples) {
    const auto z = relative_error({0.3, 0.55, 1.0}, {0.3, 0.5, 0.0});
    EXPECT_EQ(z[0], 0.0);
    EXPECT_NEAR(z[1], 0.1, 1e-15);
    EXPECT_TRUE(std::isnan(z[2]));
    EXPECT_THROW(relative_error({1.0}, {}), ConfigError);
    EXPECT_EQ(initial_window_length({0, 1, 2, 3}, {0.0, 0.05, 0.2, 0.0}, 0.1), 2.0);
    EXPECT_EQ(initial_window_length({0, 1, 2, 3}, {0.0, 0.05, 0.02, 0.0}, 0.1), 3.0);
    EXPECT_EQ(initial_window_length({0, 1}, {NAN, 0.0}, 0.1), 0.0);
    const auto r = resample({0, 1, 2}, {0, 10, 0}, {0.5, 1.5, 2.0});
    EXPECT_NEAR(r[0], 5, 1e-15);
    EXPECT_NEAR(r[1], 5, 1e-15);
    EXPECT_NEAR(r[2], 0, 1e-15);
    EXPECT_THROW(resample({0, 1}, {0, 1}, {2.0}), ConfigError);
}
