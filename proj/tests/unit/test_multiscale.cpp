#include <gtest/gtest.h>

#include <boost/math/differentiation/autodiff.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "qss/multiscale.hpp"

using namespace qss;
namespace ad = boost::math::differentiation;

namespace {

// Taylor coefficients of f(e) at e = 0 from third-order forward-mode AD.
template <class F>
TaylorCoefficients::Series ad_series(F f) {
    const auto e = ad::make_fvar<double, 3>(0.0);
    const auto y = f(e);
    return {y.derivative(0), y.derivative(1), y.derivative(2) / 2.0, y.derivative(3) / 6.0};
}

void expect_series(const TaylorCoefficients::Series& got, const TaylorCoefficients::Series& want, const char* name) {
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(got[k], want[k], 1e-14) << name << " order " << k;
}

Jet jet_of_p() {
    Jet j;
    j.value = 0;
    j.d = {1, 0, 0, 0};
    return j;
}

ScalingParams printed(double nu0 = 1.0) {
    ScalingParams s;
    s.nu0 = nu0;
    s.diffusion = DiffusionConvention::kPrinted;
    return s;
}

}  // namespace

TEST(TaylorCoefficients, MatchAutodiffExpansion) {
    using std::sqrt;
    const TaylorCoefficients tc;
    // delta^2 = 1 + e.
    expect_series(tc.p_cubic, ad_series([](auto e) {
                      auto d2 = 1 + e;
                      return 3 * d2 * d2 * d2 / (2 * (4 + d2) * (1 + d2) * (1 + d2));
                  }),
                  "p_cubic");
    expect_series(tc.p_quadratic, ad_series([](auto e) {
                      auto d2 = 1 + e;
                      return 1 / (sqrt(d2) * (1 + d2));
                  }),
                  "p_quadratic");
    expect_series(tc.p_linear, ad_series([](auto e) { return 1 / (1 + e); }), "p_linear");
    expect_series(tc.q_cubic, ad_series([](auto e) {
                      auto d2 = 1 + e;
                      return 3 * d2 / (2 * (1 + 4 * d2) * (1 + d2) * (1 + d2));
                  }),
                  "q_cubic");
    expect_series(tc.q_quadratic, ad_series([](auto e) {
                      auto d2 = 1 + e;
                      return d2 * sqrt(d2) / (1 + d2);
                  }),
                  "q_quadratic");
    expect_series(tc.r_linear, ad_series([](auto e) { return (2 + e) / (1 + e); }), "r_linear");
    expect_series(tc.r_pq, ad_series([](auto e) { return e / sqrt(1 + e); }), "r_pq");
    expect_series(tc.r_p2, ad_series([](auto e) {
                      auto d2 = 1 + e;
                      return d2 * d2 * d2 * (3 + d2) / (2 * (4 + d2) * (1 + d2));
                  }),
                  "r_p2");
    expect_series(tc.r_q2, ad_series([](auto e) {
                      auto d2 = 1 + e;
                      return (1 + 3 * d2) / (2 * d2 * (1 + 4 * d2) * (1 + d2));
                  }),
                  "r_q2");
}

TEST(ScaledDrift, EpsilonZeroKeepsOnlyCubicSlowTerms) {
    ScalingParams sp;
    sp.epsilon = 0.0;
    sp.nu0 = 0.8;
    const ReducedStateR x{0.6, -0.3, 1.2, 0.4};
    const auto b = scaled_drift_exact(x, sp);
    const double h = x.r * x.r + x.s * x.s;
    EXPECT_NEAR(b[0], 3.0 / (40 * sp.nu0) * x.p * h, 1e-15);
    EXPECT_NEAR(b[1], 3.0 / (40 * sp.nu0) * x.q * h, 1e-15);
    const auto t = drift_taylor({1, 0, 1, 1}, [] {
        ScalingParams s;
        s.epsilon = 0.0;
        return s;
    }());
    EXPECT_NEAR(t[0], 0.15, 1e-15);
}

TEST(ScaledDrift, TaylorResidualIsFourthOrder) {
    const ReducedStateR x{0.7, -0.5, 0.9, 0.3};
    std::vector<double> eps{0.2, 0.1, 0.05}, res;
    for (double e : eps) {
        double worst = 0;
        for (double e0 : {1.0, -1.0}) worst = std::max(worst, drift_taylor_residual(x, ScalingParams::standard(e, e0)));
        res.push_back(worst);
    }
    EXPECT_GE(loglog_slope(eps, res), 3.5);
}

TEST(ScalingParams, Validation) {
    EXPECT_THROW(ScalingParams::standard(1.0, 1.0), ConfigError);
    EXPECT_THROW(ScalingParams::standard(0.1, 0.5), ConfigError);
    ScalingParams s;
    s.mu = 4;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(DiffusionMatrix, Examples) {
    const ReducedSigmas sig{0.3, 0.4, 0.5, 0.6};
    ScalingParams sp;
    sp.epsilon = 1.0;
    sp.nu0 = 2.0;
    auto m = diffusion_matrix(sp, sig);
    EXPECT_NEAR(m[0], 2.0 * 0.3, 1e-15);
    EXPECT_NEAR(m[3], 2.0 * 0.6, 1e-15);
    sp.epsilon = 0.1;
    m = diffusion_matrix(sp, sig);
    EXPECT_NEAR(m[0], 2.0 * 0.3, 1e-15);
    EXPECT_NEAR(m[2], 10 * 2.0 * 0.5, 1e-13);
    sp.nu0 = 0.0;
    m = diffusion_matrix(sp, sig);
    for (double v : m) EXPECT_EQ(v, 0.0);
}

TEST(Generator, HandEvaluatedTerms) {
    const auto sp = printed();
    Jet r2;
    r2.value = 1;
    r2.d = {0, 0, 2, 0};
    r2.dd = {0, 0, 2, 0};
    EXPECT_NEAR(apply_generator_term(0, r2, {1, 2, 1, 0}, sp, {0, 0, 1, 0}), 2.0, 1e-15);

    Jet p2;
    p2.value = 1;
    p2.d = {2, 0, 0, 0};
    p2.dd = {2, 0, 0, 0};
    EXPECT_NEAR(apply_generator_term(4, p2, {1, 0, 1, 1}, sp, {1, 0, 0, 0}), 4.3, 1e-15);

    EXPECT_NEAR(apply_generator_term(8, jet_of_p(), {0, 1, 2, 1}, sp, {}), -0.5, 1e-15);
}

TEST(Generator, WeightTable) {
    const ScalingParams sp;
    const double expect[kGeneratorTerms] = {-2, -1, 0, 1, 0, 1, 2, 3, 1, 2, 3, 4, 2, 3, 4, 5, 0, 1, 2};
    for (int i = 0; i < kGeneratorTerms; ++i) EXPECT_EQ(generator_weight(i, sp), expect[i]) << "L" << i;
    EXPECT_THROW(generator_weight(19, sp), std::out_of_range);
    EXPECT_THROW(apply_generator_term(-1, Jet{}, {}, sp, {}), std::out_of_range);
}

TEST(Generator, ConstantsAreAnnihilated) {
    Jet c;
    c.value = 3.0;
    const ReducedSigmas sig{0.7, 0.7, 0.5, 0.5};
    for (double e0 : {1.0, -1.0}) {
        ScalingParams sp = printed();
        sp.epsilon0 = e0;
        for (int i = 0; i < kGeneratorTerms; ++i) EXPECT_EQ(apply_generator_term(i, c, {0.3, 0.2, 1, -1}, sp, sig), 0.0);
    }
}

TEST(Generator, FastCouplingIgnoresSlowFunctions) {
    const ScalingParams sp;
    for (const auto& u : slow_test_jets(0.4, -0.9))
        for (int i : {16, 17, 18}) EXPECT_EQ(apply_generator_term(i, u, {0.4, -0.9, 1.1, 0.2}, sp, {}), 0.0);
}

TEST(Generator, DecompositionResidualIsFourthOrder) {
    const ReducedSigmas sig = ReducedSigmas::from_alpha0(0.349);
    const ReducedStateR x{0.8, 0.6, 0.5, -0.7};
    Jet u;
    u.value = x.p * x.p + x.q * x.q;
    u.d = {2 * x.p, 2 * x.q, 0, 0};
    u.dd = {2, 2, 0, 0};
    std::vector<double> eps{0.2, 0.1, 0.05}, res;
    for (double e : eps) {
        double worst = 0;
        for (double e0 : {1.0, -1.0})
            worst = std::max(worst, generator_decomposition_residual(u, x, ScalingParams::standard(e, e0), sig));
        res.push_back(worst);
    }
    EXPECT_GE(loglog_slope(eps, res), 3.5);
}

TEST(Generator, FastGroupsCancelSingularTerms) {
    // For fast test functions the eps^-2 and eps^-1 pieces of the exact
    // generator are matched by L0..L1, so the residual still vanishes as eps -> 0.
    const ReducedSigmas sig = ReducedSigmas::from_alpha0(0.349);
    const ReducedStateR x{0.8, 0.6, 0.5, -0.7};
    for (const auto& u : fast_test_jets(x.r, x.s)) {
        std::vector<double> eps{0.02, 0.01, 0.005}, res;
        for (double e : eps) res.push_back(generator_decomposition_residual(u, x, ScalingParams::standard(e, 1.0), sig));
        const double scale = std::abs(apply_generator_term(0, u, x, ScalingParams{}, sig)) / (eps[2] * eps[2]);
        EXPECT_LT(res[2], 1e-3 * scale);
        EXPECT_GT(loglog_slope(eps, res), 1.5);
    }
}

TEST(StationaryDensity, NormalizationAndVariance) {
    for (const OUDensityParams op : {OUDensityParams{1, 2, 1, 1, 1}, OUDensityParams{0.3, -0.1, 0.7, 0.5, 0.8}}) {
        EXPECT_NEAR(density_normalization(op), 1.0, 1e-8);
        EXPECT_LT(stationarity_residual(op), 1e-6);
    }
    const OUDensityParams op{1, 2, 1, 1, 1};
    EXPECT_NEAR(op.var_r(), 1.0, 1e-15);
    EXPECT_NEAR(rho_expectation([](double r, double) { return r * r; }, op), 1.0, 1e-12);
    EXPECT_THROW(stationary_density({0, 0, 1, 1, 1}, 0, 0), DomainError);
    EXPECT_THROW(stationary_density({1, 0, 1, 0, 1}, 0, 0), ConfigError);
}

TEST(StationaryDensity, MomentsAgainstAdaptiveQuadrature) {
    const OUDensityParams unit{3, 1, 1, 1, 1};
    EXPECT_NEAR(moment_r2s2(unit), 1.0, 1e-15);
    EXPECT_EQ(moment_rminus_s(unit), 0.0);

    const OUDensityParams op{0.5, 0.4, 0.9, 0.7, 0.45};
    using boost::math::quadrature::gauss_kronrod;
    const double L = 12 * std::sqrt(std::max(op.var_r(), op.var_s()));
    const auto outer = [&](auto&& g) {
        return gauss_kronrod<double, 61>::integrate(
            [&](double r) {
                return gauss_kronrod<double, 61>::integrate([&](double s) { return g(r, s) * stationary_density(op, r, s); },
                                                            -L, L, 10, 1e-13);
            },
            -L, L, 10, 1e-13);
    };
    EXPECT_NEAR(outer([](double r, double s) { return r * r + s * s; }), moment_r2s2(op), 1e-8);
    EXPECT_NEAR(outer([](double r, double s) { return r - s; }), 0.0, 1e-10);
    EXPECT_NEAR(rho_expectation([](double r, double s) { return r * r + s * s; }, op), moment_r2s2(op), 1e-12);
}

TEST(EffectiveDrift, Examples) {
    const auto [bp, bq] = effective_slow_drift(1, 0, 1, 1, 1);
    EXPECT_NEAR(bp, 0.75, 1e-15);
    EXPECT_EQ(bq, 0.0);
    // Radial: b = k (p, q) / (p^2 + q^2) is parallel to (p, q) with |b| |(p,q)| = k.
    const auto [cp, cq] = effective_slow_drift(0.6, -0.8, 2, 0.5, 0.4);
    EXPECT_NEAR(cp * -0.8 - cq * 0.6, 0.0, 1e-15);
    EXPECT_NEAR(std::hypot(cp, cq), 3.0 * 2 / 8 * 0.41, 1e-15);
    EXPECT_THROW(effective_slow_drift(0, 0, 1, 1, 1), DomainError);
}

TEST(MultiscaleReport, SuitePasses) {
    const auto rep = multiscale_report({0.2, 0.1, 0.05}, 1.0, ReducedSigmas::from_alpha0(0.349), {0.7, -0.4, 0.6, 0.3}, 1.0, 0.5);
    EXPECT_GE(rep.drift_slope, 3.5);
    EXPECT_GE(rep.generator_slope, 3.5);
    EXPECT_NEAR(rep.normalization, 1.0, 1e-8);
    EXPECT_LT(rep.stationarity, 1e-6);
    EXPECT_NEAR(rep.moment_quadrature, rep.moment_closed_form, 1e-8);
}
