#pragma once

// Slow-fast scaling of the real reduced system around delta = 1.
//
// With delta^2 = 1 + eps0 * eps, nu = eps^mu nu0, (p, q) = eps^-xi (p~, q~),
// (r, s) = eps^-eta (r~, s~) and tau = eps^gamma t, the drift splits into
// groups carrying explicit powers of eps. The backward Kolmogorov generator is
// expanded into the nineteen operators L0..L18 evaluated by apply_generator_term.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qss/errors.hpp"
#include "qss/quadrature.hpp"
#include "qss/reduced.hpp"

namespace qss {

/// Diffusion coefficient multiplying sigma_i^2 d^2/dx_i^2 in L0 and L4 (and in
/// the u0 equation). kIto uses nu0, which is (1/2) Sigma^2 for noise sqrt(2 nu0) sigma;
/// kPrinted uses 2 nu0.
enum class DiffusionConvention { kIto, kPrinted };

struct ScalingParams {
    double epsilon = 0.1;
    double epsilon0 = 1.0;
    double nu0 = 1.0;
    double mu = 3.0, xi = 1.0, eta = 2.0, gamma = 1.0;
    DiffusionConvention diffusion = DiffusionConvention::kIto;

    static ScalingParams standard(double epsilon, double epsilon0, double nu0 = 1.0) {
        ScalingParams s;
        s.epsilon = epsilon;
        s.epsilon0 = epsilon0;
        s.nu0 = nu0;
        s.validate();
        return s;
    }

    double delta_sq() const { return 1.0 + epsilon0 * epsilon; }
    double delta() const { return std::sqrt(delta_sq()); }
    double nu() const { return std::pow(epsilon, mu) * nu0; }
    double diffusion_coefficient() const {
        return diffusion == DiffusionConvention::kIto ? nu0 : 2.0 * nu0;
    }

    void validate() const {
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
        if (epsilon0 != 1.0 && epsilon0 != -1.0) throw ConfigError("epsilon0 must be +1 or -1");
        if (!(nu0 >= 0.0)) throw ConfigError("nu0 must be >= 0");
        if (std::abs(2.0 * eta - (mu + gamma)) > 1e-12) throw ConfigError("exponents violate 2 eta = mu + gamma");
        if (std::abs(2.0 * xi - (mu - gamma)) > 1e-12) throw ConfigError("exponents violate 2 xi = mu - gamma");
        if (!(delta_sq() > 0.0)) throw ConfigError("delta^2 = 1 + eps0 eps must be positive");
    }
};

using Vec4 = std::array<double, 4>;

/// Drift components grouped by the explicit eps power in front of them.
struct ScaledDriftGroups {
    Vec4 linear{};     // eps^(2 xi)
    Vec4 quadratic{};  // eps^xi for (p, q); eps^(3 xi - 2 eta) for (r, s)
    Vec4 cubic{};      // eps^0 for (p, q); eps^(2 (xi - eta)) for (r, s)
};

inline ScaledDriftGroups scaled_drift_groups(const ReducedStateR& x, const ScalingParams& sp) {
    sp.validate();
    if (!(sp.nu0 > 0.0)) throw ConfigError("nu0 must be positive for the scaled drift");
    const auto c = ReducedCoefficients::make(sp.nu0, sp.delta());
    ScaledDriftGroups g;
    g.linear = {-c.lin1 * x.p, -c.lin3 * x.q, -c.lin5 * x.r, -c.lin5 * x.s};
    g.quadratic = {c.quad1 * x.q * (x.s - x.r), c.quad3 * x.p * (x.r - x.s), -c.quad5 * x.p * x.q,
                   c.quad5 * x.p * x.q};
    const double high = x.r * x.r + x.s * x.s;
    const double damp = c.cub5x * x.p * x.p + c.cub5y * x.q * x.q;
    g.cubic = {c.cub1 * x.p * high, c.cub3 * x.q * high, -damp * x.r, -damp * x.s};
    return g;
}

/// Explicit eps exponents (linear, quadratic, cubic) for the slow and fast rows.
struct DriftExponents {
    std::array<double, 3> slow, fast;
};

inline DriftExponents drift_exponents(const ScalingParams& sp) {
    return {{2.0 * sp.xi, sp.xi, 0.0}, {2.0 * sp.xi, 3.0 * sp.xi - 2.0 * sp.eta, 2.0 * (sp.xi - sp.eta)}};
}

namespace detail {
inline double eps_pow(double eps, double e) {
    if (e == 0.0) return 1.0;
    return std::pow(eps, e);
}
}  // namespace detail

/// Scaled drift with the exact delta-dependent coefficients.
inline Vec4 scaled_drift_exact(const ReducedStateR& x, const ScalingParams& sp) {
    const auto g = scaled_drift_groups(x, sp);
    const auto ex = drift_exponents(sp);
    Vec4 b{};
    for (int i = 0; i < 4; ++i) {
        const auto& e = i < 2 ? ex.slow : ex.fast;
        b[i] = detail::eps_pow(sp.epsilon, e[0]) * g.linear[i] + detail::eps_pow(sp.epsilon, e[1]) * g.quadratic[i] +
               detail::eps_pow(sp.epsilon, e[2]) * g.cubic[i];
    }
    return b;
}

/// Cubic series in e = delta^2 - 1 = eps0 * eps for each delta-dependent coefficient.
struct TaylorCoefficients {
    using Series = std::array<double, 4>;
    Series p_cubic{3.0 / 40, 27.0 / 200, 117.0 / 4000, -123.0 / 5000};  // 3 d^6 / (2 (4+d^2)(1+d^2)^2)
    Series p_quadratic{0.5, -0.5, 7.0 / 16, -3.0 / 8};                  // 1 / (d (1+d^2))
    Series p_linear{1.0, -1.0, 1.0, -1.0};                              // 1 / d^2
    Series q_cubic{3.0 / 40, -3.0 / 50, 117.0 / 4000, -93.0 / 20000};   // 3 d^2 / (2 (1+4d^2)(1+d^2)^2)
    Series q_quadratic{0.5, 0.5, -1.0 / 16, 0.0};                       // d^3 / (1+d^2)
    Series q_linear{1.0, 0.0, 0.0, 0.0};                                // 1
    Series r_linear{2.0, -1.0, 1.0, -1.0};                              // (1+d^2) / d^2
    Series r_pq{0.0, 1.0, -0.5, 3.0 / 8};                               // (d^2-1) / d
    Series r_p2{0.2, 51.0 / 100, 373.0 / 1000, 379.0 / 10000};          // d^6 (3+d^2) / (2 (4+d^2)(1+d^2))
    Series r_q2{0.2, -31.0 / 100, 373.0 / 1000, -4109.0 / 10000};       // (1+3d^2) / (2 d^2 (1+4d^2)(1+d^2))

    static double eval(const Series& s, double e) { return s[0] + e * (s[1] + e * (s[2] + e * s[3])); }
};

/// Drift with every delta coefficient replaced by its cubic Taylor polynomial.
inline Vec4 drift_taylor(const ReducedStateR& x, const ScalingParams& sp,
                         const TaylorCoefficients& tc = TaylorCoefficients{}) {
    sp.validate();
    if (!(sp.nu0 > 0.0)) throw ConfigError("nu0 must be positive for the scaled drift");
    const double e = sp.epsilon0 * sp.epsilon;
    const auto ex = drift_exponents(sp);
    const auto w = [&](double k) { return detail::eps_pow(sp.epsilon, k); };
    const auto T = [&](const TaylorCoefficients::Series& s) { return TaylorCoefficients::eval(s, e); };
    const double nu0 = sp.nu0;
    const double high = x.r * x.r + x.s * x.s;
    const double damp = (T(tc.r_p2) * x.p * x.p + T(tc.r_q2) * x.q * x.q) / nu0;
    const double pq = x.p * x.q;
    return {
        w(ex.slow[2]) * T(tc.p_cubic) / nu0 * x.p * high + w(ex.slow[1]) * T(tc.p_quadratic) * x.q * (x.s - x.r) -
            w(ex.slow[0]) * nu0 * T(tc.p_linear) * x.p,
        w(ex.slow[2]) * T(tc.q_cubic) / nu0 * x.q * high + w(ex.slow[1]) * T(tc.q_quadratic) * x.p * (x.r - x.s) -
            w(ex.slow[0]) * nu0 * T(tc.q_linear) * x.q,
        -w(ex.fast[2]) * damp * x.r - w(ex.fast[0]) * nu0 * T(tc.r_linear) * x.r - w(ex.fast[1]) * T(tc.r_pq) * pq,
        -w(ex.fast[2]) * damp * x.s - w(ex.fast[0]) * nu0 * T(tc.r_linear) * x.s + w(ex.fast[1]) * T(tc.r_pq) * pq,
    };
}

/// Largest component of |exact - Taylor| after dividing each component by its
/// leading eps power (eps^0 for p, q; eps^(2 (xi - eta)) for r, s).
inline double drift_taylor_residual(const ReducedStateR& x, const ScalingParams& sp) {
    const Vec4 a = scaled_drift_exact(x, sp);
    const Vec4 b = drift_taylor(x, sp);
    const double fast = detail::eps_pow(sp.epsilon, -2.0 * (sp.xi - sp.eta));
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(a[i] - b[i]) * (i < 2 ? 1.0 : fast));
    return worst;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("loglog_slope: values must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Diagonal of the diffusion matrix Sigma^eps.
inline Vec4 diffusion_matrix(const ScalingParams& sp, const ReducedSigmas& sig) {
    const double a = std::sqrt(2.0 * sp.nu0);
    const double fast = detail::eps_pow(sp.epsilon, sp.xi - sp.eta);
    return {a * sig.s1, a * sig.s3, fast * a * sig.s5, fast * a * sig.s7};
}

/// Value, gradient and diagonal Hessian of a test function at a point of (p, q, r, s).
struct Jet {
    double value = 0.0;
    Vec4 d{};   // d/dp, d/dq, d/dr, d/ds
    Vec4 dd{};  // d2/dp2, d2/dq2, d2/dr2, d2/ds2
};

inline constexpr int kGeneratorTerms = 19;

/// Explicit eps exponent in front of L_i.
inline double generator_weight(int i, const ScalingParams& sp) {
    if (i < 0 || i >= kGeneratorTerms) throw std::out_of_range("generator index must be in 0..18");
    if (i <= 3) return 2.0 * (sp.xi - sp.eta) + i;
    if (i <= 7) return i - 4.0;
    if (i <= 11) return sp.xi + (i - 8);
    if (i <= 15) return 2.0 * sp.xi + (i - 12);
    return 3.0 * sp.xi - 2.0 * sp.eta + (i - 15);
}

/// L_i u at x. Only eps0, nu0 and the diffusion convention of `sp` are used.
inline double apply_generator_term(int i, const Jet& u, const ReducedStateR& x, const ScalingParams& sp,
                                   const ReducedSigmas& sig) {
    if (i < 0 || i >= kGeneratorTerms) throw std::out_of_range("generator index must be in 0..18");
    const double p = x.p, q = x.q, r = x.r, s = x.s;
    const double e0 = sp.epsilon0, nu0 = sp.nu0, D = sp.diffusion_coefficient();
    const double up = u.d[0], uq = u.d[1], ur = u.d[2], us = u.d[3];
    const double p2 = p * p, q2 = q * q, rs2 = r * r + s * s;
    const double radial_fast = r * ur + s * us;
    const double radial_slow = p * up + q * uq;
    switch (i) {
        case 0: return -(p2 + q2) / (5.0 * nu0) * radial_fast + D * (sig.s5 * sig.s5 * u.dd[2] + sig.s7 * sig.s7 * u.dd[3]);
        case 1: return -e0 / (100.0 * nu0) * (51.0 * p2 - 31.0 * q2) * radial_fast;
        case 2: return -373.0 / (1000.0 * nu0) * (p2 + q2) * radial_fast;
        case 3: return -e0 / (10000.0 * nu0) * (379.0 * p2 - 4109.0 * q2) * radial_fast;
        case 4: return 3.0 / (40.0 * nu0) * rs2 * radial_slow + D * (sig.s1 * sig.s1 * u.dd[0] + sig.s3 * sig.s3 * u.dd[1]);
        case 5: return e0 / nu0 * rs2 * (27.0 / 200.0 * p * up - 3.0 / 50.0 * q * uq);
        case 6: return 117.0 / (4000.0 * nu0) * rs2 * radial_slow;
        case 7: return -e0 / nu0 * rs2 * (123.0 / 5000.0 * p * up + 93.0 / 20000.0 * q * uq);
        case 8: return -0.5 * (r - s) * (q * up - p * uq);
        case 9: return 0.5 * e0 * (r - s) * (q * up + p * uq);
        case 10: return -(r - s) * (7.0 * q * up + p * uq) / 16.0;
        case 11: return 3.0 * e0 / 8.0 * q * (r - s) * up;
        case 12: return -nu0 * (radial_slow + 2.0 * radial_fast);
        case 13: return nu0 * e0 * (p * up + radial_fast);
        case 14: return -nu0 * (p * up + radial_fast);
        case 15: return nu0 * e0 * (p * up + radial_fast);
        case 16: return -e0 * p * q * (ur - us);
        case 17: return 0.5 * p * q * (ur - us);
        default: return -3.0 * e0 / 8.0 * p * q * (ur - us);
    }
}

/// Sum_i eps^{w_i} L_i u.
inline double generator_expansion(const Jet& u, const ReducedStateR& x, const ScalingParams& sp,
                                  const ReducedSigmas& sig) {
    double total = 0.0;
    for (int i = 0; i < kGeneratorTerms; ++i)
        total += detail::eps_pow(sp.epsilon, generator_weight(i, sp)) * apply_generator_term(i, u, x, sp, sig);
    return total;
}

/// b^eps . grad u + (1/2) Tr(Sigma^2 H(u)) with the exact scaled drift.
inline double generator_exact(const Jet& u, const ReducedStateR& x, const ScalingParams& sp,
                              const ReducedSigmas& sig) {
    const Vec4 b = scaled_drift_exact(x, sp);
    const Vec4 diag = diffusion_matrix(sp, sig);
    double total = 0.0;
    for (int i = 0; i < 4; ++i) total += b[i] * u.d[i] + 0.5 * diag[i] * diag[i] * u.dd[i];
    return total;
}

/// |exact generator - expansion| at x.
inline double generator_decomposition_residual(const Jet& u, const ReducedStateR& x, const ScalingParams& sp,
                                               const ReducedSigmas& sig) {
    return std::abs(generator_exact(u, x, sp, sig) - generator_expansion(u, x, sp, sig));
}

/// Frozen slow variables and noise levels of the fast Ornstein-Uhlenbeck block.
struct OUDensityParams {
    double p = 1.0, q = 0.0;
    double nu0 = 1.0;
    double sigma5 = 1.0, sigma7 = 1.0;

    double slow_sq() const { return p * p + q * q; }
    void validate() const {
        if (!(slow_sq() > 0.0)) throw DomainError("fast block is singular at p = q = 0");
        if (!(nu0 > 0.0) || !(sigma5 > 0.0) || !(sigma7 > 0.0))
            throw ConfigError("nu0, sigma5 and sigma7 must be positive");
    }
    double var_r() const { return 5.0 * nu0 * nu0 * sigma5 * sigma5 / slow_sq(); }
    double var_s() const { return 5.0 * nu0 * nu0 * sigma7 * sigma7 / slow_sq(); }
    /// Relaxation rate (p^2 + q^2) / (5 nu0) of the fast block.
    double rate() const { return slow_sq() / (5.0 * nu0); }
};

inline double stationary_density(const OUDensityParams& op, double r, double s) {
    op.validate();
    const double a = op.slow_sq();
    const double nu2 = op.nu0 * op.nu0;
    return a / (10.0 * std::numbers::pi * nu2 * op.sigma5 * op.sigma7) *
           std::exp(-a / (10.0 * nu2) * (r * r / (op.sigma5 * op.sigma5) + s * s / (op.sigma7 * op.sigma7)));
}

/// E[r^2 + s^2] under the stationary density.
inline double moment_r2s2(const OUDensityParams& op) {
    op.validate();
    return 5.0 * op.nu0 * op.nu0 * (op.sigma5 * op.sigma5 + op.sigma7 * op.sigma7) / op.slow_sq();
}

/// E[r - s] under the stationary density.
inline double moment_rminus_s(const OUDensityParams& op) {
    op.validate();
    return 0.0;
}

/// E[f(r, s)] under the stationary density by tensor Gauss-Hermite quadrature.
template <class F>
double rho_expectation(F&& f, const OUDensityParams& op, int order = 32) {
    op.validate();
    return gaussian_expectation_2d(std::forward<F>(f), op.var_r(), op.var_s(), gauss_hermite_normal(order));
}

/// Averaged slow drift (3 nu0 / 8)(sigma5^2 + sigma7^2) (p, q) / (p^2 + q^2).
inline std::pair<double, double> effective_slow_drift(double p, double q, double nu0, double sigma5,
                                                      double sigma7) {
    const double a = p * p + q * q;
    if (!(a > 0.0)) throw DomainError("effective slow drift is singular at the origin");
    const double k = 3.0 * nu0 / 8.0 * (sigma5 * sigma5 + sigma7 * sigma7) / a;
    return {k * p, k * q};
}

}  // namespace qss

namespace qss {

/// Test functions for the fast block and their jets in (r, s).
inline std::vector<Jet> fast_test_jets(double r, double s) {
    std::vector<Jet> out;
    const auto make = [](double v, double dr, double ds, double drr, double dss) {
        Jet j;
        j.value = v;
        j.d = {0.0, 0.0, dr, ds};
        j.dd = {0.0, 0.0, drr, dss};
        return j;
    };
    out.push_back(make(r * r, 2 * r, 0, 2, 0));
    out.push_back(make(s * s, 0, 2 * s, 0, 2));
    out.push_back(make(r * s, s, r, 0, 0));
    out.push_back(make(r * r * r * r, 4 * r * r * r, 0, 12 * r * r, 0));
    out.push_back(make(r * r * s * s, 2 * r * s * s, 2 * r * r * s, 2 * s * s, 2 * r * r));
    out.push_back(make(std::cos(r) * std::exp(-0.1 * s * s), -std::sin(r) * std::exp(-0.1 * s * s),
                       -0.2 * s * std::cos(r) * std::exp(-0.1 * s * s), -std::cos(r) * std::exp(-0.1 * s * s),
                       std::cos(r) * (0.04 * s * s - 0.2) * std::exp(-0.1 * s * s)));
    return out;
}

/// Trapezoidal integral of the stationary density over +/- `width` standard
/// deviations with n points per axis.
inline double density_normalization(const OUDensityParams& op, int n = 401, double width = 12.0) {
    op.validate();
    const double ar = width * std::sqrt(op.var_r()), as = width * std::sqrt(op.var_s());
    const double hr = 2 * ar / (n - 1), hs = 2 * as / (n - 1);
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
            sum += w * stationary_density(op, -ar + i * hr, -as + j * hs);
        }
    return sum * hr * hs;
}

/// max over the fast test functions of |E_rho[L0 f]|.
inline double stationarity_residual(const OUDensityParams& op) {
    const ScalingParams sp = [&] {
        ScalingParams s;
        s.nu0 = op.nu0;
        return s;
    }();
    ReducedSigmas sig{0.0, 0.0, op.sigma5, op.sigma7};
    const double a = std::sqrt(op.slow_sq());
    double worst = 0.0;
    for (std::size_t k = 0; k < fast_test_jets(0, 0).size(); ++k) {
        const double v = rho_expectation(
            [&](double r, double s) {
                return apply_generator_term(0, fast_test_jets(r, s)[k], ReducedStateR{a, 0.0, r, s}, sp, sig);
            },
            op);
        worst = std::max(worst, std::abs(v));
    }
    return worst;
}

/// Jets of the slow polynomial test functions in (p, q).
inline std::vector<Jet> slow_test_jets(double p, double q) {
    std::vector<Jet> out;
    const auto make = [](double v, double dp, double dq, double dpp, double dqq) {
        Jet j;
        j.value = v;
        j.d = {dp, dq, 0.0, 0.0};
        j.dd = {dpp, dqq, 0.0, 0.0};
        return j;
    };
    out.push_back(make(p * p, 2 * p, 0, 2, 0));
    out.push_back(make(p * q, q, p, 0, 0));
    out.push_back(make(p * p * p * q - 2 * q * q * q * q, 3 * p * p * q, p * p * p - 8 * q * q * q, 6 * p * q, -24 * q * q));
    return out;
}

struct MultiscaleReport {
    std::vector<double> epsilons;
    std::vector<double> drift_residual;      // max over eps0 = +/-1
    std::vector<double> generator_residual;  // max over eps0 and slow test functions
    double drift_slope = 0.0;
    double generator_slope = 0.0;
    double normalization = 0.0;
    double stationarity = 0.0;
    double moment_quadrature = 0.0;
    double moment_closed_form = 0.0;
};

inline MultiscaleReport multiscale_report(const std::vector<double>& epsilons, double nu0, const ReducedSigmas& sig,
                                          const ReducedStateR& x, double dens_p, double dens_q) {
    MultiscaleReport rep;
    rep.epsilons = epsilons;
    for (double eps : epsilons) {
        double d = 0.0, g = 0.0;
        for (double e0 : {1.0, -1.0}) {
            const auto sp = ScalingParams::standard(eps, e0, nu0);
            d = std::max(d, drift_taylor_residual(x, sp));
            for (const auto& u : slow_test_jets(x.p, x.q)) g = std::max(g, generator_decomposition_residual(u, x, sp, sig));
        }
        rep.drift_residual.push_back(d);
        rep.generator_residual.push_back(g);
    }
    rep.drift_slope = loglog_slope(rep.epsilons, rep.drift_residual);
    rep.generator_slope = loglog_slope(rep.epsilons, rep.generator_residual);
    const OUDensityParams op{dens_p, dens_q, nu0, sig.s5, sig.s7};
    rep.normalization = density_normalization(op);
    rep.stationarity = stationarity_residual(op);
    rep.moment_quadrature = rho_expectation([](double r, double s) { return r * r + s * s; }, op);
    rep.moment_closed_form = moment_r2s2(op);
    return rep;
}

}  // namespace qss
