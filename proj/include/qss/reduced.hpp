#pragma once

// Eight-mode reduced model for the low modes w1 = w(1,0), w3 = w(0,1) and the
// representative high modes w5 = w(1,1), w7 = w(1,-1), together with its
// invariant real subsystem in (p, q, r, s) = Re(w1, w3, w5, w7).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>

#include "qss/errors.hpp"
#include "qss/order_parameter.hpp"
#include "qss/trajectory.hpp"

namespace qss {

struct ReducedStateC {
    std::complex<double> w1, w3, w5, w7;
};

struct ReducedStateR {
    double p = 0.0, q = 0.0, r = 0.0, s = 0.0;

    std::array<double, 4> as_array() const { return {p, q, r, s}; }
    static ReducedStateR from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
};

/// Noise amplitudes for the four reduced modes.
struct ReducedSigmas {
    double s1 = 0.0, s3 = 0.0, s5 = 0.0, s7 = 0.0;

    /// sigma_{1,3} = exp(-alpha0), sigma_{5,7} = exp(-2 alpha0): the lattice decay
    /// law exp(-alpha0 |k|^2) evaluated at |k|^2 = 1 and 2.
    static ReducedSigmas from_alpha0(double alpha0) {
        const double lo = std::exp(-alpha0), hi = std::exp(-2.0 * alpha0);
        return {lo, lo, hi, hi};
    }
    bool is_zero() const { return s1 == 0.0 && s3 == 0.0 && s5 == 0.0 && s7 == 0.0; }
};

/// Every delta- and nu-dependent coefficient of the reduced drift.
struct ReducedCoefficients {
    double nu = 0.0, delta = 1.0;
    // linear decay rates
    double lin1 = 0.0, lin3 = 0.0, lin5 = 0.0;
    // quadratic couplings
    double quad1 = 0.0;  // 1 / (delta (1 + delta^2))
    double quad3 = 0.0;  // delta^3 / (1 + delta^2)
    double quad5 = 0.0;  // (delta^2 - 1) / delta
    // cubic couplings, already divided by nu
    double cub1 = 0.0;   // 3 delta^6 / (2 nu (4 + delta^2)(1 + delta^2)^2)
    double cub3 = 0.0;   // 3 delta^2 / (2 nu (1 + 4 delta^2)(1 + delta^2)^2)
    double cub5x = 0.0;  // delta^6 (3 + delta^2) / (2 nu (4 + delta^2)(1 + delta^2))
    double cub5y = 0.0;  // (1 + 3 delta^2) / (2 nu delta^2 (1 + 4 delta^2)(1 + delta^2))

    static ReducedCoefficients make(double nu, double delta) {
        if (!(nu > 0.0)) throw ConfigError("reduced model: nu must be positive");
        if (!(delta > 0.0)) throw ConfigError("reduced model: delta must be positive");
        const double d2 = delta * delta;
        const double d6 = d2 * d2 * d2;
        ReducedCoefficients c;
        c.nu = nu;
        c.delta = delta;
        c.lin1 = nu / d2;
        c.lin3 = nu;
        c.lin5 = nu * (1.0 + d2) / d2;
        c.quad1 = 1.0 / (delta * (1.0 + d2));
        c.quad3 = delta * d2 / (1.0 + d2);
        c.quad5 = (d2 - 1.0) / delta;
        c.cub1 = 3.0 * d6 / (2.0 * nu * (4.0 + d2) * (1.0 + d2) * (1.0 + d2));
        c.cub3 = 3.0 * d2 / (2.0 * nu * (1.0 + 4.0 * d2) * (1.0 + d2) * (1.0 + d2));
        c.cub5x = d6 * (3.0 + d2) / (2.0 * nu * (4.0 + d2) * (1.0 + d2));
        c.cub5y = (1.0 + 3.0 * d2) / (2.0 * nu * d2 * (1.0 + 4.0 * d2) * (1.0 + d2));
        return c;
    }
};

/// Nonlinear (quadratic + cubic) part of the complex drift.
inline ReducedStateC nonlinear_reduced_complex(const ReducedStateC& w, const ReducedCoefficients& c) {
    using std::conj;
    using std::norm;
    const double high = norm(w.w5) + norm(w.w7);
    ReducedStateC d;
    d.w1 = c.quad1 * (w.w3 * w.w7 - conj(w.w3) * w.w5) + c.cub1 * w.w1 * high;
    d.w3 = c.quad3 * (conj(w.w1) * w.w5 - w.w1 * conj(w.w7)) + c.cub3 * w.w3 * high;
    const double damp = c.cub5x * norm(w.w1) + c.cub5y * norm(w.w3);
    d.w5 = -c.quad5 * w.w1 * w.w3 - damp * w.w5;
    d.w7 = c.quad5 * w.w1 * conj(w.w3) - damp * w.w7;
    return d;
}

inline ReducedStateC drift_reduced_complex(const ReducedStateC& w, double nu, double delta) {
    const auto c = ReducedCoefficients::make(nu, delta);
    ReducedStateC d = nonlinear_reduced_complex(w, c);
    d.w1 -= c.lin1 * w.w1;
    d.w3 -= c.lin3 * w.w3;
    d.w5 -= c.lin5 * w.w5;
    d.w7 -= c.lin5 * w.w7;
    return d;
}

/// Nonlinear part of the real drift.
inline ReducedStateR nonlinear_reduced_real(const ReducedStateR& x, const ReducedCoefficients& c) {
    const double high = x.r * x.r + x.s * x.s;
    const double damp = c.cub5x * x.p * x.p + c.cub5y * x.q * x.q;
    const double pq = x.p * x.q;
    return {c.quad1 * x.q * (x.s - x.r) + c.cub1 * x.p * high,
            c.quad3 * x.p * (x.r - x.s) + c.cub3 * x.q * high,
            -c.quad5 * pq - damp * x.r,
            c.quad5 * pq - damp * x.s};
}

inline ReducedStateR drift_reduced_real(const ReducedStateR& x, double nu, double delta) {
    const auto c = ReducedCoefficients::make(nu, delta);
    ReducedStateR d = nonlinear_reduced_real(x, c);
    d.p -= c.lin1 * x.p;
    d.q -= c.lin3 * x.q;
    d.r -= c.lin5 * x.r;
    d.s -= c.lin5 * x.s;
    return d;
}

/// Tamed semi-implicit Euler-Maruyama step with precomputed coefficients.
/// dW holds the four Brownian increments (each ~ N(0, dt)).
inline ReducedStateR step_reduced(const ReducedStateR& x, double dt, const std::array<double, 4>& dW,
                                  const ReducedCoefficients& c, const ReducedSigmas& sig) {
    const ReducedStateR n = nonlinear_reduced_real(x, c);
    const double nn = std::sqrt(n.p * n.p + n.q * n.q + n.r * n.r + n.s * n.s);
    const double tame = dt / (1.0 + dt * nn);
    const double amp = std::sqrt(2.0 * c.nu);
    return {(x.p + tame * n.p + amp * sig.s1 * dW[0]) / (1.0 + dt * c.lin1),
            (x.q + tame * n.q + amp * sig.s3 * dW[1]) / (1.0 + dt * c.lin3),
            (x.r + tame * n.r + amp * sig.s5 * dW[2]) / (1.0 + dt * c.lin5),
            (x.s + tame * n.s + amp * sig.s7 * dW[3]) / (1.0 + dt * c.lin5)};
}

inline ReducedStateR step_reduced(const ReducedStateR& x, double dt, const std::array<double, 4>& dW,
                                  double nu, double delta, const ReducedSigmas& sig) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    const ReducedStateR out = step_reduced(x, dt, dW, ReducedCoefficients::make(nu, delta), sig);
    if (!std::isfinite(out.p) || !std::isfinite(out.q) || !std::isfinite(out.r) || !std::isfinite(out.s))
        throw NumericalError("reduced model: non-finite state after step");
    return out;
}

/// Same scheme for the complex model; the four Brownian increments are real.
inline ReducedStateC step_reduced(const ReducedStateC& w, double dt, const std::array<double, 4>& dW,
                                  const ReducedCoefficients& c, const ReducedSigmas& sig) {
    const ReducedStateC n = nonlinear_reduced_complex(w, c);
    const double nn = std::sqrt(std::norm(n.w1) + std::norm(n.w3) + std::norm(n.w5) + std::norm(n.w7));
    const double tame = dt / (1.0 + dt * nn);
    const double amp = std::sqrt(2.0 * c.nu);
    return {(w.w1 + tame * n.w1 + amp * sig.s1 * dW[0]) / (1.0 + dt * c.lin1),
            (w.w3 + tame * n.w3 + amp * sig.s3 * dW[1]) / (1.0 + dt * c.lin3),
            (w.w5 + tame * n.w5 + amp * sig.s5 * dW[2]) / (1.0 + dt * c.lin5),
            (w.w7 + tame * n.w7 + amp * sig.s7 * dW[3]) / (1.0 + dt * c.lin5)};
}

inline OrderParameter order_parameter_red(const ReducedStateR& x) {
    return order_parameter_from_energies(x.p * x.p, x.q * x.q);
}
inline OrderParameter order_parameter_red(const ReducedStateC& w) {
    return order_parameter_from_energies(std::norm(w.w1), std::norm(w.w3));
}

/// Default step size min(dt_max, c * nu): the cubic couplings scale like 1/nu.
inline double default_reduced_dt(double nu, double dt_max = 0.01, double c = 2.0) {
    return std::min(dt_max, c * nu);
}

struct ReducedSimConfig {
    double delta = 1.0;
    double nu = 0.001;
    double dt = 0.002;
    double t_end = 2000.0;
    std::optional<double> save_every;
    ReducedSigmas sigmas{};
    ReducedStateR initial{};
    bool complex_modes = false;  // evolve the eight-mode complex system instead of the real one

    TimeGrid time_grid() const { return TimeGrid::make(dt, t_end, save_every); }
    void validate() const {
        if (!(delta > 0.0)) throw ConfigError("delta must be positive");
        if (!(nu > 0.0)) throw ConfigError("nu must be positive");
        time_grid().validate();
    }
};

/// Real reduced model as a trajectory model; cheap to copy.
class ReducedModel {
public:
    using State = ReducedStateR;

    explicit ReducedModel(const ReducedSimConfig& cfg)
        : cfg_(cfg), coef_(ReducedCoefficients::make(cfg.nu, cfg.delta)), noisy_(!cfg.sigmas.is_zero()) {
        cfg_.validate();
        sqrt_dt_ = std::sqrt(cfg_.dt);
    }

    const ReducedSimConfig& config() const { return cfg_; }

    State initial_state() const { return cfg_.initial; }

    void step(State& x, const GaussianStream& rng, std::uint64_t n) {
        std::array<double, 4> dW{};
        if (noisy_) {
            const auto [a, b] = rng.normal_pair(n, 0);
            const auto [c, d] = rng.normal_pair(n, 1);
            dW = {sqrt_dt_ * a, sqrt_dt_ * b, sqrt_dt_ * c, sqrt_dt_ * d};
        }
        x = step_reduced(x, cfg_.dt, dW, coef_, cfg_.sigmas);
    }

    OrderParameter order_parameter(const State& x) const { return order_parameter_red(x); }
    bool finite(const State& x) const {
        return std::isfinite(x.p) && std::isfinite(x.q) && std::isfinite(x.r) && std::isfinite(x.s);
    }

private:
    ReducedSimConfig cfg_;
    ReducedCoefficients coef_;
    bool noisy_;
    double sqrt_dt_ = 0.0;
};

/// Complex eight-mode model driven by complex increments whose real and
/// imaginary parts each have variance dt / 2; the initial state is real.
class ReducedComplexModel {
public:
    using State = ReducedStateC;

    explicit ReducedComplexModel(const ReducedSimConfig& cfg)
        : cfg_(cfg), coef_(ReducedCoefficients::make(cfg.nu, cfg.delta)), noisy_(!cfg.sigmas.is_zero()) {
        cfg_.validate();
        half_dt_root_ = std::sqrt(0.5 * cfg_.dt);
    }

    const ReducedSimConfig& config() const { return cfg_; }

    State initial_state() const {
        const auto& x = cfg_.initial;
        return {{x.p, 0.0}, {x.q, 0.0}, {x.r, 0.0}, {x.s, 0.0}};
    }

    void step(State& w, const GaussianStream& rng, std::uint64_t n) {
        const ReducedStateC nl = nonlinear_reduced_complex(w, coef_);
        const double nn = std::sqrt(std::norm(nl.w1) + std::norm(nl.w3) + std::norm(nl.w5) + std::norm(nl.w7));
        const double dt = cfg_.dt;
        const double tame = dt / (1.0 + dt * nn);
        std::array<std::complex<double>, 4> dW{};
        if (noisy_) {
            for (std::uint32_t lane = 0; lane < 4; ++lane) {
                const auto [a, b] = rng.normal_pair(n, lane);
                dW[lane] = {half_dt_root_ * a, half_dt_root_ * b};
            }
        }
        const double amp = std::sqrt(2.0 * coef_.nu);
        const auto& sig = cfg_.sigmas;
        w.w1 = (w.w1 + tame * nl.w1 + amp * sig.s1 * dW[0]) / (1.0 + dt * coef_.lin1);
        w.w3 = (w.w3 + tame * nl.w3 + amp * sig.s3 * dW[1]) / (1.0 + dt * coef_.lin3);
        w.w5 = (w.w5 + tame * nl.w5 + amp * sig.s5 * dW[2]) / (1.0 + dt * coef_.lin5);
        w.w7 = (w.w7 + tame * nl.w7 + amp * sig.s7 * dW[3]) / (1.0 + dt * coef_.lin5);
    }

    OrderParameter order_parameter(const State& w) const { return order_parameter_red(w); }
    bool finite(const State& w) const {
        return std::isfinite(w.w1.real() + w.w1.imag() + w.w3.real() + w.w3.imag() + w.w5.real() +
                             w.w5.imag() + w.w7.real() + w.w7.imag());
    }

private:
    ReducedSimConfig cfg_;
    ReducedCoefficients coef_;
    bool noisy_;
    double half_dt_root_ = 0.0;
};

}  // namespace qss
