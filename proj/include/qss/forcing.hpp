#pragma once

// Additive spatially-colored noise sqrt(2 nu) sum_k sigma_k exp(i k.x) beta_k(t).

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "qss/errors.hpp"
#include "qss/rng.hpp"
#include "qss/spectral.hpp"

namespace qss {

/// Euclidean |k|^2 (the noise decay uses the isotropic norm).
constexpr double euclid_norm_sq(WaveVector k) {
    return static_cast<double>(k.k1) * k.k1 + static_cast<double>(k.k2) * k.k2;
}

/// All wave vectors of the truncated lattice {|k1|,|k2| <= kmax} \ {0}.
inline std::vector<WaveVector> full_lattice(int kmax) {
    std::vector<WaveVector> out;
    for (int k1 = -kmax; k1 <= kmax; ++k1)
        for (int k2 = -kmax; k2 <= kmax; ++k2)
            if (k1 != 0 || k2 != 0) out.push_back({k1, k2});
    return out;
}

/// alpha0 > 0 with sum_{k in modes} exp(-alpha0 |k|^2) = 1.
inline double solve_alpha0(std::span<const WaveVector> modes) {
    if (modes.empty()) throw ConfigError("solve_alpha0: empty mode set");
    std::vector<double> norms;
    norms.reserve(modes.size());
    for (const auto& k : modes) {
        if (k.is_zero()) throw ConfigError("solve_alpha0: mode set contains (0,0)");
        norms.push_back(euclid_norm_sq(k));
    }
    const auto excess = [&](double a) {
        double s = 0.0;
        for (double n : norms) s += std::exp(-a * n);
        return s - 1.0;
    };
    if (!(excess(0.0) > 0.0))
        throw ConfigError("solve_alpha0: need at least two modes for a positive root");
    double hi = 1.0;
    while (excess(hi) > 0.0) hi *= 2.0;
    std::uintmax_t iters = 200;
    const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-14 * std::max(1.0, std::abs(a)); };
    const auto [lo_b, hi_b] = boost::math::tools::toms748_solve(excess, 0.0, hi, tol, iters);
    return 0.5 * (lo_b + hi_b);
}

inline double solve_alpha0(int kmax) {
    const auto modes = full_lattice(kmax);
    return solve_alpha0(modes);
}

/// Noise amplitudes on a truncated lattice. sigma is stored on the upper half
/// lattice; sigma(-k) = conj(sigma(k)).
class NoiseModel {
public:
    /// sigma_k = c0 * exp(-alpha0 |k|^2). alpha0 defaults to the normalized value.
    static NoiseModel saturating(int kmax, double nu, std::optional<double> alpha0 = std::nullopt,
                                 double c0 = 1.0) {
        NoiseModel m(kmax, nu, alpha0 ? *alpha0 : solve_alpha0(kmax), c0);
        auto& s = m.sigma_;
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = c0 * std::exp(-m.alpha0_ * euclid_norm_sq(m.lattice_.at(i)));
        return m;
    }

    /// User-supplied amplitudes, validated against |sigma_k| <= c0 exp(-alpha0 |k|^2).
    static NoiseModel custom(int kmax, double nu, double alpha0, std::vector<Complex> sigma_half,
                             double c0 = 1.0) {
        NoiseModel m(kmax, nu, alpha0, c0);
        if (sigma_half.size() != m.lattice_.size())
            throw ConfigError("noise amplitudes: expected " + std::to_string(m.lattice_.size()) +
                              " upper-half values");
        for (std::size_t i = 0; i < sigma_half.size(); ++i) {
            const double bound = c0 * std::exp(-alpha0 * euclid_norm_sq(m.lattice_.at(i)));
            if (std::abs(sigma_half[i]) > bound * (1.0 + 1e-12))
                throw ConfigError("noise amplitude violates exponential decay bound");
        }
        m.sigma_ = std::move(sigma_half);
        return m;
    }

    /// Noise switched off.
    static NoiseModel none(int kmax, double nu) { return NoiseModel(kmax, nu, 1.0, 0.0); }

    int kmax() const { return lattice_.kmax(); }
    double nu() const { return nu_; }
    double alpha0() const { return alpha0_; }
    double c0() const { return c0_; }
    const HalfLattice& lattice() const { return lattice_; }

    Complex sigma(WaveVector k) const {
        if (!lattice_.contains(k)) return {};
        if (HalfLattice::is_upper(k)) return sigma_[lattice_.index(k)];
        return std::conj(sigma_[lattice_.index(-k)]);
    }
    std::span<const Complex> sigma_half() const { return sigma_; }

    bool is_zero() const {
        for (const auto& s : sigma_)
            if (s != Complex{}) return false;
        return true;
    }

private:
    NoiseModel(int kmax, double nu, double alpha0, double c0)
        : lattice_(kmax), nu_(nu), alpha0_(alpha0), c0_(c0), sigma_(lattice_.size()) {
        if (!(nu > 0.0)) throw ConfigError("viscosity nu must be positive");
        if (!(alpha0 > 0.0)) throw ConfigError("alpha0 must be positive");
    }

    HalfLattice lattice_;
    double nu_;
    double alpha0_;
    double c0_;
    std::vector<Complex> sigma_;
};

/// Complex Wiener increments over one step: for each conjugate pair, Re and Im
/// are independent N(0, dt/2), so E|dbeta_k|^2 = dt; dbeta_{-k} = conj(dbeta_k).
/// Delta of the returned container is irrelevant and set to 1.
inline SpectralField wiener_increment(const GaussianStream& rng, std::uint64_t step, double dt,
                                      int kmax) {
    if (dt < 0.0) throw ConfigError("wiener_increment: dt must be non-negative");
    SpectralField out(1.0, kmax);
    auto half = out.half();
    const double scale = std::sqrt(0.5 * dt);
    for (std::size_t i = 0; i < half.size(); ++i) {
        const auto [a, b] = rng.normal_pair(step, static_cast<std::uint32_t>(i));
        half[i] = {scale * a, scale * b};
    }
    return out;
}

/// Forcing increment sqrt(2 nu) sigma_k dbeta_k written into `out` (same lattice).
inline void forcing_increment(const NoiseModel& noise, const GaussianStream& rng, std::uint64_t step,
                              double dt, SpectralField& out) {
    auto half = out.half();
    const auto sig = noise.sigma_half();
    const double scale = std::sqrt(2.0 * noise.nu()) * std::sqrt(0.5 * dt);
    for (std::size_t i = 0; i < half.size(); ++i) {
        if (sig[i] == Complex{}) {
            half[i] = {};
            continue;
        }
        const auto [a, b] = rng.normal_pair(step, static_cast<std::uint32_t>(i));
        half[i] = scale * sig[i] * Complex{a, b};
    }
}

}  // namespace qss
