#pragma once

// Stochastic vorticity equation on the truncated lattice, integrated with a
// tamed semi-implicit Euler-Maruyama scheme:
//
//   w+ = [w + dt N(w) / (1 + dt ||N(w)||) + sqrt(2 nu) sigma dbeta] / (1 + dt nu |k|^2 / delta^2)
//
// The viscous term is implicit; the nonlinearity is explicit and tamed by its
// l2 norm over the lattice.

#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "qss/errors.hpp"
#include "qss/forcing.hpp"
#include "qss/order_parameter.hpp"
#include "qss/spectral.hpp"
#include "qss/trajectory.hpp"

namespace qss {

enum class NonlinearityMethod { kFft, kDirect };

/// -(nu/delta^2)|k|^2_delta w_k + N_k(w), with the direct Galerkin sum.
inline SpectralField drift_spectral(const SpectralField& field, double nu) {
    SpectralField out = galerkin_nonlinearity(field);
    const double delta = field.delta();
    const auto& lat = field.lattice();
    auto o = out.half();
    auto w = field.half();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] -= nu / (delta * delta) * delta_norm_sq(lat.at(i), delta) * w[i];
    return out;
}

/// One tamed step given the nonlinearity already evaluated at `field`.
inline void step_tamed_semi_implicit_inplace(SpectralField& field, const SpectralField& nonlinearity,
                                             const SpectralField* forcing, double dt, double nu) {
    const double delta = field.delta();
    const double taming = 1.0 / (1.0 + dt * std::sqrt(nonlinearity.enstrophy()));
    const auto& lat = field.lattice();
    auto w = field.half();
    auto n = nonlinearity.half();
    for (std::size_t i = 0; i < w.size(); ++i) {
        Complex rhs = w[i] + dt * taming * n[i];
        if (forcing) rhs += forcing->half()[i];
        w[i] = rhs / (1.0 + dt * nu / (delta * delta) * delta_norm_sq(lat.at(i), delta));
    }
}

/// One tamed step; `forcing` is the increment sqrt(2 nu) sigma_k dbeta_k.
inline SpectralField step_tamed_semi_implicit(const SpectralField& field, double dt,
                                              const SpectralField& forcing, double nu) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    SpectralField out = field;
    step_tamed_semi_implicit_inplace(out, galerkin_nonlinearity(field), &forcing, dt, nu);
    return out;
}

/// Z_vort = |w(1,0)|^2 / (|w(1,0)|^2 + |w(0,1)|^2).
inline OrderParameter order_parameter_vort(const SpectralField& field) {
    return order_parameter_from_energies(std::norm(field({1, 0})), std::norm(field({0, 1})));
}

struct VortSimConfig {
    double delta = 1.0;
    double nu = 0.001;
    int kmax = 16;
    double dt = 0.01;
    double t_end = 500.0;
    std::optional<double> save_every;
    NoiseModel noise = NoiseModel::none(16, 0.001);
    std::string initial = "zero";  // zero | xbar | ybar | dipole
    std::optional<SpectralField> initial_field;  // overrides `initial`
    NonlinearityMethod method = NonlinearityMethod::kFft;

    TimeGrid time_grid() const { return TimeGrid::make(dt, t_end, save_every); }

    void validate() const {
        if (!(delta > 0.0)) throw ConfigError("delta must be positive");
        if (!(nu > 0.0)) throw ConfigError("nu must be positive");
        if (kmax < 1) throw ConfigError("kmax must be >= 1");
        if (noise.kmax() != kmax) throw ConfigError("noise.kmax does not match kmax");
        if (noise.nu() != nu) throw ConfigError("noise.nu does not match nu");
        if (initial_field && (initial_field->kmax() != kmax || initial_field->delta() != delta))
            throw ConfigError("initial field lattice does not match configuration");
        time_grid().validate();
    }
};

/// Truncated SPDE as a trajectory model. Owns an FFT workspace, so use one
/// instance per thread.
class VorticityModel {
public:
    using State = SpectralField;

    explicit VorticityModel(VortSimConfig config)
        : cfg_(std::move(config)),
          nonlin_(cfg_.delta, cfg_.kmax),
          forcing_(cfg_.delta, cfg_.kmax),
          has_noise_(!cfg_.noise.is_zero()) {
        cfg_.validate();
        if (cfg_.method == NonlinearityMethod::kFft) fft_ = std::make_unique<FftNonlinearity>(cfg_.kmax);
    }

    const VortSimConfig& config() const { return cfg_; }

    State initial_state() const {
        if (cfg_.initial_field) return *cfg_.initial_field;
        return named_state(cfg_.initial, cfg_.delta, cfg_.kmax);
    }

    void step(State& w, const GaussianStream& rng, std::uint64_t n) {
        if (fft_)
            fft_->compute(w, nonlin_);
        else
            nonlin_ = galerkin_nonlinearity(w);
        if (has_noise_) forcing_increment(cfg_.noise, rng, n, cfg_.dt, forcing_);
        step_tamed_semi_implicit_inplace(w, nonlin_, has_noise_ ? &forcing_ : nullptr, cfg_.dt, cfg_.nu);
    }

    OrderParameter order_parameter(const State& w) const { return order_parameter_vort(w); }
    bool finite(const State& w) const { return w.all_finite(); }

private:
    VortSimConfig cfg_;
    std::unique_ptr<FftNonlinearity> fft_;
    SpectralField nonlin_;
    SpectralField forcing_;
    bool has_noise_;
};

}  // namespace qss
