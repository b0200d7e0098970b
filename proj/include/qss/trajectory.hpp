#pragma once

// Fixed-step time integration shared by the SPDE and reduced models.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "qss/errors.hpp"
#include "qss/order_parameter.hpp"
#include "qss/rng.hpp"

namespace qss {

struct TimeGrid {
    double dt = 0.01;
    double t_end = 1.0;
    std::uint64_t save_stride = 1;

    std::uint64_t n_steps() const { return static_cast<std::uint64_t>(std::llround(t_end / dt)); }
    std::uint64_t n_saved() const { return n_steps() / save_stride + 1; }
    double time(std::uint64_t step) const { return static_cast<double>(step) * dt; }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
        if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be >= 0");
        if (save_stride == 0) throw ConfigError("save stride must be >= 1");
        if (std::abs(static_cast<double>(n_steps()) * dt - t_end) > 1e-9 * std::max(1.0, t_end))
            throw ConfigError("t_end must be an integer multiple of dt");
    }

    /// Save every `save_every` time units; by default at most 4001 samples.
    static TimeGrid make(double dt, double t_end, std::optional<double> save_every = std::nullopt) {
        TimeGrid g{dt, t_end, 1};
        const double every = save_every ? *save_every : std::max(dt, t_end / 4000.0);
        g.save_stride = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(every / dt - 1e-9)));
        g.validate();
        return g;
    }
};

struct Trajectory {
    std::vector<double> times;
    std::vector<double> z;
    std::vector<std::uint8_t> degenerate;  // 1 where the order parameter was 0/0
};

template <class M>
concept TrajectoryModel = requires(M m, const M cm, typename M::State s, const GaussianStream& g,
                                   std::uint64_t n) {
    { cm.initial_state() } -> std::same_as<typename M::State>;
    m.step(s, g, n);
    { cm.order_parameter(s) } -> std::same_as<OrderParameter>;
    { cm.finite(s) } -> std::same_as<bool>;
};

/// Integrates 0 -> t_end and records the order parameter every save_stride
/// steps. Throws NumericalError (carrying the blow-up time) on a non-finite state.
template <TrajectoryModel M>
Trajectory run_trajectory(
    M& model, const TimeGrid& grid, const GaussianStream& rng,
    const std::function<void(std::uint64_t, double, const typename M::State&)>& observer = {}) {
    grid.validate();
    Trajectory out;
    out.times.reserve(grid.n_saved());
    out.z.reserve(grid.n_saved());
    auto state = model.initial_state();
    const auto record = [&](std::uint64_t n) {
        const auto op = model.order_parameter(state);
        out.times.push_back(grid.time(n));
        out.z.push_back(op.value);
        out.degenerate.push_back(op.degenerate ? 1 : 0);
    };
    record(0);
    if (observer) observer(0, 0.0, state);
    const std::uint64_t n_steps = grid.n_steps();
    for (std::uint64_t n = 0; n < n_steps; ++n) {
        model.step(state, rng, n);
        const std::uint64_t done = n + 1;
        if (done % grid.save_stride == 0 || done == n_steps) {
            if (!model.finite(state)) {
                std::ostringstream msg;
                msg << "non-finite state at t=" << grid.time(done) << " (seed " << rng.seed() << ")";
                throw NumericalError(msg.str(), grid.time(done));
            }
            if (done % grid.save_stride == 0) record(done);
        }
        if (observer) observer(done, grid.time(done), state);
    }
    return out;
}

}  // namespace qss
