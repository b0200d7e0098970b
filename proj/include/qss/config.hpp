#pragma once

// JSON run configurations: field-checked readers, typed experiment configs and
// the figure presets. Every value actually used (defaults included) is echoed
// into `effective` so that a manifest can rebuild the run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qss/errors.hpp"
#include "qss/forcing.hpp"
#include "qss/kolmogorov.hpp"
#include "qss/reduced.hpp"
#include "qss/vorticity.hpp"

namespace qss {

/// Noise decay rate used by the published simulations.
inline constexpr double kPublishedAlpha0 = 0.349;

using Json = nlohmann::json;

/// Typed access to a flat JSON object. Unknown keys and type mismatches raise
/// ConfigError naming the field.
class ConfigReader {
public:
    explicit ConfigReader(Json j, std::string context = "config") : j_(std::move(j)), ctx_(std::move(context)) {
        if (!j_.is_object()) throw ConfigError(ctx_ + ": expected a JSON object");
    }

    double number(const std::string& key, std::optional<double> def = std::nullopt) {
        const Json* v = find(key);
        if (!v) return record(key, require(key, def));
        if (!v->is_number()) fail(key, "expected a number");
        const double x = v->get<double>();
        if (!std::isfinite(x)) fail(key, "must be finite");
        return record(key, x);
    }

    std::optional<double> optional_number(const std::string& key) {
        const Json* v = find(key);
        if (!v || v->is_null()) {
            known_.insert(key);
            effective_[key] = nullptr;
            return std::nullopt;
        }
        return number(key);
    }

    std::int64_t integer(const std::string& key, std::optional<std::int64_t> def = std::nullopt) {
        const Json* v = find(key);
        if (!v) return record(key, require(key, def));
        if (!v->is_number_integer()) fail(key, "expected an integer");
        return record(key, v->get<std::int64_t>());
    }

    std::uint64_t unsigned_integer(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
        const Json* v = find(key);
        if (!v) return record(key, require(key, def));
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0))
            fail(key, "expected a non-negative integer");
        return record(key, v->get<std::uint64_t>());
    }

    bool boolean(const std::string& key, std::optional<bool> def = std::nullopt) {
        const Json* v = find(key);
        if (!v) return record(key, require(key, def));
        if (!v->is_boolean()) fail(key, "expected true or false");
        return record(key, v->get<bool>());
    }

    std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                       std::optional<std::string> def = std::nullopt) {
        const Json* v = find(key);
        std::string s;
        if (!v) {
            s = require(key, def);
        } else {
            if (!v->is_string()) fail(key, "expected a string");
            s = v->get<std::string>();
        }
        if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail(key, "must be one of: " + list);
        }
        return record(key, s);
    }

    /// A number, or "auto" for the root of sum_{|k1|,|k2| <= kmax} exp(-a |k|^2) = 1.
    double alpha0(const std::string& key, double def, int auto_kmax) {
        const Json* v = find(key);
        if (v && v->is_string()) {
            if (v->get<std::string>() != "auto") fail(key, "expected a number or \"auto\"");
            const double a = solve_alpha0(auto_kmax);
            effective_[key] = a;
            return a;
        }
        return number(key, def);
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt,
                                std::optional<std::size_t> length = std::nullopt) {
        const Json* v = find(key);
        std::vector<double> out;
        if (!v) {
            out = require(key, def);
        } else {
            if (!v->is_array()) fail(key, "expected an array of numbers");
            for (const auto& e : *v) {
                if (!e.is_number()) fail(key, "expected an array of numbers");
                out.push_back(e.get<double>());
            }
        }
        if (length && out.size() != *length) fail(key, "expected " + std::to_string(*length) + " entries");
        return record(key, out);
    }

    /// Throws on keys that no accessor asked for.
    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!known_.count(k)) throw ConfigError(ctx_ + ": unknown field '" + k + "'");
    }

    const Json& effective() const { return effective_; }
    bool has(const std::string& key) const { return j_.contains(key); }

private:
    const Json* find(const std::string& key) {
        known_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    template <class T>
    T require(const std::string& key, const std::optional<T>& def) const {
        if (!def) throw ConfigError(ctx_ + ": missing required field '" + key + "'");
        return *def;
    }
    template <class T>
    T record(const std::string& key, T value) {
        effective_[key] = value;
        return value;
    }
    [[noreturn]] void fail(const std::string& key, const std::string& why) const {
        throw ConfigError(ctx_ + ": field '" + key + "': " + why);
    }

    Json j_;
    std::string ctx_;
    std::set<std::string> known_;
    Json effective_ = Json::object();
};

/// Ensemble settings shared by the simulation subcommands.
struct EnsembleSettings {
    std::uint64_t n_trials = 200;
    std::uint64_t master_seed = 0;
    unsigned threads = 1;
    double t_burn = 0.0;
    std::int64_t spool_trials = -1;  // per-trial CSVs to write; -1 for all

    static EnsembleSettings read(ConfigReader& r) {
        EnsembleSettings e;
        e.n_trials = r.unsigned_integer("n_trials", 200);
        if (e.n_trials < 2) throw ConfigError("config: field 'n_trials': must be >= 2");
        e.master_seed = r.unsigned_integer("master_seed", 0);
        e.threads = static_cast<unsigned>(r.unsigned_integer("threads", 1));
        e.t_burn = r.number("t_burn", 0.0);
        e.spool_trials = r.integer("spool_trials", -1);
        return e;
    }
};

struct ReducedRun {
    ReducedSimConfig sim;
    EnsembleSettings ensemble;
    // Set when the run was specified through the slow-fast scaling.
    std::optional<double> epsilon, epsilon0, nu0;
};

/// Reduced-model run. With "epsilon" given, delta^2 = 1 + eps0 eps,
/// nu = eps^3 nu0 and the initial state is (p0 eps, q0 eps, 0, 0).
inline ReducedRun reduced_run_from_json(const Json& j, Json* effective = nullptr) {
    ConfigReader r(j);
    r.choice("kind", {"reduced"}, std::string("reduced"));
    ReducedRun run;
    auto& c = run.sim;
    run.epsilon = r.optional_number("epsilon");
    if (run.epsilon) {
        const double eps = *run.epsilon;
        if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("config: field 'epsilon': must lie in (0, 1)");
        run.epsilon0 = r.number("epsilon0", 1.0);
        if (*run.epsilon0 != 1.0 && *run.epsilon0 != -1.0)
            throw ConfigError("config: field 'epsilon0': must be +1 or -1");
        run.nu0 = r.number("nu0", 1.0);
        const double p0 = r.number("p0", 0.1), q0 = r.number("q0", 0.1);
        c.delta = std::sqrt(1.0 + *run.epsilon0 * eps);
        c.nu = eps * eps * eps * *run.nu0;
        c.initial = {p0 * eps, q0 * eps, 0.0, 0.0};
    } else {
        c.delta = r.number("delta", 1.0);
        c.nu = r.number("nu", 0.001);
        const auto init = r.numbers("initial", std::vector<double>{0, 0, 0, 0}, 4);
        c.initial = ReducedStateR::from_array({init[0], init[1], init[2], init[3]});
    }
    c.dt = r.number("dt", default_reduced_dt(c.nu));
    c.t_end = r.number("t_end", 2000.0);
    c.save_every = r.optional_number("save_every");
    const std::string noise = r.choice("noise", {"saturating", "none"}, std::string("saturating"));
    const double alpha0 = r.alpha0("alpha0", kPublishedAlpha0, 64);
    c.sigmas = noise == "none" ? ReducedSigmas{} : ReducedSigmas::from_alpha0(alpha0);
    c.complex_modes = r.boolean("complex_modes", false);
    run.ensemble = EnsembleSettings::read(r);
    r.finish();
    c.validate();
    if (effective) {
        *effective = r.effective();
        (*effective)["kind"] = "reduced";
    }
    return run;
}

struct VorticityRun {
    VortSimConfig sim;
    EnsembleSettings ensemble;
    bool dump_fields = true;
    int physical_n = 64;
};

inline VorticityRun vorticity_run_from_json(const Json& j, Json* effective = nullptr) {
    ConfigReader r(j);
    r.choice("kind", {"vorticity"}, std::string("vorticity"));
    VorticityRun run;
    auto& c = run.sim;
    c.delta = r.number("delta", 1.0);
    c.nu = r.number("nu", 0.001);
    c.kmax = static_cast<int>(r.integer("kmax", 16));
    if (c.kmax < 1) throw ConfigError("config: field 'kmax': must be >= 1");
    c.dt = r.number("dt", 0.02);
    c.t_end = r.number("t_end", 500.0);
    c.save_every = r.optional_number("save_every");
    const std::string noise = r.choice("noise", {"saturating", "none"}, std::string("saturating"));
    const double alpha0 = r.alpha0("alpha0", kPublishedAlpha0, c.kmax);
    const double c0 = r.number("c0", 1.0);
    c.noise = noise == "none" ? NoiseModel::none(c.kmax, c.nu) : NoiseModel::saturating(c.kmax, c.nu, alpha0, c0);
    c.initial = r.choice("initial", {"zero", "xbar", "ybar", "dipole"}, std::string("zero"));
    c.method = r.choice("method", {"fft", "direct"}, std::string("fft")) == "fft" ? NonlinearityMethod::kFft
                                                                                  : NonlinearityMethod::kDirect;
    run.ensemble = EnsembleSettings::read(r);
    run.dump_fields = r.boolean("dump_fields", true);
    run.physical_n = static_cast<int>(r.integer("physical_n", 64));
    if (run.physical_n < 2) throw ConfigError("config: field 'physical_n': must be >= 2");
    r.finish();
    c.validate();
    if (effective) {
        *effective = r.effective();
        (*effective)["kind"] = "vorticity";
        (*effective)["alpha0"] = c.noise.alpha0();
    }
    return run;
}

inline CascadeConfig cascade_from_json(const Json& j, Json* effective = nullptr) {
    ConfigReader r(j);
    r.choice("kind", {"kolmogorov"}, std::string("kolmogorov"));
    CascadeConfig c;
    const auto bounds = r.numbers("bounds", std::vector<double>{-5.0, 5.0}, 2);
    const auto pq_n = static_cast<int>(r.integer("pq_n", 41));
    const auto rs_n = static_cast<int>(r.integer("rs_n", 41));
    c.pq = {{bounds[0], bounds[1], pq_n}, {bounds[0], bounds[1], pq_n}};
    c.rs = {{bounds[0], bounds[1], rs_n}, {bounds[0], bounds[1], rs_n}};
    c.nu0 = r.number("nu0", 1.0);
    if (r.has("sigmas")) {
        const auto s = r.numbers("sigmas", std::nullopt, 4);
        c.sigmas = {s[0], s[1], s[2], s[3]};
    } else {
        c.sigmas = ReducedSigmas::from_alpha0(r.alpha0("alpha0", kPublishedAlpha0, 64));
    }
    c.epsilon0 = r.number("epsilon0", 1.0);
    c.tau_end = r.number("tau_end", 40.0);
    c.dt_tau = r.optional_number("dt_tau");
    c.save_every = r.number("save_every", 0.5);
    c.diffusion = r.choice("diffusion", {"ito", "printed"}, std::string("ito")) == "ito" ? DiffusionConvention::kIto
                                                                                       : DiffusionConvention::kPrinted;
    c.source = r.choice("source", {"derived", "printed"}, std::string("derived")) == "derived"
                   ? SourceVariant::kDerived
                   : SourceVariant::kPrinted;
    c.fast = r.choice("fast_solver", {"fd", "analytic"}, std::string("fd")) == "fd" ? FastSolver::kFiniteDifference
                                                                                     : FastSolver::kAnalytic;
    c.keep_u2 = false;
    c.threads = static_cast<unsigned>(r.unsigned_integer("threads", 1));
    r.finish();
    c.validate();
    if (effective) {
        *effective = r.effective();
        (*effective)["kind"] = "kolmogorov";
        (*effective)["sigmas"] = {c.sigmas.s1, c.sigmas.s3, c.sigmas.s5, c.sigmas.s7};
    }
    return c;
}

struct CompareRun {
    double p = 0.1, q = 0.1;
    double threshold = 0.1;
    std::optional<double> epsilon;
    TimeMap map = TimeMap::kScaled;
};

inline CompareRun compare_from_json(const Json& j, Json* effective = nullptr) {
    ConfigReader r(j);
    r.choice("kind", {"compare"}, std::string("compare"));
    CompareRun c;
    c.p = r.number("p", 0.1);
    c.q = r.number("q", 0.1);
    c.threshold = r.number("threshold", 0.1);
    c.epsilon = r.optional_number("epsilon");
    c.map = r.choice("time_map", {"scaled", "inverse"}, std::string("scaled")) == "scaled" ? TimeMap::kScaled
                                                                                          : TimeMap::kInverse;
    r.finish();
    if (effective) {
        *effective = r.effective();
        (*effective)["kind"] = "compare";
    }
    return c;
}

struct MultiscaleCheckRun {
    std::vector<double> epsilons{0.08, 0.04, 0.02, 0.01, 0.005};
    double nu0 = 1.0;
    double alpha0 = kPublishedAlpha0;
    ReducedStateR point{0.7, -0.4, 0.3, 0.5};
    std::vector<double> density_point{1.0, 0.5};
};

inline MultiscaleCheckRun multiscale_check_from_json(const Json& j, Json* effective = nullptr) {
    ConfigReader r(j);
    r.choice("kind", {"check-multiscale"}, std::string("check-multiscale"));
    MultiscaleCheckRun c;
    c.epsilons = r.numbers("epsilons", c.epsilons);
    if (c.epsilons.size() < 2) throw ConfigError("config: field 'epsilons': need at least two values");
    for (double e : c.epsilons)
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("config: field 'epsilons': values must lie in (0, 1)");
    c.nu0 = r.number("nu0", 1.0);
    c.alpha0 = r.alpha0("alpha0", kPublishedAlpha0, 64);
    const auto pt = r.numbers("point", std::vector<double>{0.7, -0.4, 0.3, 0.5}, 4);
    c.point = ReducedStateR::from_array({pt[0], pt[1], pt[2], pt[3]});
    c.density_point = r.numbers("density_point", c.density_point, 2);
    r.finish();
    if (effective) {
        *effective = r.effective();
        (*effective)["kind"] = "check-multiscale";
    }
    return c;
}

/// Desk-scale versions of the figure experiments. `downscaling` lists what was
/// reduced relative to the published runs.
struct Preset {
    std::string name;
    std::string subcommand;
    std::string description;
    Json config;
    Json downscaling = Json::object();
};

inline const std::vector<Preset>& preset_registry() {
    static const std::vector<Preset> presets = [] {
        std::vector<Preset> v;
        const auto reduced = [](double delta, std::uint64_t n, double t_burn) {
            return Json{{"kind", "reduced"}, {"delta", delta}, {"nu", 0.001},   {"dt", 0.002},
                        {"t_end", 2000.0},   {"n_trials", n},  {"t_burn", t_burn}, {"initial", {0, 0, 0, 0}},
                        {"master_seed", 0}};
        };
        v.push_back({"fig-delta1", "simulate-reduced", "reduced model, delta = 1, N = 200, zero initial data",
                     reduced(1.0, 200, 0.0)});
        v.push_back({"fig-delta1.1", "simulate-reduced", "reduced model, delta = 1.1, N = 200, t_burn = 100",
                     reduced(1.1, 200, 100.0)});
        v.push_back({"fig-delta0.9", "simulate-reduced", "reduced model, delta = 0.9, N = 200, t_burn = 100",
                     reduced(0.9, 200, 100.0)});
        v.push_back({"fig-n1000", "simulate-reduced", "reduced model, delta = 1.1, N = 1000",
                     reduced(1.1, 1000, 100.0)});
        {
            Json c = reduced(1.04, 2, 0.0);
            c["t_end"] = 10000.0;
            c["save_every"] = 1.0;
            v.push_back({"fig-delta1.04", "simulate-reduced",
                         "single long reduced path at delta = 1.04 (second trial kept for the ensemble contract)", c});
        }
        v.push_back({"fig-compare-grid", "simulate-vorticity",
                     "truncated SPDE, kmax = 16, delta = 1.1, N = 50, T = 500",
                     Json{{"kind", "vorticity"}, {"delta", 1.1}, {"nu", 0.001}, {"kmax", 16}, {"dt", 0.02},
                          {"t_end", 500.0}, {"n_trials", 50}, {"t_burn", 100.0}, {"initial", "zero"},
                          {"master_seed", 0}},
                     Json{{"kmax", "64 -> 16"}, {"n_trials", "1000 -> 50"}, {"t_end", "2000 -> 500"}}});
        v.push_back({"fig-u0", "solve-kolmogorov", "leading-order cascade, 41 x 41 grids, tau in [0, 40]",
                     Json{{"kind", "kolmogorov"}, {"pq_n", 41}, {"rs_n", 41}, {"tau_end", 40.0},
                          {"save_every", 0.5}, {"epsilon0", 1.0}}});
        {
            Json c{{"kind", "reduced"}, {"epsilon", 0.1}, {"epsilon0", 1.0}, {"nu0", 1.0},
                   {"p0", 0.1}, {"q0", 0.1}, {"t_end", 400.0}, {"save_every", 5.0}, {"n_trials", 200},
                   {"master_seed", 1}};
            v.push_back({"fig-approx", "simulate-reduced",
                         "reduced ensemble under the slow-fast scaling, eps = 0.1, for comparison with u-hat", c});
        }
        v.push_back({"fig-re", "compare", "relative error of u-hat against the reduced ensemble at (0.1, 0.1)",
                     Json{{"kind", "compare"}, {"p", 0.1}, {"q", 0.1}, {"threshold", 0.1}}});
        return v;
    }();
    return presets;
}

inline const Preset& preset(const std::string& name) {
    for (const auto& p : preset_registry())
        if (p.name == name) return p;
    throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace qss
