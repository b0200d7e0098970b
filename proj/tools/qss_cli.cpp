// qss: command-line front end.
//
// Exit codes: 0 ok, 2 configuration / input error, 3 numerical failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qss/config.hpp"
#include "qss/csv.hpp"
#include "qss/ensemble.hpp"
#include "qss/kolmogorov.hpp"
#include "qss/manifest.hpp"
#include "qss/multiscale.hpp"
#include "qss/reduced.hpp"
#include "qss/vorticity.hpp"

namespace {

using namespace qss;
using Clock = std::chrono::steady_clock;

struct CommonOptions {
    std::string config_path;
    std::string preset_name;
    std::string out;
    std::vector<std::string> overrides;  // key=json
};

fs::path output_root() {
    const char* env = std::getenv("QSS_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("qss-output");
}

fs::path resolve_out(const CommonOptions& o, const std::string& subcommand) {
    if (!o.out.empty()) return o.out;
    return output_root() / (o.preset_name.empty() ? subcommand : o.preset_name);
}

/// Config from --preset and/or --config, then --set overrides.
Json assemble_config(const CommonOptions& o, const std::string& subcommand) {
    Json j = Json::object();
    if (!o.preset_name.empty()) {
        const auto& p = preset(o.preset_name);
        if (p.subcommand != subcommand)
            throw ConfigError("preset '" + p.name + "' belongs to " + p.subcommand + ", not " + subcommand);
        j = p.config;
    }
    if (!o.config_path.empty()) {
        const Json file = load_config_file(o.config_path);
        if (!file.is_object()) throw ConfigError(o.config_path + ": expected a JSON object");
        for (const auto& [k, v] : file.items()) j[k] = v;
    }
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        try {
            j[key] = Json::parse(value);
        } catch (const Json::parse_error&) {
            j[key] = value;  // bare strings
        }
    }
    return j;
}

std::string trial_name(std::uint64_t i) {
    std::ostringstream s;
    s << "trial_" << std::setw(6) << std::setfill('0') << i << ".csv";
    return s.str();
}

struct TrialRecord {
    std::uint64_t trial, seed;
    double time_average;
    int xy_transitions;
};

template <class Factory>
Json run_and_write_ensemble(Factory factory, const TimeGrid& grid, const EnsembleSettings& es,
                            const std::string& tag, const fs::path& out) {
    EnsembleOptions eo;
    eo.n_trials = es.n_trials;
    eo.master_seed = es.master_seed;
    eo.threads = es.threads;
    eo.model_tag = tag;
    std::vector<TrialRecord> records;
    const auto sink = [&](std::uint64_t i, std::uint64_t seed, const Trajectory& tr) {
        if (es.spool_trials < 0 || i < static_cast<std::uint64_t>(es.spool_trials))
            write_trial_csv(out / "trials" / trial_name(i), tr.times, tr.z);
        const double avg = time_average(tr.times, tr.z, es.t_burn);
        records.push_back({i, seed, avg, count_xy_transitions(transition_detector(tr.times, tr.z))});
    };
    const auto stats = run_ensemble(factory, grid, eo, sink);
    write_stats_csv(out / "stats.csv", stats);
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.trial < b.trial; });
    {
        const fs::path path = out / "trial_summary.csv";
        auto f = open_csv(path);
        f << "trial,seed,time_average,xy_transitions\n";
        for (const auto& r : records) f << r.trial << ',' << r.seed << ',' << r.time_average << ',' << r.xy_transitions << '\n';
        close_csv(f, path);
    }
    Json excluded = Json::array();
    for (const auto& e : stats.excluded)
        excluded.push_back({{"trial", e.trial}, {"seed", e.seed}, {"time", e.time}, {"message", e.message}});
    const double mean_avg = time_average(stats.times, stats.mean, es.t_burn);
    const double var_avg = time_average(stats.times, stats.variance, es.t_burn);
    std::cout << tag << ": N=" << stats.n_trials << " excluded=" << stats.excluded.size()
              << " time-averaged mean=" << mean_avg << " time-averaged variance=" << var_avg << '\n';
    Json seeds = Json::array();
    for (const auto& r : records) seeds.push_back(r.seed);
    return {{"n_trials", stats.n_trials},
            {"master_seed", es.master_seed},
            {"trial_seeds", seeds},
            {"excluded_count", stats.excluded.size()},
            {"excluded", excluded},
            {"time_average_mean", mean_avg},
            {"time_average_variance", var_avg}};
}

int cmd_simulate_reduced(const CommonOptions& o) {
    const auto t0 = Clock::now();
    Json eff;
    const auto run = reduced_run_from_json(assemble_config(o, "simulate-reduced"), &eff);
    const fs::path out = resolve_out(o, "simulate-reduced");
    Json extra;
    if (run.sim.complex_modes)
        extra = run_and_write_ensemble([&] { return ReducedComplexModel(run.sim); }, run.sim.time_grid(),
                                       run.ensemble, "red", out);
    else
        extra = run_and_write_ensemble([&] { return ReducedModel(run.sim); }, run.sim.time_grid(), run.ensemble,
                                       "red", out);
    extra["model"] = "red";
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "wrote " << emit_manifest("simulate-reduced", eff, out, secs, extra).string() << '\n';
    return 0;
}

int cmd_simulate_vorticity(const CommonOptions& o) {
    const auto t0 = Clock::now();
    Json eff;
    const auto run = vorticity_run_from_json(assemble_config(o, "simulate-vorticity"), &eff);
    const fs::path out = resolve_out(o, "simulate-vorticity");
    Json extra = run_and_write_ensemble([&] { return VorticityModel(run.sim); }, run.sim.time_grid(), run.ensemble,
                                        "vort", out);
    extra["model"] = "vort";
    if (run.dump_fields) {
        // Trial 0 again, keeping its last state.
        VorticityModel model(run.sim);
        const GaussianStream rng(derive_trial_seed(run.ensemble.master_seed, 0));
        std::optional<SpectralField> last;
        const SpectralField first = model.initial_state();
        try {
            run_trajectory(model, run.sim.time_grid(), rng,
                           [&](std::uint64_t, double, const SpectralField& s) { last = s; });
        } catch (const NumericalError&) {
        }
        const int n = run.physical_n;
        write_field_csv(out / "fields" / "initial_field.csv", first, {{"t", 0.0}, {"trial", 0}});
        write_physical_csv(out / "fields" / "initial_physical.csv", to_physical(first, n, n));
        if (last) {
            write_field_csv(out / "fields" / "final_field.csv", *last, {{"t", run.sim.t_end}, {"trial", 0}});
            write_physical_csv(out / "fields" / "final_physical.csv", to_physical(*last, n, n));
        }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "wrote " << emit_manifest("simulate-vorticity", eff, out, secs, extra).string() << '\n';
    return 0;
}

std::string slice_name(std::size_t k) {
    std::ostringstream s;
    s << "tau_" << std::setw(6) << std::setfill('0') << k << ".csv";
    return s.str();
}

int cmd_solve_kolmogorov(const CommonOptions& o) {
    const auto t0 = Clock::now();
    Json eff;
    const auto cfg = cascade_from_json(assemble_config(o, "solve-kolmogorov"), &eff);
    const fs::path out = resolve_out(o, "solve-kolmogorov");
    const auto sol = solve_cascade(cfg);
    {
        const fs::path path = out / "slices" / "index.csv";
        auto f = open_csv(path);
        f << "index,tau,file\n";
        for (std::size_t k = 0; k < sol.tau.size(); ++k) {
            write_slice_csv(out / "slices" / slice_name(k), cfg.pq, sol.u0[k], sol.u1[k]);
            f << k << ',' << sol.tau[k] << ',' << slice_name(k) << '\n';
        }
        close_csv(f, path);
    }
    {
        const fs::path path = out / "fast_cells.csv";
        auto f = open_csv(path);
        f << "p,q,J,m\n";
        for (int j = 0; j < cfg.pq.b.n; ++j)
            for (int i = 0; i < cfg.pq.a.n; ++i)
                f << cfg.pq.a.x(i) << ',' << cfg.pq.b.x(j) << ',' << sol.J(i, j) << ',' << sol.m(i, j) << '\n';
        close_csv(f, path);
    }
    {
        const fs::path path = out / "point.csv";
        auto f = open_csv(path);
        f << "tau,u0,u1\n";
        for (std::size_t k = 0; k < sol.tau.size(); ++k)
            f << sol.tau[k] << ',' << interpolate(sol.u0[k], cfg.pq, 0.1, 0.1) << ','
              << interpolate(sol.u1[k], cfg.pq, 0.1, 0.1) << '\n';
        close_csv(f, path);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "cascade: " << sol.tau.size() << " slices, dt_tau=" << sol.dt_tau << ", " << secs << " s\n";
    std::cout << "wrote " << emit_manifest("solve-kolmogorov", eff, out, secs, {{"dt_tau", sol.dt_tau}}).string()
              << '\n';
    return 0;
}

/// Rebuilds a cascade solution from a solve-kolmogorov output directory.
CascadeSolution load_cascade(const fs::path& dir) {
    const Json cfg_json = load_config_file(dir / "manifest.json");
    CascadeSolution sol;
    sol.config = cascade_from_json(cfg_json);
    const auto index = read_csv(dir / "slices" / "index.csv");
    const auto& taus = index.column("tau");
    const auto& idx = index.column("index");
    const auto& g = sol.config.pq;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        const auto slice = read_csv(dir / "slices" / slice_name(static_cast<std::size_t>(idx[k])));
        const auto& u0 = slice.column("u0");
        const auto& u1 = slice.column("u1");
        if (static_cast<int>(u0.size()) != g.size())
            throw ConfigError((dir / "slices").string() + ": slice size does not match the recorded grid");
        GridField a(g), b(g);
        a.v = u0;
        b.v = u1;
        sol.tau.push_back(taus[k]);
        sol.u0.push_back(std::move(a));
        sol.u1.push_back(std::move(b));
    }
    if (sol.tau.size() < 2) throw ConfigError(dir.string() + ": need at least two saved slices");
    return sol;
}

int cmd_compare(const CommonOptions& o, const std::string& pde, const std::string& mc, std::optional<double> eps_flag) {
    const auto t0 = Clock::now();
    Json eff;
    Json cfg_json = assemble_config(o, "compare");
    const auto cmp = compare_from_json(cfg_json, &eff);
    const auto sol = load_cascade(pde);
    const Json mc_cfg = load_config_file(fs::path(mc) / "manifest.json");
    double eps = 0.0;
    if (eps_flag)
        eps = *eps_flag;
    else if (cmp.epsilon)
        eps = *cmp.epsilon;
    else if (mc_cfg.contains("epsilon") && mc_cfg["epsilon"].is_number())
        eps = mc_cfg["epsilon"].get<double>();
    else
        throw ConfigError("compare: epsilon not given and not recorded in the Monte Carlo manifest");
    eff["epsilon"] = eps;
    eff["pde"] = pde;
    eff["mc"] = mc;
    const auto stats = read_csv(fs::path(mc) / "stats.csv");
    const auto& t_all = stats.column("t");
    const auto& z_all = stats.column("mean");
    std::vector<double> t, z;
    for (std::size_t k = 0; k < t_all.size(); ++k)
        if (tau_of_t(t_all[k], eps, cmp.map) <= sol.tau.back() + 1e-12) {
            t.push_back(t_all[k]);
            z.push_back(z_all[k]);
        }
    if (t.empty()) throw ConfigError("compare: no Monte Carlo times fall inside the solved tau range");
    const auto u = uhat_series(sol, eps, cmp.p, cmp.q, t, cmp.map);
    const auto re = relative_error(u, z);
    const double window = initial_window_length(t, re, cmp.threshold);
    const fs::path out = resolve_out(o, "compare");
    write_re_csv(out / "re.csv", t, u, z, re);
    std::cout << "compare: eps=" << eps << " initial window with RE < " << cmp.threshold << ": " << window << '\n';
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "wrote " << emit_manifest("compare", eff, out, secs, {{"window_length", window}}).string() << '\n';
    return 0;
}

int cmd_check_multiscale(const CommonOptions& o) {
    const auto t0 = Clock::now();
    Json eff;
    const auto c = multiscale_check_from_json(assemble_config(o, "check-multiscale"), &eff);
    const auto sig = ReducedSigmas::from_alpha0(c.alpha0);
    const auto rep = multiscale_report(c.epsilons, c.nu0, sig, c.point, c.density_point[0], c.density_point[1]);
    const fs::path out = resolve_out(o, "check-multiscale");
    {
        const fs::path path = out / "residuals.csv";
        auto f = open_csv(path);
        f << "epsilon,drift_residual,generator_residual\n";
        for (std::size_t k = 0; k < rep.epsilons.size(); ++k)
            f << rep.epsilons[k] << ',' << rep.drift_residual[k] << ',' << rep.generator_residual[k] << '\n';
        close_csv(f, path);
    }
    const Json summary{{"drift_slope", rep.drift_slope},
                       {"generator_slope", rep.generator_slope},
                       {"density_normalization", rep.normalization},
                       {"stationarity_residual", rep.stationarity},
                       {"moment_r2s2_quadrature", rep.moment_quadrature},
                       {"moment_r2s2_closed_form", rep.moment_closed_form}};
    std::cout << summary.dump(2) << '\n';
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "wrote " << emit_manifest("check-multiscale", eff, out, secs, {{"summary", summary}}).string() << '\n';
    return 0;
}

int cmd_preset_list() {
    for (const auto& p : preset_registry()) {
        std::cout << std::left << std::setw(18) << p.name << std::setw(20) << p.subcommand << p.description << '\n';
        if (!p.downscaling.empty()) std::cout << std::setw(38) << "" << "downscaled: " << p.downscaling.dump() << '\n';
    }
    return 0;
}

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "JSON config file (a manifest.json is accepted)");
    app->add_option("--preset", o.preset_name, "named preset (see preset-list)");
    app->add_option("--out", o.out, "output directory (default: $QSS_OUTPUT_ROOT/<name>)");
    app->add_option("--set", o.overrides, "override a config field, key=value (value parsed as JSON)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-stationary state selection: simulations, averaging checks, Kolmogorov cascade"};
    app.require_subcommand(1);
    CommonOptions common;
    std::string pde_dir, mc_dir;
    std::optional<double> eps_flag;

    auto* vort = app.add_subcommand("simulate-vorticity", "Monte Carlo ensemble of the truncated SPDE");
    add_common(vort, common);
    auto* red = app.add_subcommand("simulate-reduced", "Monte Carlo ensemble of the reduced four-mode model");
    add_common(red, common);
    auto* kol = app.add_subcommand("solve-kolmogorov", "finite-difference solution of the u0/u1/u2 cascade");
    add_common(kol, common);
    auto* cmp = app.add_subcommand("compare", "relative error of u-hat against a reduced ensemble");
    add_common(cmp, common);
    cmp->add_option("--pde", pde_dir, "solve-kolmogorov output directory")->required();
    cmp->add_option("--mc", mc_dir, "simulate-reduced output directory")->required();
    cmp->add_option("--epsilon", eps_flag, "epsilon (default: from the Monte Carlo manifest)");
    auto* ms = app.add_subcommand("check-multiscale", "expansion residuals and fast-density checks");
    add_common(ms, common);
    auto* pl = app.add_subcommand("preset-list", "list the figure presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*vort) return cmd_simulate_vorticity(common);
        if (*red) return cmd_simulate_reduced(common);
        if (*kol) return cmd_solve_kolmogorov(common);
        if (*cmp) return cmd_compare(common, pde_dir, mc_dir, eps_flag);
        if (*ms) return cmd_check_multiscale(common);
        if (*pl) return cmd_preset_list();
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure at t=" << e.time() << ": " << e.what() << '\n';
        return 3;
    }
    return 2;
}
