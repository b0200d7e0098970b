#pragma once

// Monte Carlo ensembles of order-parameter trajectories and their statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qss/errors.hpp"
#include "qss/rng.hpp"
#include "qss/trajectory.hpp"

namespace qss {

/// Streaming mean / variance (Welford) with the pairwise merge of Chan et al.
class MomentAccumulator {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    void merge(const MomentAccumulator& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
        const double n = na + nb;
        const double d = o.mean_ - mean_;
        mean_ += d * nb / n;
        m2_ += o.m2_ + d * d * na * nb / n;
        n_ += o.n_;
    }

    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    /// Unbiased (N - 1) sample variance; 0 for fewer than two samples.
    double variance() const { return n_ > 1 ? std::max(0.0, m2_ / static_cast<double>(n_ - 1)) : 0.0; }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// mean -/+ 1.96 sqrt(variance / N).
inline std::pair<double, double> confidence_interval(double mean, double variance, std::uint64_t n) {
    if (n < 2) throw ConfigError("confidence interval needs N >= 2");
    const double half = 1.96 * std::sqrt(std::max(0.0, variance) / static_cast<double>(n));
    return {mean - half, mean + half};
}

struct TrialFailure {
    std::uint64_t trial = 0;
    std::uint64_t seed = 0;
    double time = 0.0;
    std::string message;
};

struct EnsembleStats {
    std::string model;  // "vort" | "red"
    std::vector<double> times, mean, variance, ci_low, ci_high;
    std::uint64_t n_trials = 0;  // trials that entered the statistics
    std::uint64_t master_seed = 0;
    std::vector<TrialFailure> excluded;

    static EnsembleStats from_accumulators(std::string model, std::vector<double> times,
                                           const std::vector<MomentAccumulator>& acc) {
        if (times.size() != acc.size()) throw ConfigError("time grid and accumulators differ in length");
        EnsembleStats s;
        s.model = std::move(model);
        s.times = std::move(times);
        s.n_trials = acc.empty() ? 0 : acc.front().count();
        for (const auto& a : acc) {
            s.mean.push_back(a.mean());
            s.variance.push_back(a.variance());
            if (s.n_trials >= 2) {
                const auto [lo, hi] = confidence_interval(a.mean(), a.variance(), a.count());
                s.ci_low.push_back(lo);
                s.ci_high.push_back(hi);
            } else {
                s.ci_low.push_back(a.mean());
                s.ci_high.push_back(a.mean());
            }
        }
        return s;
    }
};

/// Trapezoidal (1 / (T - t_burn)) * int_{t_burn}^{T} f dt on a sampled series,
/// with linear interpolation at the window ends.
inline double time_average(const std::vector<double>& t, const std::vector<double>& f, double t_burn,
                           std::optional<double> t_final = std::nullopt) {
    if (t.size() != f.size()) throw ConfigError("time_average: series lengths differ");
    if (t.empty()) throw ConfigError("time_average: empty series");
    const double T = t_final.value_or(t.back());
    if (!(t_burn < T)) throw ConfigError("time_average: empty window (t_burn >= T)");
    if (t_burn < t.front() - 1e-12 || T > t.back() + 1e-12)
        throw ConfigError("time_average: window not covered by the series");
    const auto value_at = [&](double x) {
        const auto it = std::lower_bound(t.begin(), t.end(), x);
        if (it == t.begin()) return f.front();
        if (it == t.end()) return f.back();
        const std::size_t j = static_cast<std::size_t>(it - t.begin());
        const double w = (x - t[j - 1]) / (t[j] - t[j - 1]);
        return (1.0 - w) * f[j - 1] + w * f[j];
    };
    double integral = 0.0;
    double prev_t = t_burn, prev_f = value_at(t_burn);
    for (std::size_t j = 0; j < t.size(); ++j) {
        if (t[j] <= t_burn) continue;
        if (t[j] >= T) break;
        integral += 0.5 * (prev_f + f[j]) * (t[j] - prev_t);
        prev_t = t[j];
        prev_f = f[j];
    }
    integral += 0.5 * (prev_f + value_at(T)) * (T - prev_t);
    return integral / (T - t_burn);
}

enum class QssLabel { kYBar, kDipole, kXBar };

inline char label_char(QssLabel l) {
    switch (l) {
        case QssLabel::kYBar: return 'y';
        case QssLabel::kXBar: return 'x';
        default: return 'd';
    }
}

struct Visit {
    double t_enter = 0.0;
    double t_leave = 0.0;
    QssLabel state = QssLabel::kDipole;
};

struct TransitionOptions {
    double low_band = 0.2;
    double high_band = 0.8;
    double dwell = 5.0;
};

/// Labels a Z series as y-bar (Z <= low), x-bar (Z >= high) or dipole and
/// returns the sequence of visits that last at least `dwell`. Shorter
/// excursions are absorbed into the surrounding visit.
inline std::vector<Visit> transition_detector(const std::vector<double>& t, const std::vector<double>& z,
                                              const TransitionOptions& opt = {}) {
    if (!(0.0 <= opt.low_band && opt.low_band < opt.high_band && opt.high_band <= 1.0))
        throw ConfigError("transition_detector: need 0 <= low_band < high_band <= 1");
    if (t.size() != z.size()) throw ConfigError("transition_detector: series lengths differ");
    if (t.empty()) return {};
    const auto classify = [&](double v) {
        if (v <= opt.low_band) return QssLabel::kYBar;
        if (v >= opt.high_band) return QssLabel::kXBar;
        return QssLabel::kDipole;
    };
    std::vector<Visit> raw;
    for (std::size_t j = 0; j < t.size(); ++j) {
        const QssLabel l = classify(z[j]);
        if (raw.empty() || raw.back().state != l) {
            if (!raw.empty()) raw.back().t_leave = t[j];
            raw.push_back({t[j], t[j], l});
        }
    }
    raw.back().t_leave = t.back();

    std::vector<Visit> out;
    for (const auto& v : raw) {
        if (v.t_leave - v.t_enter < opt.dwell) {
            if (!out.empty()) out.back().t_leave = v.t_leave;
            continue;
        }
        if (!out.empty() && out.back().state == v.state)
            out.back().t_leave = v.t_leave;
        else
            out.push_back(v);
    }
    if (out.empty()) {
        const auto longest = std::max_element(raw.begin(), raw.end(), [](const Visit& a, const Visit& b) {
            return a.t_leave - a.t_enter < b.t_leave - b.t_enter;
        });
        out.push_back({t.front(), t.back(), longest->state});
    }
    return out;
}

/// Number of switches between x-bar and y-bar, ignoring dipole visits in between.
inline int count_xy_transitions(const std::vector<Visit>& visits) {
    int n = 0;
    std::optional<QssLabel> last;
    for (const auto& v : visits) {
        if (v.state == QssLabel::kDipole) continue;
        if (last && *last != v.state) ++n;
        last = v.state;
    }
    return n;
}

struct EnsembleOptions {
    std::uint64_t n_trials = 2;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;  // 0: hardware concurrency
    std::string model_tag = "red";
};

/// Called once per successful trial, serialized under a lock.
using TrialSink = std::function<void(std::uint64_t trial, std::uint64_t seed, const Trajectory&)>;

/// Runs n_trials independent trajectories. Trial i draws its noise from
/// derive_trial_seed(master_seed, i). `make_model` is invoked once per worker.
/// Trials that blow up are excluded from the statistics and listed in `excluded`.
template <class Factory>
EnsembleStats run_ensemble(Factory make_model, const TimeGrid& grid, const EnsembleOptions& opt,
                           const TrialSink& sink = {}) {
    if (opt.n_trials < 2) throw ConfigError("ensemble needs N >= 2");
    grid.validate();
    const std::size_t n_saved = static_cast<std::size_t>(grid.n_saved());
    unsigned workers = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, opt.n_trials));

    std::vector<std::vector<MomentAccumulator>> partial(workers, std::vector<MomentAccumulator>(n_saved));
    std::vector<std::vector<TrialFailure>> failures(workers);
    std::vector<double> times;
    std::mutex sink_mutex, times_mutex;
    std::vector<std::exception_ptr> errors(workers);

    const auto work = [&](unsigned w) {
        try {
            auto model = make_model();
            for (std::uint64_t i = w; i < opt.n_trials; i += workers) {
                const std::uint64_t seed = derive_trial_seed(opt.master_seed, i);
                const GaussianStream rng(seed);
                Trajectory tr;
                try {
                    tr = run_trajectory(model, grid, rng);
                } catch (const NumericalError& e) {
                    failures[w].push_back({i, seed, e.time(), e.what()});
                    continue;
                }
                for (std::size_t j = 0; j < n_saved; ++j) partial[w][j].add(tr.z[j]);
                {
                    std::lock_guard<std::mutex> lock(times_mutex);
                    if (times.empty()) times = tr.times;
                }
                if (sink) {
                    std::lock_guard<std::mutex> lock(sink_mutex);
                    sink(i, seed, tr);
                }
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<MomentAccumulator> total(n_saved);
    for (const auto& part : partial)
        for (std::size_t j = 0; j < n_saved; ++j) total[j].merge(part[j]);
    std::vector<TrialFailure> excluded;
    for (auto& f : failures) excluded.insert(excluded.end(), f.begin(), f.end());
    std::sort(excluded.begin(), excluded.end(),
              [](const TrialFailure& a, const TrialFailure& b) { return a.trial < b.trial; });

    if (times.empty()) {
        for (std::uint64_t n = 0; n <= grid.n_steps(); n += grid.save_stride) times.push_back(grid.time(n));
    }
    auto stats = EnsembleStats::from_accumulators(opt.model_tag, std::move(times), total);
    stats.master_seed = opt.master_seed;
    stats.excluded = std::move(excluded);
    if (stats.n_trials < 2)
        throw NumericalError("fewer than two trials survived (" + std::to_string(stats.excluded.size()) +
                             " excluded)");
    return stats;
}

}  // namespace qss
