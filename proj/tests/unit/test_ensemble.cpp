#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "qss/ensemble.hpp"
#include "qss/reduced.hpp"

using namespace qss;

namespace {

ReducedSimConfig small_noisy(double delta) {
    ReducedSimConfig c;
    c.delta = delta;
    c.nu = 0.05;
    c.dt = 0.01;
    c.t_end = 20.0;
    c.save_every = 0.5;
    c.sigmas = ReducedSigmas::from_alpha0(0.349);
    return c;
}

}  // namespace

TEST(ConfidenceInterval, Examples) {
    const auto [lo, hi] = confidence_interval(0.5, 0.04, 100);
    EXPECT_NEAR(lo, 0.4608, 1e-15);
    EXPECT_NEAR(hi, 0.5392, 1e-15);
    const auto z = confidence_interval(0.3, 0.0, 10);
    EXPECT_EQ(z.first, 0.3);
    EXPECT_EQ(z.second, 0.3);
    const auto w1 = confidence_interval(0.0, 1.0, 50);
    const auto w4 = confidence_interval(0.0, 1.0, 200);
    EXPECT_NEAR(w4.second, w1.second / 2, 1e-15);
    EXPECT_THROW(confidence_interval(0.0, 1.0, 1), ConfigError);
}

TEST(MomentAccumulator, MatchesTwoPassReference) {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> n(0.37, 0.2);
    std::vector<double> x(5000);
    for (auto& v : x) v = n(gen);
    MomentAccumulator acc;
    for (double v : x) acc.add(v);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= x.size();
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= x.size() - 1;
    EXPECT_NEAR(acc.mean(), mean, 1e-12);
    EXPECT_NEAR(acc.variance(), var, 1e-12);
}

TEST(MomentAccumulator, MergeOrderIndependent) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<MomentAccumulator> parts(7);
    MomentAccumulator whole;
    for (int k = 0; k < 700; ++k) {
        const double v = u(gen);
        parts[static_cast<std::size_t>(k % 7)].add(v);
        whole.add(v);
    }
    MomentAccumulator fwd, rev, tree;
    for (const auto& p : parts) fwd.merge(p);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) rev.merge(*it);
    MomentAccumulator a = parts[0], b = parts[4];
    for (int i : {1, 2, 3}) a.merge(parts[static_cast<std::size_t>(i)]);
    for (int i : {5, 6}) b.merge(parts[static_cast<std::size_t>(i)]);
    tree.merge(b);
    tree.merge(a);
    for (const auto* m : {&fwd, &rev, &tree}) {
        EXPECT_EQ(m->count(), 700u);
        EXPECT_NEAR(m->mean(), whole.mean(), 1e-12);
        EXPECT_NEAR(m->variance(), whole.variance(), 1e-12);
    }
}

TEST(TimeAverage, Examples) {
    std::vector<double> t, c, lin;
    for (int k = 0; k <= 100; ++k) {
        t.push_back(0.1 * k);
        c.push_back(0.7);
        lin.push_back(0.1 * k);
    }
    EXPECT_NEAR(time_average(t, c, 0.0), 0.7, 1e-15);
    EXPECT_NEAR(time_average(t, lin, 0.0), 5.0, 1e-12);
    // Window ends off the sample grid.
    EXPECT_NEAR(time_average(t, lin, 2.05, 7.33), (2.05 + 7.33) / 2, 1e-12);
    EXPECT_THROW(time_average(t, c, 10.0), ConfigError);
    EXPECT_THROW(time_average(t, c, 0.0, 11.0), ConfigError);
    EXPECT_THROW(time_average({}, {}, 0.0), ConfigError);
}

TEST(TransitionDetector, Examples) {
    std::vector<double> t, z;
    for (int k = 0; k <= 300; ++k) {
        t.push_back(k);
        z.push_back(0.5);
    }
    auto v = transition_detector(t, z);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].state, QssLabel::kDipole);

    for (int k = 0; k <= 300; ++k) z[static_cast<std::size_t>(k)] = (k >= 100 && k < 200) ? 0.1 : 0.9;
    v = transition_detector(t, z);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(label_char(v[0].state), 'x');
    EXPECT_EQ(label_char(v[1].state), 'y');
    EXPECT_EQ(label_char(v[2].state), 'x');
    EXPECT_DOUBLE_EQ(v[1].t_enter, 100.0);
    EXPECT_EQ(count_xy_transitions(v), 2);

    // A 2-unit blip is shorter than the dwell and is absorbed.
    for (int k = 0; k <= 300; ++k) z[static_cast<std::size_t>(k)] = (k >= 150 && k < 152) ? 0.1 : 0.9;
    v = transition_detector(t, z);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(count_xy_transitions(v), 0);

    EXPECT_THROW(transition_detector(t, z, {0.8, 0.2, 5.0}), ConfigError);
}

TEST(TransitionDetector, DipoleVisitsDoNotCount) {
    std::vector<Visit> v{{0, 10, QssLabel::kXBar}, {10, 20, QssLabel::kDipole}, {20, 30, QssLabel::kXBar},
                         {30, 40, QssLabel::kDipole}, {40, 50, QssLabel::kYBar}};
    EXPECT_EQ(count_xy_transitions(v), 1);
}

TEST(RunEnsemble, DeterministicTrialsHaveZeroVariance) {
    ReducedSimConfig c = small_noisy(1.1);
    c.sigmas = {};
    c.initial = {0.02, 0.01, 0.0, 0.0};
    const auto s = run_ensemble([&] { return ReducedModel(c); }, c.time_grid(), {5, 1, 1, "red"});
    for (std::size_t k = 0; k < s.times.size(); ++k) {
        EXPECT_EQ(s.variance[k], 0.0);
        EXPECT_EQ(s.ci_low[k], s.mean[k]);
        EXPECT_EQ(s.ci_high[k], s.mean[k]);
    }
}

TEST(RunEnsemble, ThreadCountAndReorderInvariance) {
    const auto c = small_noisy(1.0);
    std::map<std::uint64_t, std::vector<double>> paths;
    const auto one = run_ensemble([&] { return ReducedModel(c); }, c.time_grid(), {12, 42, 1, "red"},
                                  [&](std::uint64_t i, std::uint64_t, const Trajectory& tr) { paths[i] = tr.z; });
    const auto three = run_ensemble([&] { return ReducedModel(c); }, c.time_grid(), {12, 42, 3, "red"});
    ASSERT_EQ(one.times, three.times);
    for (std::size_t k = 0; k < one.times.size(); ++k) {
        EXPECT_NEAR(one.mean[k], three.mean[k], 1e-12);
        EXPECT_NEAR(one.variance[k], three.variance[k], 1e-12);
        EXPECT_LE(one.ci_low[k], one.mean[k]);
        EXPECT_GE(one.ci_high[k], one.mean[k]);
        EXPECT_GE(one.variance[k], 0.0);
        EXPECT_GE(one.mean[k], 0.0);
        EXPECT_LE(one.mean[k], 1.0);
    }
    // Reversed accumulation order reproduces the statistics.
    for (std::size_t k = 0; k < one.times.size(); ++k) {
        MomentAccumulator rev;
        for (auto it = paths.rbegin(); it != paths.rend(); ++it) rev.add(it->second[k]);
        EXPECT_NEAR(rev.mean(), one.mean[k], 1e-12);
        EXPECT_NEAR(rev.variance(), one.variance[k], 1e-12);
    }
    // Trial i is reproducible on its own from its derived seed.
    ReducedModel m(c);
    const auto tr = run_trajectory(m, c.time_grid(), GaussianStream(derive_trial_seed(42, 7)));
    EXPECT_EQ(tr.z, paths[7]);
}

TEST(RunEnsemble, TimeAverageIsLinear) {
    const auto c = small_noisy(0.9);
    std::vector<double> per_trial;
    std::vector<double> times;
    const auto s = run_ensemble([&] { return ReducedModel(c); }, c.time_grid(), {10, 3, 1, "red"},
                                [&](std::uint64_t, std::uint64_t, const Trajectory& tr) {
                                    per_trial.push_back(time_average(tr.times, tr.z, 5.0));
                                });
    double avg = 0.0;
    for (double v : per_trial) avg += v;
    avg /= per_trial.size();
    EXPECT_NEAR(time_average(s.times, s.mean, 5.0), avg, 1e-12);
}

TEST(RunEnsemble, BlowUpsAreExcludedAndReported) {
    // A non-finite initial state fails every trial.
    ReducedSimConfig c = small_noisy(1.0);
    c.initial = {NAN, 0, 0, 0};
    EXPECT_THROW(run_ensemble([&] { return ReducedModel(c); }, c.time_grid(), {4, 0, 1, "red"}), NumericalError);

    // A model that fails on odd seeds only.
    struct Flaky {
        using State = double;
        ReducedSimConfig cfg;
        bool bad = false;
        double initial_state() const { return 0.25; }
        void step(State& x, const GaussianStream& g, std::uint64_t) { x = (g.seed() % 2) ? NAN : 0.25; }
        OrderParameter order_parameter(const State& x) const { return {x, false}; }
        bool finite(const State& x) const { return std::isfinite(x); }
    };
    TimeGrid g{0.1, 1.0, 1};
    const auto s = run_ensemble([] { return Flaky{}; }, g, {40, 0, 1, "red"});
    EXPECT_GT(s.excluded.size(), 0u);
    EXPECT_EQ(s.n_trials + s.excluded.size(), 40u);
    for (const auto& f : s.excluded) EXPECT_EQ(f.seed % 2, 1u);
    EXPECT_THROW(run_ensemble([] { return Flaky{}; }, g, {1, 0, 1, "red"}), ConfigError);
}
