#pragma once

// Counter-based random numbers for reproducible ensembles.
//
// Every Gaussian draw is a pure function of (master seed, trial, step, lane),
// so trajectories do not depend on thread scheduling or on how many other
// trajectories were run before them.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace qss {

/// Philox4x32-10 block cipher (Salmon et al., SC'11).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    constexpr Philox4x32() = default;
    constexpr explicit Philox4x32(Key key) : key_(key) {}

    constexpr Counter operator()(Counter ctr) const {
        Key key = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

    constexpr const Key& key() const { return key_; }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    Key key_{0, 0};
};

/// SplitMix64 finalizer, used to turn (seed, trial) into cipher keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed for trial `trial` of an ensemble with master seed `master`.
constexpr std::uint64_t derive_trial_seed(std::uint64_t master, std::uint64_t trial) {
    return splitmix64(splitmix64(master) ^ splitmix64(trial + 0x632BE59BD9B4E019ull));
}

/// Per-trajectory Gaussian source addressed by (step, lane).
class GaussianStream {
public:
    GaussianStream() = default;
    explicit GaussianStream(std::uint64_t seed)
        : cipher_({static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}),
          seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Two independent standard normals for the given step and lane.
    std::pair<double, double> normal_pair(std::uint64_t step, std::uint32_t lane) const {
        const auto out = cipher_({static_cast<std::uint32_t>(step),
                                  static_cast<std::uint32_t>(step >> 32), lane, 0x51A7u});
        const std::uint64_t a = (std::uint64_t{out[0]} << 32) | out[1];
        const std::uint64_t b = (std::uint64_t{out[2]} << 32) | out[3];
        // Uniforms in (0, 1]; the open lower end keeps log() finite.
        const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

private:
    Philox4x32 cipher_{};
    std::uint64_t seed_ = 0;
};

}  // namespace qss
