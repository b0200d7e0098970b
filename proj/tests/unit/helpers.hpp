#pragma once

#include <cmath>
#include <complex>
#include <random>

#include "qss/spectral.hpp"

namespace qss::test {

// Random conjugate-symmetric field with unit-order amplitudes.
inline SpectralField random_field(double delta, int kmax, unsigned seed, double scale = 1.0) {
    SpectralField f(delta, kmax);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (auto& a : f.half()) a = {n(gen), n(gen)};
    return f;
}

inline double max_abs_diff(const SpectralField& a, const SpectralField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.half().size(); ++i) m = std::max(m, std::abs(a.half()[i] - b.half()[i]));
    return m;
}

}  // namespace qss::test
