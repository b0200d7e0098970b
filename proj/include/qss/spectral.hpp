#pragma once

// Truncated Fourier representation of vorticity on the torus
// [0, 2*pi*delta] x [0, 2*pi], with basis exp(i (k1 x / delta + k2 y)).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "qss/errors.hpp"

namespace qss {

using Complex = std::complex<double>;

struct WaveVector {
    int k1 = 0;
    int k2 = 0;

    constexpr WaveVector operator-() const { return {-k1, -k2}; }
    constexpr bool is_zero() const { return k1 == 0 && k2 == 0; }
    friend constexpr bool operator==(WaveVector, WaveVector) = default;
};

/// Anisotropic norm |k|_delta^2 = k1^2 + delta^2 k2^2.
constexpr double delta_norm_sq(WaveVector k, double delta) {
    return static_cast<double>(k.k1) * k.k1 + delta * delta * static_cast<double>(k.k2) * k.k2;
}

/// <a_perp, b> with a_perp = (a2, -a1).
constexpr double perp_dot(WaveVector a, WaveVector b) {
    return static_cast<double>(a.k2) * b.k1 - static_cast<double>(a.k1) * b.k2;
}

/// Closed upper half of the truncated lattice {|k1|,|k2| <= kmax} \ {0}:
/// k1 > 0, or k1 == 0 and k2 > 0. Each conjugate pair {k, -k} has exactly one
/// representative here.
class HalfLattice {
public:
    explicit HalfLattice(int kmax) : kmax_(kmax) {
        if (kmax < 1) throw ConfigError("kmax must be >= 1, got " + std::to_string(kmax));
    }

    int kmax() const { return kmax_; }
    std::size_t size() const {
        const std::size_t side = 2 * static_cast<std::size_t>(kmax_) + 1;
        return (side * side - 1) / 2;
    }
    /// Number of modes in the full truncated lattice (both halves).
    std::size_t full_size() const { return 2 * size(); }

    bool contains(WaveVector k) const {
        return !k.is_zero() && std::abs(k.k1) <= kmax_ && std::abs(k.k2) <= kmax_;
    }
    static constexpr bool is_upper(WaveVector k) { return k.k1 > 0 || (k.k1 == 0 && k.k2 > 0); }

    /// Index of an upper-half wave vector.
    std::size_t index(WaveVector k) const {
        if (k.k1 == 0) return static_cast<std::size_t>(k.k2 - 1);
        return static_cast<std::size_t>(kmax_) +
               static_cast<std::size_t>(k.k1 - 1) * (2 * static_cast<std::size_t>(kmax_) + 1) +
               static_cast<std::size_t>(k.k2 + kmax_);
    }

    WaveVector at(std::size_t i) const {
        const auto km = static_cast<std::size_t>(kmax_);
        if (i < km) return {0, static_cast<int>(i) + 1};
        const std::size_t rest = i - km;
        const std::size_t side = 2 * km + 1;
        return {static_cast<int>(rest / side) + 1, static_cast<int>(rest % side) - kmax_};
    }

private:
    int kmax_;
};

/// Vorticity Fourier amplitudes on the truncated lattice. Only the upper half is
/// stored; amplitude(-k) is always conj(amplitude(k)) and (0,0) is always zero.
class SpectralField {
public:
    SpectralField(double delta, int kmax) : delta_(delta), lattice_(kmax), half_(lattice_.size()) {
        if (!(delta > 0.0) || !std::isfinite(delta))
            throw ConfigError("delta must be a positive finite number");
    }

    double delta() const { return delta_; }
    int kmax() const { return lattice_.kmax(); }
    const HalfLattice& lattice() const { return lattice_; }

    bool contains(WaveVector k) const { return lattice_.contains(k); }

    /// Amplitude at any wave vector; zero outside the truncation.
    Complex operator()(WaveVector k) const {
        if (!lattice_.contains(k)) return {};
        if (HalfLattice::is_upper(k)) return half_[lattice_.index(k)];
        return std::conj(half_[lattice_.index(-k)]);
    }

    /// Sets amplitude(k) = value and, implicitly, amplitude(-k) = conj(value).
    void set(WaveVector k, Complex value) {
        if (!lattice_.contains(k))
            throw ConfigError("wave vector (" + std::to_string(k.k1) + "," + std::to_string(k.k2) +
                              ") outside truncation");
        if (HalfLattice::is_upper(k))
            half_[lattice_.index(k)] = value;
        else
            half_[lattice_.index(-k)] = std::conj(value);
    }

    std::span<const Complex> half() const { return half_; }
    std::span<Complex> half() { return half_; }

    /// Sum over the full lattice of |amplitude|^2.
    double enstrophy() const {
        double s = 0.0;
        for (const auto& a : half_) s += std::norm(a);
        return 2.0 * s;
    }

    /// Max modulus over the stored amplitudes.
    double max_abs() const {
        double m = 0.0;
        for (const auto& a : half_) m = std::max(m, std::abs(a));
        return m;
    }

    bool all_finite() const {
        return std::all_of(half_.begin(), half_.end(), [](const Complex& a) {
            return std::isfinite(a.real()) && std::isfinite(a.imag());
        });
    }

    SpectralField& operator+=(const SpectralField& o) {
        check_compatible(o);
        for (std::size_t i = 0; i < half_.size(); ++i) half_[i] += o.half_[i];
        return *this;
    }
    SpectralField& operator-=(const SpectralField& o) {
        check_compatible(o);
        for (std::size_t i = 0; i < half_.size(); ++i) half_[i] -= o.half_[i];
        return *this;
    }
    SpectralField& operator*=(double s) {
        for (auto& a : half_) a *= s;
        return *this;
    }
    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

private:
    void check_compatible(const SpectralField& o) const {
        if (o.kmax() != kmax() || o.delta_ != delta_)
            throw ConfigError("incompatible spectral fields (kmax or delta differ)");
    }

    double delta_;
    HalfLattice lattice_;
    std::vector<Complex> half_;
};

namespace detail {

// Dense (2K+1)^2 copy of a field, indexed by (k1+K, k2+K).
struct DenseSpectrum {
    int kmax;
    int side;
    std::vector<Complex> amp;
    std::vector<double> inv_norm;  // 1/|k|_delta^2, zero at the origin

    explicit DenseSpectrum(const SpectralField& f)
        : kmax(f.kmax()), side(2 * f.kmax() + 1), amp(side * side), inv_norm(side * side, 0.0) {
        for (int k1 = -kmax; k1 <= kmax; ++k1)
            for (int k2 = -kmax; k2 <= kmax; ++k2) {
                const WaveVector k{k1, k2};
                if (k.is_zero()) continue;
                amp[at(k)] = f(k);
                inv_norm[at(k)] = 1.0 / delta_norm_sq(k, f.delta());
            }
    }
    std::size_t at(WaveVector k) const {
        return static_cast<std::size_t>(k.k1 + kmax) * side + static_cast<std::size_t>(k.k2 + kmax);
    }
};

}  // namespace detail

/// Galerkin-truncated nonlinearity, symmetrized form:
/// N_k = -(delta/2) sum_{j+l=k} <j_perp,l> (1/|l|^2 - 1/|j|^2) w_j w_l,
/// with j, l, k all inside the truncation. Direct O(K^2) evaluation.
inline SpectralField galerkin_nonlinearity(const SpectralField& field) {
    const detail::DenseSpectrum d(field);
    const int K = field.kmax();
    SpectralField out(field.delta(), K);
    auto half = out.half();
    const auto& lat = field.lattice();
    for (std::size_t i = 0; i < half.size(); ++i) {
        const WaveVector k = lat.at(i);
        Complex acc{};
        const int j1_lo = std::max(-K, k.k1 - K), j1_hi = std::min(K, k.k1 + K);
        const int j2_lo = std::max(-K, k.k2 - K), j2_hi = std::min(K, k.k2 + K);
        for (int j1 = j1_lo; j1 <= j1_hi; ++j1)
            for (int j2 = j2_lo; j2 <= j2_hi; ++j2) {
                const WaveVector j{j1, j2};
                const WaveVector l{k.k1 - j1, k.k2 - j2};
                if (j.is_zero() || l.is_zero()) continue;
                const double c = perp_dot(j, l) * (d.inv_norm[d.at(l)] - d.inv_norm[d.at(j)]);
                if (c == 0.0) continue;
                acc += c * d.amp[d.at(j)] * d.amp[d.at(l)];
            }
        half[i] = -0.5 * field.delta() * acc;
    }
    return out;
}

/// Unsymmetrized form N_k = -delta sum_l <k_perp,l>/|l|^2 w_{k-l} w_l.
/// Kept as an independent check of galerkin_nonlinearity.
inline SpectralField nonlinearity_unsymmetrized(const SpectralField& field) {
    const detail::DenseSpectrum d(field);
    const int K = field.kmax();
    SpectralField out(field.delta(), K);
    auto half = out.half();
    const auto& lat = field.lattice();
    for (std::size_t i = 0; i < half.size(); ++i) {
        const WaveVector k = lat.at(i);
        Complex acc{};
        for (int l1 = std::max(-K, k.k1 - K); l1 <= std::min(K, k.k1 + K); ++l1)
            for (int l2 = std::max(-K, k.k2 - K); l2 <= std::min(K, k.k2 + K); ++l2) {
                const WaveVector l{l1, l2};
                const WaveVector m{k.k1 - l1, k.k2 - l2};
                if (l.is_zero() || m.is_zero()) continue;
                acc += perp_dot(k, l) * d.inv_norm[d.at(l)] * d.amp[d.at(m)] * d.amp[d.at(l)];
            }
        half[i] = -field.delta() * acc;
    }
    return out;
}

/// Smallest 2^a 3^b 5^c 7^d integer >= n.
inline int next_fft_size(int n) {
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int f : {2, 3, 5, 7})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

/// Pseudo-spectral evaluation of the truncated nonlinearity -u.grad(w) on a
/// zero-padded grid of at least 3*kmax+1 points per direction, which makes the
/// product alias-free on the retained modes. Owns FFTW plans and buffers; one
/// workspace per thread.
class FftNonlinearity {
public:
    explicit FftNonlinearity(int kmax, int grid = 0)
        : kmax_(kmax), n_(grid > 0 ? grid : next_fft_size(3 * kmax + 1)), nc_(n_ / 2 + 1) {
        if (n_ < 3 * kmax_ + 1)
            throw ConfigError("FFT grid " + std::to_string(n_) + " too small for kmax " +
                              std::to_string(kmax_));
        const std::size_t nreal = static_cast<std::size_t>(n_) * n_;
        const std::size_t ncplx = static_cast<std::size_t>(n_) * nc_;
        for (auto& b : spec_) b = fftw_alloc_complex(ncplx);
        for (auto& b : phys_) b = fftw_alloc_real(nreal);
        std::lock_guard lock(planner_mutex());
        backward_ = fftw_plan_dft_c2r_2d(n_, n_, spec_[0], phys_[0], FFTW_ESTIMATE);
        forward_ = fftw_plan_dft_r2c_2d(n_, n_, phys_[0], spec_[0], FFTW_ESTIMATE);
    }
    FftNonlinearity(const FftNonlinearity&) = delete;
    FftNonlinearity& operator=(const FftNonlinearity&) = delete;
    ~FftNonlinearity() {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(backward_);
            fftw_destroy_plan(forward_);
        }
        for (auto* b : spec_) fftw_free(b);
        for (auto* b : phys_) fftw_free(b);
    }

    int kmax() const { return kmax_; }
    int grid() const { return n_; }

    void compute(const SpectralField& field, SpectralField& out) {
        if (field.kmax() != kmax_ || out.kmax() != kmax_)
            throw ConfigError("FftNonlinearity: kmax mismatch");
        const double delta = field.delta();
        const std::size_t ncplx = static_cast<std::size_t>(n_) * nc_;
        for (auto* b : spec_) std::fill_n(reinterpret_cast<double*>(b), 2 * ncplx, 0.0);

        // Spectra of u = d_y psi, v = -d_x psi, w_x, w_y with psi = delta^2 w / |k|^2.
        for (int k2 = 0; k2 <= kmax_; ++k2)
            for (int k1 = -kmax_; k1 <= kmax_; ++k1) {
                const WaveVector k{k1, k2};
                if (k.is_zero()) continue;
                const Complex w = field(k);
                const Complex psi = delta * delta * w / delta_norm_sq(k, delta);
                const Complex ikx{0.0, k1 / delta};
                const Complex iky{0.0, static_cast<double>(k2)};
                const std::size_t at = static_cast<std::size_t>((k1 + n_) % n_) * nc_ + k2;
                store(spec_[0][at], iky * psi);
                store(spec_[1][at], -ikx * psi);
                store(spec_[2][at], ikx * w);
                store(spec_[3][at], iky * w);
            }
        for (int b = 0; b < 4; ++b) fftw_execute_dft_c2r(backward_, spec_[b], phys_[b]);

        const std::size_t nreal = static_cast<std::size_t>(n_) * n_;
        const double scale = 1.0 / static_cast<double>(nreal);
        for (std::size_t i = 0; i < nreal; ++i)
            phys_[0][i] = -(phys_[0][i] * phys_[2][i] + phys_[1][i] * phys_[3][i]) * scale;
        fftw_execute_dft_r2c(forward_, phys_[0], spec_[0]);

        auto half = out.half();
        const auto& lat = out.lattice();
        for (std::size_t i = 0; i < half.size(); ++i) {
            const WaveVector k = lat.at(i);
            // Upper half has k1 >= 0; read the stored k2 >= 0 representative.
            if (k.k2 >= 0) {
                const auto& c = spec_[0][static_cast<std::size_t>(k.k1) * nc_ + k.k2];
                half[i] = {c[0], c[1]};
            } else {
                const auto& c = spec_[0][static_cast<std::size_t>((n_ - k.k1) % n_) * nc_ + (-k.k2)];
                half[i] = {c[0], -c[1]};
            }
        }
    }

    SpectralField operator()(const SpectralField& field) {
        SpectralField out(field.delta(), field.kmax());
        compute(field, out);
        return out;
    }

private:
    static void store(fftw_complex& dst, Complex v) {
        dst[0] = v.real();
        dst[1] = v.imag();
    }
    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }

    int kmax_;
    int n_;
    int nc_;
    fftw_complex* spec_[4]{};
    double* phys_[4]{};
    fftw_plan backward_{};
    fftw_plan forward_{};
};

/// Velocity Fourier amplitudes (u1, u2); each component is itself real-valued.
struct VelocitySpectrum {
    SpectralField u1;
    SpectralField u2;
};

/// Biot-Savart law: u = (d_y, -d_x) (-Delta)^{-1} w. In this basis
/// u1_k = i delta^2 k2 w_k / |k|^2 and u2_k = -i delta k1 w_k / |k|^2.
inline VelocitySpectrum biot_savart(const SpectralField& field) {
    const double delta = field.delta();
    VelocitySpectrum v{SpectralField(delta, field.kmax()), SpectralField(delta, field.kmax())};
    const auto& lat = field.lattice();
    auto in = field.half();
    auto u1 = v.u1.half();
    auto u2 = v.u2.half();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const WaveVector k = lat.at(i);
        const double inv = 1.0 / delta_norm_sq(k, delta);
        u1[i] = Complex{0.0, delta * delta * k.k2 * inv} * in[i];
        u2[i] = Complex{0.0, -delta * k.k1 * inv} * in[i];
    }
    return v;
}

struct FamilyCoefficients {
    double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
    double t = 0.0;
    double nu = 0.0;
    double delta = 1.0;
};

/// exp(-nu t/delta^2)[a1 cos(x/delta) + a2 sin(x/delta)] + exp(-nu t)[a3 cos y + a4 sin y].
inline SpectralField family_state(const FamilyCoefficients& c, int kmax = 1) {
    SpectralField f(c.delta, kmax);
    const double ex = std::exp(-c.nu * c.t / (c.delta * c.delta));
    const double ey = std::exp(-c.nu * c.t);
    f.set({1, 0}, ex * Complex{c.a1, -c.a2} * 0.5);
    f.set({0, 1}, ey * Complex{c.a3, -c.a4} * 0.5);
    return f;
}

/// Named quasi-stationary states with unit amplitude (sine phase).
inline SpectralField named_state(const std::string& name, double delta, int kmax) {
    FamilyCoefficients c;
    c.delta = delta;
    if (name == "zero") {
    } else if (name == "xbar") {
        c.a2 = 1.0;
    } else if (name == "ybar") {
        c.a4 = 1.0;
    } else if (name == "dipole") {
        c.a2 = 1.0;
        c.a4 = 1.0;
    } else {
        throw ConfigError("unknown named initial state '" + name + "'");
    }
    return family_state(c, kmax);
}

/// Physical-space samples on an nx x ny uniform grid of the torus.
struct PhysicalGrid {
    int nx = 0, ny = 0;
    double lx = 0.0, ly = 0.0;
    std::vector<double> values;      // row-major, index j * nx + i  (x_i, y_j)
    double max_imag = 0.0;           // largest |Im| encountered during synthesis

    double x(int i) const { return lx * i / nx; }
    double y(int j) const { return ly * j / ny; }
    double operator()(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
};

inline PhysicalGrid to_physical(const SpectralField& field, int nx, int ny) {
    if (nx < 1 || ny < 1) throw ConfigError("physical grid dimensions must be positive");
    const int K = field.kmax();
    const double two_pi = 2.0 * std::acos(-1.0);
    PhysicalGrid g{nx, ny, two_pi * field.delta(), two_pi, std::vector<double>(static_cast<std::size_t>(nx) * ny), 0.0};
    // ex[i][k1+K] = exp(i k1 x_i / delta) = exp(2 pi i k1 i / nx)
    std::vector<Complex> ex(static_cast<std::size_t>(nx) * (2 * K + 1));
    std::vector<Complex> ey(static_cast<std::size_t>(ny) * (2 * K + 1));
    for (int i = 0; i < nx; ++i)
        for (int k = -K; k <= K; ++k) ex[static_cast<std::size_t>(i) * (2 * K + 1) + k + K] = std::polar(1.0, two_pi * k * i / nx);
    for (int j = 0; j < ny; ++j)
        for (int k = -K; k <= K; ++k) ey[static_cast<std::size_t>(j) * (2 * K + 1) + k + K] = std::polar(1.0, two_pi * k * j / ny);
    const detail::DenseSpectrum d(field);
    std::vector<Complex> partial(2 * K + 1);
    for (int j = 0; j < ny; ++j) {
        // partial[k1] = sum_k2 w(k1,k2) exp(i k2 y_j)
        for (int k1 = -K; k1 <= K; ++k1) {
            Complex s{};
            for (int k2 = -K; k2 <= K; ++k2)
                s += d.amp[d.at({k1, k2})] * ey[static_cast<std::size_t>(j) * (2 * K + 1) + k2 + K];
            partial[k1 + K] = s;
        }
        for (int i = 0; i < nx; ++i) {
            Complex s{};
            for (int k1 = -K; k1 <= K; ++k1) s += partial[k1 + K] * ex[static_cast<std::size_t>(i) * (2 * K + 1) + k1 + K];
            g.values[static_cast<std::size_t>(j) * nx + i] = s.real();
            g.max_imag = std::max(g.max_imag, std::abs(s.imag()));
        }
    }
    return g;
}

}  // namespace qss
