#pragma once

// Finite-difference solution of the averaged backward Kolmogorov cascade
//
//   d_tau u0 = A u0
//   d_tau u1 = A u1 + S[u0]
//   -L0 u2   = d_tau u0 - L4 u0
//
// with A v = c(p, q) (p d_p + q d_q) v + D (sigma1^2 d_pp + sigma3^2 d_qq) v,
// c = (3 nu0 / 8)(sigma5^2 + sigma7^2) / (p^2 + q^2), on [-5, 5]^2 cell-centred
// grids with Neumann (mirror) closure.
//
// Since d_tau u0 - L4 u0 = -k (r^2 + s^2 - m) with k = (3 / (40 nu0))(p d_p + q d_q) u0
// and m = E[r^2 + s^2], the fast solve factorizes as u2 = k(p, q, tau) V(p, q; r, s)
// where L0 V = r^2 + s^2 - m. V is solved once per (p, q) cell.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "qss/errors.hpp"
#include "qss/multiscale.hpp"
#include "qss/quadrature.hpp"
#include "qss/reduced.hpp"

namespace qss {

/// n cells of width (hi - lo) / n; node i sits at the cell centre.
struct Grid1D {
    double lo = -5.0, hi = 5.0;
    int n = 41;

    double h() const { return (hi - lo) / n; }
    double x(int i) const { return lo + (i + 0.5) * h(); }
    void validate(const char* name) const {
        if (n < 3) throw ConfigError(std::string(name) + ": need at least 3 cells");
        if (!(hi > lo)) throw ConfigError(std::string(name) + ": bounds must satisfy lo < hi");
    }
};

struct Grid2D {
    Grid1D a, b;

    int size() const { return a.n * b.n; }
    int index(int i, int j) const { return j * a.n + i; }
    void validate(const char* name) const {
        a.validate(name);
        b.validate(name);
    }
};

using PQGrid = Grid2D;
using RSGrid = Grid2D;

/// Values on a Grid2D, stored with the first coordinate fastest.
struct GridField {
    int na = 0, nb = 0;
    std::vector<double> v;

    GridField() = default;
    GridField(int na_, int nb_, double fill = 0.0) : na(na_), nb(nb_), v(static_cast<std::size_t>(na_) * nb_, fill) {}
    explicit GridField(const Grid2D& g, double fill = 0.0) : GridField(g.a.n, g.b.n, fill) {}

    double& operator()(int i, int j) { return v[static_cast<std::size_t>(j) * na + i]; }
    double operator()(int i, int j) const { return v[static_cast<std::size_t>(j) * na + i]; }
    /// Mirror (Neumann) closure for out-of-range indices by one cell.
    double ghost(int i, int j) const {
        i = i < 0 ? 0 : (i >= na ? na - 1 : i);
        j = j < 0 ? 0 : (j >= nb ? nb - 1 : j);
        return (*this)(i, j);
    }
    double min() const { return *std::min_element(v.begin(), v.end()); }
    double max() const { return *std::max_element(v.begin(), v.end()); }
    double sum() const {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
};

/// p^2 / (p^2 + q^2); 1/2 at the origin.
inline double initial_condition_phi(double p, double q) {
    const double a = p * p + q * q;
    if (a == 0.0) return 0.5;
    return p * p / a;
}

inline GridField phi_field(const PQGrid& g) {
    GridField f(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) f(i, j) = initial_condition_phi(g.a.x(i), g.b.x(j));
    return f;
}

/// Parameters of the slow operator A.
struct SlowOperator {
    double nu0 = 1.0;
    ReducedSigmas sigmas{};
    DiffusionConvention diffusion = DiffusionConvention::kIto;
    double radial_scale = 1.0;  // 0 switches the radial drift off

    double diffusion_coefficient() const {
        return diffusion == DiffusionConvention::kIto ? nu0 : 2.0 * nu0;
    }
    double radial_constant() const {
        return radial_scale * 3.0 * nu0 / 8.0 * (sigmas.s5 * sigmas.s5 + sigmas.s7 * sigmas.s7);
    }
};

/// Regularized p^2 + q^2 used wherever it appears in a denominator.
inline double floored_radius_sq(double p, double q, const PQGrid& g) {
    const double h = std::min(g.a.h(), g.b.h());
    return std::max(p * p + q * q, 0.25 * h * h);
}

/// Largest stable explicit step for the monotone upwind scheme.
inline double stable_dt_u0(const PQGrid& g, const SlowOperator& op) {
    const double hp = g.a.h(), hq = g.b.h();
    const double D = op.diffusion_coefficient();
    const double K = op.radial_constant();
    double worst = 0.0;
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const double p = g.a.x(i), q = g.b.x(j);
            const double c = K / floored_radius_sq(p, q, g);
            const double rate = std::abs(c * p) / hp + std::abs(c * q) / hq +
                                2.0 * D * op.sigmas.s1 * op.sigmas.s1 / (hp * hp) +
                                2.0 * D * op.sigmas.s3 * op.sigmas.s3 / (hq * hq);
            worst = std::max(worst, rate);
        }
    return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

/// A v at every node: upwinded radial advection plus central diffusion.
inline void apply_slow_operator(const GridField& v, const PQGrid& g, const SlowOperator& op, GridField& out) {
    const double hp = g.a.h(), hq = g.b.h();
    const double D = op.diffusion_coefficient();
    const double dp = D * op.sigmas.s1 * op.sigmas.s1 / (hp * hp);
    const double dq = D * op.sigmas.s3 * op.sigmas.s3 / (hq * hq);
    const double K = op.radial_constant();
    out = GridField(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const double p = g.a.x(i), q = g.b.x(j);
            const double c = K / floored_radius_sq(p, q, g);
            const double bp = c * p, bq = c * q;
            const double u = v(i, j);
            const double adv_p = bp >= 0.0 ? bp * (v.ghost(i + 1, j) - u) / hp : bp * (u - v.ghost(i - 1, j)) / hp;
            const double adv_q = bq >= 0.0 ? bq * (v.ghost(i, j + 1) - u) / hq : bq * (u - v.ghost(i, j - 1)) / hq;
            const double diff = dp * (v.ghost(i + 1, j) - 2.0 * u + v.ghost(i - 1, j)) +
                                dq * (v.ghost(i, j + 1) - 2.0 * u + v.ghost(i, j - 1));
            out(i, j) = adv_p + adv_q + diff;
        }
}

/// One explicit Euler step of d_tau u0 = A u0.
inline GridField step_u0(const GridField& u0, double dt_tau, const PQGrid& g, const SlowOperator& op) {
    if (!(dt_tau > 0.0)) throw ConfigError("dt_tau must be positive");
    const double limit = stable_dt_u0(g, op);
    if (dt_tau > limit * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "dt_tau=" << dt_tau << " violates the explicit stability limit " << limit;
        throw ConfigError(msg.str());
    }
    GridField au;
    apply_slow_operator(u0, g, op, au);
    GridField out = u0;
    for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] += dt_tau * au.v[k];
    return out;
}

/// Central differences (one-sided with mirror ghosts at the edges).
inline double grad_p(const GridField& u, const PQGrid& g, int i, int j) {
    return (u.ghost(i + 1, j) - u.ghost(i - 1, j)) / (2.0 * g.a.h());
}
inline double grad_q(const GridField& u, const PQGrid& g, int i, int j) {
    return (u.ghost(i, j + 1) - u.ghost(i, j - 1)) / (2.0 * g.b.h());
}

// ---------------------------------------------------------------------------
// Fast (r, s) problem

/// Parameters of L0 at a frozen (p, q).
struct FastOperator {
    double p = 1.0, q = 0.0;
    double nu0 = 1.0;
    double sigma5 = 1.0, sigma7 = 1.0;
    DiffusionConvention diffusion = DiffusionConvention::kIto;
    double floor_sq = 0.0;  // lower bound on p^2 + q^2

    double slow_sq() const { return std::max(p * p + q * q, floor_sq); }
    double rate() const { return slow_sq() / (5.0 * nu0); }
    double D() const { return diffusion == DiffusionConvention::kIto ? nu0 : 2.0 * nu0; }
    OUDensityParams density() const {
        const double a = std::sqrt(slow_sq());
        return {a, 0.0, nu0, sigma5, sigma7};
    }
};

/// Catmull-Rom weights for a point at fractional offset t in [0, 1) from node i;
/// exact for quadratics.
inline std::array<double, 4> catmull_rom_weights(double t) {
    const double t2 = t * t, t3 = t2 * t;
    return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2)};
}

/// Linear functional v -> E_rho[interp(v)] on the grid, built from Gauss-Hermite
/// nodes and Catmull-Rom interpolation (mirror closure at the edges; nodes
/// outside the grid are clamped to the boundary cell centres).
inline std::vector<double> rho_functional(const RSGrid& g, const OUDensityParams& op, int order = 32) {
    const auto rule = gauss_hermite_normal(order);
    const double sr = std::sqrt(op.var_r()), ss = std::sqrt(op.var_s());
    std::vector<double> c(static_cast<std::size_t>(g.size()), 0.0);
    const auto stencil = [](const Grid1D& ax, double x, int& base, std::array<double, 4>& w) {
        const double xi = std::clamp((x - ax.lo) / ax.h() - 0.5, 0.0, static_cast<double>(ax.n - 1));
        base = std::min(static_cast<int>(std::floor(xi)), ax.n - 2);
        w = catmull_rom_weights(xi - base);
    };
    const auto mirror = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
    for (std::size_t a = 0; a < rule.nodes.size(); ++a) {
        int bi;
        std::array<double, 4> wi;
        stencil(g.a, sr * rule.nodes[a], bi, wi);
        for (std::size_t b = 0; b < rule.nodes.size(); ++b) {
            int bj;
            std::array<double, 4> wj;
            stencil(g.b, ss * rule.nodes[b], bj, wj);
            const double w = rule.weights[a] * rule.weights[b];
            for (int di = 0; di < 4; ++di)
                for (int dj = 0; dj < 4; ++dj)
                    c[static_cast<std::size_t>(g.index(mirror(bi - 1 + di, g.a.n), mirror(bj - 1 + dj, g.b.n)))] +=
                        w * wi[di] * wj[dj];
        }
    }
    return c;
}

/// Sparse matrix of -L0 on the grid: central differences where the cell Peclet
/// number is <= 1, upwind elsewhere; mirror ghosts.
inline Eigen::SparseMatrix<double> fast_operator_matrix(const RSGrid& g, const FastOperator& f) {
    const int n = g.size();
    const double hr = g.a.h(), hs = g.b.h();
    const double a = f.rate(), D = f.D();
    const double kr = D * f.sigma5 * f.sigma5, ks = D * f.sigma7 * f.sigma7;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * 5);
    const auto add = [&](int row, int i, int j, double val) {
        i = std::clamp(i, 0, g.a.n - 1);
        j = std::clamp(j, 0, g.b.n - 1);
        trip.emplace_back(row, g.index(i, j), -val);  // -L0
    };
    // drift b * d/dx with b = -a x, diffusion k d2/dx2, along one axis
    const auto axis = [&](int row, int i, int j, double x, double h, double k, bool first) {
        const double b = -a * x;
        const auto at = [&](int d) { return first ? std::pair{i + d, j} : std::pair{i, j + d}; };
        const double pe = std::abs(b) * h / (2.0 * k);
        double wm = k / (h * h), w0 = -2.0 * k / (h * h), wp = k / (h * h);
        if (pe <= 1.0) {
            wm -= b / (2.0 * h);
            wp += b / (2.0 * h);
        } else if (b > 0.0) {
            w0 -= b / h;
            wp += b / h;
        } else {
            wm -= b / h;
            w0 += b / h;
        }
        const auto [im, jm] = at(-1);
        const auto [ip, jp] = at(1);
        add(row, im, jm, wm);
        add(row, i, j, w0);
        add(row, ip, jp, wp);
    };
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const int row = g.index(i, j);
            axis(row, i, j, g.a.x(i), hr, kr, true);
            axis(row, i, j, g.b.x(j), hs, ks, false);
        }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

/// Solves -L0 u = rhs on the (r, s) grid with E_rho[u] = 0. The rhs is
/// projected onto the range of the discrete operator through a Lagrange
/// multiplier. Throws NumericalError if the factorization fails.
inline GridField solve_u2_cell(const RSGrid& g, const FastOperator& f, const GridField& rhs,
                               const std::vector<double>* gauge = nullptr) {
    g.validate("rs grid");
    if (!(f.slow_sq() > 0.0)) throw DomainError("fast problem is singular at p = q = 0");
    const int n = g.size();
    if (static_cast<int>(rhs.v.size()) != n) throw ConfigError("rhs does not match the rs grid");
    std::vector<double> own;
    if (!gauge) {
        own = rho_functional(g, f.density());
        gauge = &own;
    }
    const auto A = fast_operator_matrix(g, f);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(A.nonZeros()) + 2 * static_cast<std::size_t>(n));
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < n; ++k) {
        trip.emplace_back(k, n, 1.0);
        if ((*gauge)[static_cast<std::size_t>(k)] != 0.0) trip.emplace_back(n, k, (*gauge)[static_cast<std::size_t>(k)]);
    }
    Eigen::SparseMatrix<double> B(n + 1, n + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "fast solve failed at (p, q) = (" << f.p << ", " << f.q << ")";
        throw NumericalError(msg.str());
    }
    Eigen::VectorXd b(n + 1);
    for (int k = 0; k < n; ++k) b(k) = rhs.v[static_cast<std::size_t>(k)];
    b(n) = 0.0;
    const Eigen::VectorXd x = lu.solve(b);
    if (lu.info() != Eigen::Success || !x.allFinite()) {
        std::ostringstream msg;
        msg << "fast solve produced a non-finite solution at (p, q) = (" << f.p << ", " << f.q << ")";
        throw NumericalError(msg.str());
    }
    GridField out(g);
    for (int k = 0; k < n; ++k) out.v[static_cast<std::size_t>(k)] = x(k);
    return out;
}

/// E_rho[r d_r v + s d_s v] with central-difference gradients.
inline double radial_derivative_moment(const GridField& v, const RSGrid& g, const std::vector<double>& functional) {
    double sum = 0.0;
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const double dr = (v.ghost(i + 1, j) - v.ghost(i - 1, j)) / (2.0 * g.a.h());
            const double ds = (v.ghost(i, j + 1) - v.ghost(i, j - 1)) / (2.0 * g.b.h());
            sum += functional[static_cast<std::size_t>(g.index(i, j))] * (g.a.x(i) * dr + g.b.x(j) * ds);
        }
    return sum;
}

/// Fast-variable data for one (p, q) cell: V solving L0 V = r^2 + s^2 - m and
/// J = E_rho[r V_r + s V_s].
struct FastCell {
    double m = 0.0;  // E_rho[r^2 + s^2]
    double J = 0.0;
    std::optional<GridField> V;
};

inline FastCell solve_fast_cell(const RSGrid& g, const FastOperator& f, bool keep_field) {
    const auto dens = f.density();
    FastCell cell;
    cell.m = moment_r2s2(dens);
    const auto functional = rho_functional(g, dens);
    GridField rhs(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const double r = g.a.x(i), s = g.b.x(j);
            rhs(i, j) = -(r * r + s * s - cell.m);  // -L0 V = -(r^2 + s^2 - m)
        }
    GridField V = solve_u2_cell(g, f, rhs, &functional);
    cell.J = radial_derivative_moment(V, g, functional);
    if (keep_field) cell.V = std::move(V);
    return cell;
}

/// Closed forms on R^2: V = -(r^2 + s^2 - m) / (2 a), J = -m / a.
inline double analytic_fast_J(const FastOperator& f) {
    return -moment_r2s2(f.density()) / f.rate();
}

// ---------------------------------------------------------------------------
// Cascade

enum class FastSolver { kFiniteDifference, kAnalytic };
enum class SourceVariant { kDerived, kPrinted };  // q-weight 3/50 or 1 in the first u1 source term

struct CascadeConfig {
    PQGrid pq{{-5.0, 5.0, 41}, {-5.0, 5.0, 41}};
    RSGrid rs{{-5.0, 5.0, 41}, {-5.0, 5.0, 41}};
    double nu0 = 1.0;
    ReducedSigmas sigmas = ReducedSigmas::from_alpha0(0.349);
    double epsilon0 = 1.0;
    double tau_end = 10.0;
    std::optional<double> dt_tau;  // default: 0.9 x stability limit, adjusted to divide tau_end
    double save_every = 0.1;
    DiffusionConvention diffusion = DiffusionConvention::kIto;
    SourceVariant source = SourceVariant::kDerived;
    FastSolver fast = FastSolver::kFiniteDifference;
    bool keep_u2 = false;
    unsigned threads = 0;

    SlowOperator slow_operator() const { return {nu0, sigmas, diffusion, 1.0}; }

    void validate() const {
        pq.validate("pq grid");
        rs.validate("rs grid");
        if (!(nu0 > 0.0)) throw ConfigError("nu0 must be positive");
        if (epsilon0 != 1.0 && epsilon0 != -1.0 && epsilon0 != 0.0)
            throw ConfigError("epsilon0 must be -1, 0 or +1");
        if (!(tau_end > 0.0)) throw ConfigError("tau_end must be positive");
        if (!(save_every > 0.0)) throw ConfigError("save_every must be positive");
        if (dt_tau && !(*dt_tau > 0.0)) throw ConfigError("dt_tau must be positive");
        if (!(sigmas.s5 > 0.0) || !(sigmas.s7 > 0.0)) throw ConfigError("sigma5 and sigma7 must be positive");
    }
};

struct CascadeSolution {
    CascadeConfig config;
    double dt_tau = 0.0;
    std::vector<double> tau;
    std::vector<GridField> u0, u1;
    GridField J;  // E_rho[r V_r + s V_s] per (p, q) cell
    GridField m;  // E_rho[r^2 + s^2] per cell
    std::vector<std::optional<GridField>> V;  // per cell when keep_u2

    /// u2 at saved slice `slice` and cell (i, j): k(p, q, tau) V.
    GridField u2(std::size_t slice, int i, int j) const {
        const auto& cell = V.at(static_cast<std::size_t>(config.pq.index(i, j)));
        if (!cell) throw ConfigError("u2 fields were not kept (set keep_u2)");
        const double k = radial_k(u0.at(slice), i, j);
        GridField out = *cell;
        for (double& x : out.v) x *= k;
        return out;
    }

    double radial_k(const GridField& u, int i, int j) const {
        const auto& g = config.pq;
        const double p = g.a.x(i), q = g.b.x(j);
        return 3.0 / (40.0 * config.nu0) * (p * grad_p(u, g, i, j) + q * grad_q(u, g, i, j));
    }
};

/// S[u0] = I0 + I2 at every node.
inline GridField u1_source(const GridField& u0, const CascadeSolution& sol) {
    const auto& cfg = sol.config;
    const auto& g = cfg.pq;
    const double e0 = cfg.epsilon0, nu0 = cfg.nu0;
    const double sig2 = cfg.sigmas.s5 * cfg.sigmas.s5 + cfg.sigmas.s7 * cfg.sigmas.s7;
    const double qweight = cfg.source == SourceVariant::kDerived ? 3.0 / 50.0 : 1.0;
    GridField s(g);
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) {
            const double p = g.a.x(i), q = g.b.x(j);
            const double up = grad_p(u0, g, i, j), uq = grad_q(u0, g, i, j);
            const double a = floored_radius_sq(p, q, g);
            const double i0 = 5.0 * e0 * nu0 * sig2 * (27.0 / 200.0 * p * up - qweight * q * uq) / a;
            const double k = 3.0 / (40.0 * nu0) * (p * up + q * uq);
            const double i2 = -e0 / (100.0 * nu0) * (51.0 * p * p - 31.0 * q * q) * k * sol.J(i, j);
            s(i, j) = i0 + i2;
        }
    return s;
}

/// Fills J, m (and V) for every (p, q) cell.
inline void solve_fast_cells(CascadeSolution& sol) {
    const auto& cfg = sol.config;
    const auto& g = cfg.pq;
    sol.J = GridField(g);
    sol.m = GridField(g);
    sol.V.assign(static_cast<std::size_t>(g.size()), std::nullopt);
    const double h = std::min(g.a.h(), g.b.h());
    const auto fast_op = [&](int i, int j) {
        FastOperator f{g.a.x(i), g.b.x(j), cfg.nu0, cfg.sigmas.s5, cfg.sigmas.s7, cfg.diffusion, 0.25 * h * h};
        return f;
    };
    if (cfg.fast == FastSolver::kAnalytic && !cfg.keep_u2) {
        for (int j = 0; j < g.b.n; ++j)
            for (int i = 0; i < g.a.n; ++i) {
                const auto f = fast_op(i, j);
                sol.J(i, j) = analytic_fast_J(f);
                sol.m(i, j) = moment_r2s2(f.density());
            }
        return;
    }
    const unsigned workers = std::max(1u, cfg.threads ? cfg.threads : std::thread::hardware_concurrency());
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(workers);
    const auto work = [&](unsigned w) {
        try {
            for (int k = next++; k < g.size(); k = next++) {
                const int i = k % g.a.n, j = k / g.a.n;
                const auto f = fast_op(i, j);
                FastCell cell = solve_fast_cell(cfg.rs, f, cfg.keep_u2);
                sol.J(i, j) = cfg.fast == FastSolver::kAnalytic ? analytic_fast_J(f) : cell.J;
                sol.m(i, j) = cell.m;
                if (cfg.keep_u2) sol.V[static_cast<std::size_t>(k)] = std::move(cell.V);
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
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Marches u0 and u1 from tau = 0 to tau_end with u0(0) = phi, u1(0) = 0.
inline CascadeSolution solve_cascade(const CascadeConfig& config) {
    config.validate();
    CascadeSolution sol;
    sol.config = config;
    const auto& g = config.pq;
    const auto op = config.slow_operator();
    const double limit = stable_dt_u0(g, op);
    double dt = config.dt_tau.value_or(0.9 * limit);
    if (dt > limit * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "dt_tau=" << dt << " violates the explicit stability limit " << limit;
        throw ConfigError(msg.str());
    }
    // Round so that both tau_end and save_every are whole multiples of dt.
    const auto save_steps = static_cast<std::int64_t>(std::ceil(config.save_every / dt - 1e-9));
    dt = config.save_every / static_cast<double>(save_steps);
    const auto n_saves = static_cast<std::int64_t>(std::llround(config.tau_end / config.save_every));
    if (std::abs(static_cast<double>(n_saves) * config.save_every - config.tau_end) > 1e-9 * config.tau_end)
        throw ConfigError("tau_end must be a multiple of save_every");
    sol.dt_tau = dt;

    solve_fast_cells(sol);

    GridField u0 = phi_field(g);
    GridField u1(g);
    sol.tau.push_back(0.0);
    sol.u0.push_back(u0);
    sol.u1.push_back(u1);
    GridField a0, a1;
    for (std::int64_t s = 1; s <= n_saves; ++s) {
        for (std::int64_t k = 0; k < save_steps; ++k) {
            apply_slow_operator(u0, g, op, a0);
            apply_slow_operator(u1, g, op, a1);
            const GridField src = u1_source(u0, sol);
            for (std::size_t n = 0; n < u0.v.size(); ++n) {
                u0.v[n] += dt * a0.v[n];
                u1.v[n] += dt * (a1.v[n] + src.v[n]);
            }
        }
        for (double x : u1.v)
            if (!std::isfinite(x)) throw NumericalError("cascade: non-finite u1", static_cast<double>(s) * config.save_every);
        sol.tau.push_back(static_cast<double>(s) * config.save_every);
        sol.u0.push_back(u0);
        sol.u1.push_back(u1);
    }
    return sol;
}

/// Bilinear interpolation of a grid field at (p, q), clamped to the node range.
inline double interpolate(const GridField& f, const PQGrid& g, double p, double q) {
    const auto locate = [](const Grid1D& ax, double x, int& i, double& w) {
        const double xi = std::clamp((x - ax.lo) / ax.h() - 0.5, 0.0, static_cast<double>(ax.n - 1));
        i = std::min(static_cast<int>(std::floor(xi)), ax.n - 2);
        w = xi - i;
    };
    int i, j;
    double wp, wq;
    locate(g.a, p, i, wp);
    locate(g.b, q, j, wq);
    return (1 - wp) * (1 - wq) * f(i, j) + wp * (1 - wq) * f(i + 1, j) + (1 - wp) * wq * f(i, j + 1) +
           wp * wq * f(i + 1, j + 1);
}

/// tau = eps t (the scaling tau = eps^gamma t with gamma = 1) or tau = t / eps.
enum class TimeMap { kScaled, kInverse };

inline double tau_of_t(double t, double epsilon, TimeMap map) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    return map == TimeMap::kScaled ? epsilon * t : t / epsilon;
}

/// u0(tau) + eps u1(tau) over the pq grid with linear interpolation in tau.
inline GridField uhat(const CascadeSolution& sol, double epsilon, double t, TimeMap map = TimeMap::kScaled) {
    const double tau = tau_of_t(t, epsilon, map);
    if (tau < 0.0 || tau > sol.tau.back() + 1e-12) {
        std::ostringstream msg;
        msg << "tau=" << tau << " lies outside the solved range [0, " << sol.tau.back() << "]";
        throw ConfigError(msg.str());
    }
    const double step = sol.config.save_every;
    const auto k = std::min(static_cast<std::size_t>(tau / step), sol.tau.size() - 2);
    const double w = std::clamp((tau - sol.tau[k]) / step, 0.0, 1.0);
    GridField out(sol.config.pq);
    for (std::size_t n = 0; n < out.v.size(); ++n) {
        const double a = sol.u0[k].v[n] + epsilon * sol.u1[k].v[n];
        const double b = sol.u0[k + 1].v[n] + epsilon * sol.u1[k + 1].v[n];
        out.v[n] = (1.0 - w) * a + w * b;
    }
    return out;
}

/// u-hat at a single point (p, q) on the time grid `t`.
inline std::vector<double> uhat_series(const CascadeSolution& sol, double epsilon, double p, double q,
                                       const std::vector<double>& t, TimeMap map = TimeMap::kScaled) {
    std::vector<double> out;
    out.reserve(t.size());
    for (double ti : t) out.push_back(interpolate(uhat(sol, epsilon, ti, map), sol.config.pq, p, q));
    return out;
}

/// |u - z| / z pointwise; NaN where z == 0.
inline std::vector<double> relative_error(const std::vector<double>& u, const std::vector<double>& z) {
    if (u.size() != z.size()) throw ConfigError("relative_error: series lengths differ");
    std::vector<double> re(u.size());
    for (std::size_t k = 0; k < u.size(); ++k)
        re[k] = z[k] == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::abs(u[k] - z[k]) / z[k];
    return re;
}

/// Length of the initial interval on which re < threshold.
inline double initial_window_length(const std::vector<double>& t, const std::vector<double>& re, double threshold) {
    if (t.size() != re.size() || t.empty()) throw ConfigError("initial_window_length: bad series");
    for (std::size_t k = 0; k < t.size(); ++k)
        if (!(re[k] < threshold)) return t[k] - t.front();
    return t.back() - t.front();
}

/// Resamples (t_src, f_src) onto t by linear interpolation.
inline std::vector<double> resample(const std::vector<double>& t_src, const std::vector<double>& f_src,
                                    const std::vector<double>& t) {
    if (t_src.size() != f_src.size() || t_src.size() < 2) throw ConfigError("resample: bad source series");
    std::vector<double> out;
    out.reserve(t.size());
    for (double x : t) {
        if (x < t_src.front() - 1e-12 || x > t_src.back() + 1e-12) throw ConfigError("resample: point outside range");
        auto it = std::upper_bound(t_src.begin(), t_src.end(), x);
        std::size_t j = static_cast<std::size_t>(it - t_src.begin());
        j = std::clamp<std::size_t>(j, 1, t_src.size() - 1);
        const double w = (x - t_src[j - 1]) / (t_src[j] - t_src[j - 1]);
        out.push_back((1.0 - w) * f_src[j - 1] + w * f_src[j]);
    }
    return out;
}

}  // namespace qss
