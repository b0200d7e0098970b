#pragma once

namespace qss {

/// Relative low-mode energy E_x / (E_x + E_y). When both energies vanish the
/// value is reported as 1/2 with `degenerate` set.
struct OrderParameter {
    double value = 0.5;
    bool degenerate = false;
};

constexpr OrderParameter order_parameter_from_energies(double ex, double ey) {
    const double total = ex + ey;
    if (total == 0.0) return {0.5, true};
    return {ex / total, false};
}

}  // namespace qss
