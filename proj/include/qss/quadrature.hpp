#pragma once

// Gauss-Hermite rules (Golub-Welsch) for expectations under Gaussian densities.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "qss/errors.hpp"

namespace qss {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Probabilists' rule: sum_i w_i f(x_i) ~ E[f(X)], X ~ N(0, 1). Exact for
/// polynomials of degree <= 2n - 1.
inline QuadratureRule gauss_hermite_normal(int n) {
    if (n < 1) throw ConfigError("Gauss-Hermite order must be >= 1");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = eig.eigenvalues()(i);
        const double v = eig.eigenvectors()(0, i);
        rule.weights[i] = v * v;
    }
    return rule;
}

/// E[f(R, S)] for independent R ~ N(0, var_r), S ~ N(0, var_s).
template <class F>
double gaussian_expectation_2d(F&& f, double var_r, double var_s, const QuadratureRule& rule) {
    const double sr = std::sqrt(var_r), ss = std::sqrt(var_s);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        for (std::size_t j = 0; j < rule.nodes.size(); ++j)
            sum += rule.weights[i] * rule.weights[j] * f(sr * rule.nodes[i], ss * rule.nodes[j]);
    return sum;
}

}  // namespace qss
