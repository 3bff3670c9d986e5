#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "flowreg/error.hpp"

namespace flowreg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

// Largest eigenvalue of a symmetric matrix by power iteration on S + shift*Id,
// where the Gershgorin shift makes the spectrum nonnegative.
inline double power_iteration_top(const Mat& S, double tol = 1e-10, int max_iter = 10000) {
    const Eigen::Index n = S.rows();
    double shift = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) shift = std::max(shift, S.row(i).cwiseAbs().sum());
    const Mat shifted = S + shift * Mat::Identity(n, n);

    Vec v = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
    double rayleigh = v.dot(shifted * v);
    for (int it = 0; it < max_iter; ++it) {
        Vec w = shifted * v;
        const double norm = w.norm();
        if (norm == 0.0) return -shift;
        v = w / norm;
        const double next = v.dot(shifted * v);
        if (std::abs(next - rayleigh) <= tol * std::max(1.0, std::abs(next))) {
            rayleigh = next;
            break;
        }
        rayleigh = next;
    }
    return rayleigh - shift;
}

}  // namespace detail

/// Top eigenvalue of the symmetric part (J + J^T)/2. Dense eigen-solve up to
/// dimension 64, power iteration above.
inline double lambda_max(const Mat& jac) {
    const Mat sym = 0.5 * (jac + jac.transpose());
    if (sym.rows() == 1) return sym(0, 0);
    if (sym.rows() <= 64) {
        Eigen::SelfAdjointEigenSolver<Mat> solver(sym, Eigen::EigenvaluesOnly);
        return solver.eigenvalues().maxCoeff();
    }
    return detail::power_iteration_top(sym);
}

/// Spectral norm.
inline double op_norm(const Mat& jac) {
    if (jac.rows() == 1 && jac.cols() == 1) return std::abs(jac(0, 0));
    if (jac.rows() <= 64) {
        Eigen::JacobiSVD<Mat> svd(jac);
        return svd.singularValues()(0);
    }
    const Mat gram = jac.transpose() * jac;
    return std::sqrt(std::max(0.0, detail::power_iteration_top(gram)));
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace flowreg
