#pragma once

#include <Eigen/SVD>
#include <cmath>

#include "mtsr/errors.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

/// Proximal operator of tau*||.||_1: elementwise sign(v) * max(|v| - tau, 0).
template <typename Derived>
auto soft_threshold(const Eigen::MatrixBase<Derived>& v, double tau) {
    if (tau < 0.0) throw invalid_input("soft_threshold: tau must be >= 0");
    using Plain = typename Derived::PlainObject;
    Plain out = v.derived();
    for (Eigen::Index j = 0; j < out.cols(); ++j)
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double x = out(i, j);
            const double mag = std::abs(x) - tau;
            out(i, j) = mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
        }
    return out;
}

inline double soft_threshold(double v, double tau) {
    if (tau < 0.0) throw invalid_input("soft_threshold: tau must be >= 0");
    const double mag = std::abs(v) - tau;
    return mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
}

/// Proximal operator of tau*||.||_* : soft-thresholds the singular values.
inline Matrix singular_value_threshold(const Matrix& W, double tau) {
    if (tau < 0.0) throw invalid_input("singular_value_threshold: tau must be >= 0");
    if (!W.allFinite()) throw numeric_error("singular_value_threshold: non-finite input", 0);
    Eigen::BDCSVD<Matrix> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector sigma = svd.singularValues();
    for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma(i) = std::max(sigma(i) - tau, 0.0);
    return svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace mtsr
