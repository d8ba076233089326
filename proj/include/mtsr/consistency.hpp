#pragma once

#include <cmath>
#include <vector>

#include "mtsr/dataset.hpp"
#include "mtsr/errors.hpp"
#include "mtsr/types.hpp"

namespace mtsr {

/// Per-sample expert-inconsistency weights for one task; every entry >= 1.
struct PsiVector {
    int task_id = 0;
    Vector values;
};

/// Inconsistency of one sample's rater scores:
///   exp( sum_i (x_i - mu)^2 / (2 sigma^2) )
/// with mu, sigma the population mean and standard deviation of the scores.
/// Unanimous raters (sigma = 0) give exactly 1, the continuous limit.
inline double inconsistency_score(const std::vector<double>& rater_scores) {
    if (rater_scores.empty()) throw invalid_input("inconsistency_score: empty rater list");
    const auto r = static_cast<double>(rater_scores.size());
    double mu = 0.0;
    for (double x : rater_scores) {
        if (!std::isfinite(x)) throw invalid_input("inconsistency_score: non-finite score");
        mu += x;
    }
    mu /= r;
    double ss = 0.0;
    for (double x : rater_scores) ss += (x - mu) * (x - mu);
    const double var = ss / r;
    if (var == 0.0) return 1.0;
    return std::exp(ss / (2.0 * var));
}

inline PsiVector compute_psi(const TaskDataset& ds) {
    if (!ds.raters)
        throw invalid_input("compute_psi: task '" + ds.name +
                            "' has no rater data; supply a raters file or disable psi");
    PsiVector psi;
    psi.task_id = ds.task_id;
    psi.values.resize(ds.n());
    for (Eigen::Index j = 0; j < ds.n(); ++j)
        psi.values(j) = inconsistency_score((*ds.raters)[static_cast<std::size_t>(j)]);
    return psi;
}

/// Row-broadcast feature perturbation: X~[j][k] = X[j][k] + psi[j].
/// Disabled returns X unchanged, giving the plain (psi-free) objective.
inline Matrix augment_features(const Matrix& X, const PsiVector& psi, bool enabled) {
    if (!enabled) return X;
    if (psi.values.size() != X.rows())
        throw dimension_error("augment_features: psi length " + std::to_string(psi.values.size()) +
                              " != sample count " + std::to_string(X.rows()));
    return X.colwise() + psi.values;
}

}  // namespace mtsr
